// Command-line front end: schedule tables, exact-posterior diagnostics,
// training, sampling, evaluation and the toy ablation grid.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ddgan/config.hpp"
#include "ddgan/eval.hpp"
#include "ddgan/mixture.hpp"
#include "ddgan/posterior.hpp"
#include "ddgan/presets.hpp"
#include "ddgan/sampling.hpp"
#include "ddgan/schedule.hpp"
#include "ddgan/training.hpp"

namespace fs = std::filesystem;
using namespace ddgan;

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string g_invocation;

void echo_invocation(const fs::path& out) {
    write_text_file(out / "invocation.txt", g_invocation + "\n");
}

GaussianMixture dataset_from_flags(const std::string& name, double stddev, double center) {
    TrainConfig probe;
    probe.dataset = name;
    probe.dataset_std = stddev;
    probe.dataset_center = center;
    return make_dataset(probe);
}

// ---- schedule ---------------------------------------------------------------

int cmd_schedule(std::size_t T, double beta_min, double beta_max) {
    DiffusionSchedule s(T, beta_min, beta_max);
    std::cout << "t,beta,alpha_bar,sigma2\n";
    for (std::size_t t = 1; t <= T; ++t) {
        const double u = static_cast<double>(t) / static_cast<double>(T);
        std::cout << t << "," << fmt(s.beta(t)) << "," << fmt(s.alpha_bar(t)) << ","
                  << fmt(s.sigma2(u)) << "\n";
    }
    return 0;
}

// ---- equivalence-check --------------------------------------------------------

int cmd_equivalence(std::size_t T, std::size_t trials, std::uint64_t seed) {
    DiffusionSchedule s(T);
    EquivalenceReport rep = ddpm_equivalence_check(s, trials, seed);
    std::cout << (rep.pass ? "PASS" : "FAIL") << " ddpm-equivalence T=" << T
              << " trials=" << rep.trials << " max_mean_dev=" << fmt(rep.max_mean_dev)
              << " max_sigma_dev=" << fmt(rep.max_sigma_dev)
              << " last_step_dev=" << fmt(rep.max_last_step_dev) << "\n";
    if (!rep.pass)
        std::cout << "violation at t=" << rep.fail_t << " xt=" << fmt(rep.fail_xt)
                  << " eps=" << fmt(rep.fail_eps) << "\n";
    return rep.pass ? 0 : 1;
}

// ---- oracle -------------------------------------------------------------------

int cmd_oracle(const fs::path& out, const std::string& dataset, double stddev, double center,
               std::size_t T, std::size_t t, std::vector<std::size_t> gaps, double x_t,
               std::size_t grid_points) {
    ensure_dir(out);
    echo_invocation(out);
    GaussianMixture mix = dataset_from_flags(dataset, stddev, center);
    if (mix.dim != 1) throw ConfigError("oracle: density curves require a 1-D dataset");
    DiffusionSchedule sched(T);

    std::ofstream curves(out / "curves.csv");
    curves << "gap,s,x,density\n";
    std::ofstream summary(out / "summary.csv");
    summary << "gap,s,kl_to_gaussian,local_maxima,quadrature_mass\n";
    for (std::size_t gap : gaps) {
        if (gap >= t) throw ConfigError("oracle: gap must be smaller than t");
        const std::size_t s = t - gap;
        DenoisingPosterior post = true_denoising_posterior(mix, sched, {x_t}, t, s);
        const double m = post.mix.mean1d();
        const double sd = std::sqrt(post.mix.var1d());
        for (std::size_t i = 0; i < grid_points; ++i) {
            const double x = m - 5 * sd +
                             10 * sd * static_cast<double>(i) /
                                 static_cast<double>(grid_points - 1);
            curves << gap << "," << s << "," << fmt(x) << "," << fmt(post.mix.pdf({x})) << "\n";
        }
        summary << gap << "," << s << "," << fmt(gaussian_fit_kl(post)) << ","
                << count_local_maxima(post) << "," << fmt(quadrature_mass(post)) << "\n";
    }
    std::cout << "wrote " << (out / "curves.csv").string() << " and "
              << (out / "summary.csv").string() << "\n";
    return 0;
}

// ---- train --------------------------------------------------------------------

void write_metrics_csv(const fs::path& path, const std::vector<MetricsRecord>& metrics,
                       std::size_t T) {
    std::ofstream os(path);
    os << "iteration,d_loss,g_loss,r1";
    for (std::size_t t = 1; t <= T; ++t) os << ",d_loss_t" << t;
    os << "\n";
    for (const auto& m : metrics) {
        os << m.iteration << "," << fmt(m.d_loss) << "," << fmt(m.g_loss) << "," << fmt(m.r1);
        for (double v : m.d_loss_per_t) os << "," << fmt(v);
        os << "\n";
    }
}

int cmd_train(const std::string& config_file, const std::string& preset_name,
              const fs::path& out, std::int64_t seed_override, std::int64_t iter_override,
              bool quiet) {
    TrainConfig cfg;
    if (!config_file.empty() && !preset_name.empty())
        throw ConfigError("train: give either --config or --preset, not both");
    if (!config_file.empty())
        cfg = load_train_config(config_file);
    else if (!preset_name.empty())
        cfg = find_preset(preset_name).config;
    else
        throw ConfigError("train: need --config or --preset");
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    if (iter_override >= 0) cfg.iterations = static_cast<std::size_t>(iter_override);

    ensure_dir(out);
    echo_invocation(out);
    write_text_file(out / "config_echo.cfg", serialize_train_config(cfg));

    std::ofstream timing(out / "timing.csv");
    timing << "iteration,wall_seconds\n";
    std::vector<MetricsRecord> metrics;
    GaussianMixture data = make_dataset(cfg);

    TrainResult res = train(
        cfg, data,
        [&](const MetricsRecord& m) {
            metrics.push_back(m);
            timing << m.iteration << "," << fmt(m.wall_seconds) << "\n";
            if (!quiet)
                std::cerr << "iter " << m.iteration << " d=" << m.d_loss << " g=" << m.g_loss
                          << " r1=" << m.r1 << "\n";
        },
        [&](std::size_t it, const Checkpoint& ck) {
            const bool final_ck = it == cfg.iterations;
            save_checkpoint(out / (final_ck ? std::string("checkpoint.bin")
                                            : "checkpoint_" + std::to_string(it) + ".bin"),
                            ck);
        });

    // the metrics CSV is the determinism artifact; wall clock goes to timing.csv
    write_metrics_csv(out / "metrics.csv", metrics, cfg.T);
    std::cout << "trained " << cfg.iterations << " iterations -> " << out.string() << "\n";
    return 0;
}

// ---- sample -------------------------------------------------------------------

int cmd_sample(const fs::path& ckpt_path, std::size_t n, std::uint64_t seed, bool use_ema,
               bool use_raw, const fs::path& out, const std::vector<double>& cond_x,
               std::int64_t cond_t, std::size_t fan) {
    if (use_ema == use_raw)
        throw ConfigError("sample: choose exactly one of --ema / --raw");
    Checkpoint ck = load_checkpoint(ckpt_path);
    TrainConfig cfg = config_from_checkpoint(ck);
    auto g = generator_from_checkpoint(ck, use_ema ? WeightChoice::ema : WeightChoice::raw);
    DiffusionSchedule sched = schedule_from_checkpoint(ck);
    ensure_dir(out);
    echo_invocation(out);

    Rng rng(seed);
    Tensor samples;
    SampleSummary summary;
    if (!cond_x.empty()) {
        if (cond_t < 1) throw ConfigError("sample: conditional mode needs --cond-t >= 1");
        samples = conditional_fan(*g, sched, cond_x, static_cast<std::size_t>(cond_t), fan, rng);
        summary.n = fan;
        summary.T = sched.steps();
        summary.nfe_per_sample = static_cast<std::size_t>(cond_t);
        summary.seed = seed;
    } else {
        samples = generate(*g, sched, n, rng, &summary, cfg.aug_baseline);
    }

    std::ofstream os(out / "samples.csv");
    const std::size_t dim = samples.shape()[1];
    for (std::size_t j = 0; j < dim; ++j) os << (j ? "," : "") << "x" << j;
    os << "\n";
    for (std::size_t i = 0; i < samples.shape()[0]; ++i) {
        for (std::size_t j = 0; j < dim; ++j) os << (j ? "," : "") << fmt(samples.at(i * dim + j));
        os << "\n";
    }

    std::ostringstream js;
    js << "{\n"
       << "  \"seed\": " << summary.seed << ",\n"
       << "  \"n\": " << summary.n << ",\n"
       << "  \"T\": " << summary.T << ",\n"
       << "  \"nfe_per_sample\": " << summary.nfe_per_sample << ",\n"
       << "  \"weights\": \"" << (use_ema ? "ema" : "raw") << "\",\n"
       << "  \"wall_seconds\": " << fmt(summary.wall_seconds) << ",\n"
       << "  \"wall_per_100\": " << fmt(summary.wall_per_100) << "\n"
       << "}\n";
    write_text_file(out / "summary.json", js.str());
    std::cout << "wrote " << (out / "samples.csv").string() << "\n";
    return 0;
}

// ---- eval ---------------------------------------------------------------------

Tensor load_samples_csv(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("eval: cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw IoError("eval: empty samples file " + path.string());
    std::vector<double> values;
    std::size_t dim = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t d = 0;
        while (std::getline(ss, cell, ',')) {
            values.push_back(std::stod(cell));
            ++d;
        }
        if (dim == 0)
            dim = d;
        else if (d != dim)
            throw IoError("eval: ragged row in " + path.string());
    }
    if (dim == 0) throw IoError("eval: no samples in " + path.string());
    return Tensor::constant({values.size() / dim, dim}, values);
}

int cmd_eval(const std::vector<std::string>& sample_files, std::vector<std::string> labels,
             const std::string& dataset, double stddev, double center, double radius,
             const fs::path& out) {
    GaussianMixture mix = dataset_from_flags(dataset, stddev, center);
    ensure_dir(out);
    echo_invocation(out);
    while (labels.size() < sample_files.size())
        labels.push_back("run" + std::to_string(labels.size()));

    std::vector<RunSummary> rows;
    for (std::size_t i = 0; i < sample_files.size(); ++i) {
        Tensor samples = load_samples_csv(sample_files[i]);
        ModeReport rep = mode_report(samples, mix, radius);
        if (rep.low_sample_warning)
            std::cerr << "warning: " << labels[i] << ": fewer than 10x total_modes samples\n";
        write_text_file(out / ("report_" + labels[i] + ".json"),
                        report_to_json(rep, labels[i]));
        rows.push_back({labels[i],
                        {{"modes_covered", std::to_string(rep.modes_covered)},
                         {"total_modes", std::to_string(rep.total_modes)},
                         {"high_quality_fraction", fmt(rep.high_quality_fraction)},
                         {"mode_kl", fmt(rep.mode_kl)},
                         {"n_samples", std::to_string(rep.n_samples)}}});
    }
    write_text_file(out / "comparison.csv", compare_runs(rows));
    std::cout << "wrote " << (out / "comparison.csv").string() << "\n";
    return 0;
}

// ---- ablate -------------------------------------------------------------------

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_ablate(const std::string& preset_name, std::vector<std::string> cell_names,
               const std::vector<std::size_t>& grid_T,
               const std::vector<std::string>& grid_parametrization,
               const std::vector<std::string>& grid_latent, std::size_t seeds,
               std::uint64_t seed_base, std::int64_t iter_override, std::int64_t batch_override,
               std::size_t n_eval, const fs::path& out, bool quiet) {
    TrainConfig base = find_preset(preset_name).config;
    if (iter_override >= 0) base.iterations = static_cast<std::size_t>(iter_override);
    if (batch_override >= 0) base.batch_size = static_cast<std::size_t>(batch_override);
    ensure_dir(out);
    echo_invocation(out);

    std::vector<AblationCell> cells;
    const bool gridded = !grid_T.empty() || !grid_parametrization.empty() || !grid_latent.empty();
    if (gridded) {
        // requested subset of the full T x parametrization x latent grid
        auto Ts = grid_T.empty() ? std::vector<std::size_t>{1, 2, 4, 8} : grid_T;
        auto parms = grid_parametrization.empty()
                         ? std::vector<std::string>{"x0", "direct", "noise"}
                         : grid_parametrization;
        std::vector<bool> latents;
        if (grid_latent.empty()) {
            latents = {true, false};
        } else {
            for (const auto& l : grid_latent) {
                if (l == "on")
                    latents.push_back(true);
                else if (l == "off")
                    latents.push_back(false);
                else
                    throw ConfigError("ablate: --grid-latent takes 'on' or 'off'");
            }
        }
        for (auto T : Ts)
            for (const auto& parm : parms)
                for (bool lat : latents) {
                    parse_parametrization(parm);
                    AblationCell c;
                    c.name = "T" + std::to_string(T) + "-" + parm + (lat ? "" : "-nolatent");
                    c.T = T;
                    c.parametrization = parm;
                    c.latent_enabled = lat;
                    cells.push_back(c);
                }
    } else if (cell_names.empty()) {
        cells = ablation_cells();
    } else {
        for (const auto& want : cell_names) {
            bool found = false;
            for (const auto& c : ablation_cells())
                if (c.name == want) {
                    cells.push_back(c);
                    found = true;
                }
            if (!found) throw ConfigError("ablate: unknown cell '" + want + "'");
        }
    }

    std::vector<RunSummary> rows;
    for (const auto& cell : cells) {
        std::vector<double> modes, kls, hqs;
        for (std::size_t k = 0; k < seeds; ++k) {
            TrainConfig cfg = cell.apply(base);
            cfg.seed = seed_base + k;
            const fs::path run_dir = out / cell.name / ("seed" + std::to_string(cfg.seed));
            ensure_dir(run_dir);
            write_text_file(run_dir / "config_echo.cfg", serialize_train_config(cfg));

            GaussianMixture data = make_dataset(cfg);
            std::vector<MetricsRecord> metrics;
            TrainResult res =
                train(cfg, data, [&](const MetricsRecord& m) { metrics.push_back(m); });
            write_metrics_csv(run_dir / "metrics.csv", metrics, cfg.T);
            save_checkpoint(run_dir / "checkpoint.bin", res.checkpoint);

            auto g = generator_from_checkpoint(res.checkpoint, WeightChoice::ema);
            DiffusionSchedule sched(cfg.T, cfg.beta_min, cfg.beta_max);
            Rng rng(cfg.seed ^ 0x5eedULL);
            Tensor samples = generate(*g, sched, n_eval, rng, nullptr, cfg.aug_baseline);
            ModeReport rep = mode_report(samples, data);
            write_text_file(run_dir / "report.json", report_to_json(rep, cell.name));
            modes.push_back(static_cast<double>(rep.modes_covered));
            kls.push_back(rep.mode_kl);
            hqs.push_back(rep.high_quality_fraction);
            if (!quiet)
                std::cerr << cell.name << " seed " << cfg.seed << ": modes "
                          << rep.modes_covered << "/" << rep.total_modes
                          << " hq=" << rep.high_quality_fraction << " kl=" << rep.mode_kl
                          << "\n";
        }
        rows.push_back({cell.name,
                        {{"T", std::to_string(cell.T)},
                         {"parametrization", cell.parametrization},
                         {"latent", cell.latent_enabled ? "on" : "off"},
                         {"aug_baseline", cell.aug_baseline ? "true" : "false"},
                         {"seeds", std::to_string(seeds)},
                         {"median_modes", fmt(median_of(modes))},
                         {"median_mode_kl", fmt(median_of(kls))},
                         {"median_hq_fraction", fmt(median_of(hqs))}}});
    }
    write_text_file(out / "comparison.csv", compare_runs(rows));
    std::cout << "wrote " << (out / "comparison.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 0; i < argc; ++i) g_invocation += (i ? " " : "") + std::string(argv[i]);
    CLI::App app{"denoising diffusion GAN toolkit (schedules, exact posteriors, training, "
                 "sampling, evaluation)"};
    app.require_subcommand(1);

    // schedule
    std::size_t sch_T = 4;
    double sch_bmin = DiffusionSchedule::kDefaultBetaMin;
    double sch_bmax = DiffusionSchedule::kDefaultBetaMax;
    auto* sch = app.add_subcommand("schedule", "print the discrete schedule table as CSV");
    sch->add_option("--T", sch_T, "number of steps");
    sch->add_option("--beta-min", sch_bmin, "VP beta_min");
    sch->add_option("--beta-max", sch_bmax, "VP beta_max");

    // equivalence-check
    std::size_t eq_T = 4, eq_trials = 1000;
    std::uint64_t eq_seed = 0;
    auto* eq = app.add_subcommand("equivalence-check",
                                  "verify the noise-prediction update against the posterior");
    eq->add_option("--T", eq_T, "number of steps");
    eq->add_option("--trials", eq_trials, "random trials");
    eq->add_option("--seed", eq_seed, "rng seed");

    // oracle
    fs::path or_out;
    std::string or_dataset = "bimodal1d";
    double or_std = 0.1, or_center = 1.0, or_xt = 0.0;
    std::size_t or_T = 6, or_t = 5, or_grid = 2001;
    std::vector<std::size_t> or_gaps{1, 2, 4};
    auto* orc = app.add_subcommand(
        "oracle", "exact denoising-posterior curves and non-Gaussianity summary");
    orc->add_option("--out", or_out, "output directory")->required();
    orc->add_option("--dataset", or_dataset, "bimodal1d (1-D mixtures only)");
    orc->add_option("--std", or_std, "component stddev");
    orc->add_option("--center", or_center, "component centers at +-center");
    orc->add_option("--T", or_T, "schedule steps");
    orc->add_option("--t", or_t, "conditioning step t");
    orc->add_option("--gaps", or_gaps, "step gaps t-s to evaluate");
    orc->add_option("--x-t", or_xt, "conditioning point");
    orc->add_option("--grid", or_grid, "curve grid points");

    // train
    std::string tr_config, tr_preset;
    fs::path tr_out;
    std::int64_t tr_seed = -1, tr_iters = -1;
    bool tr_quiet = false;
    auto* tr = app.add_subcommand("train", "run the adversarial training loop");
    tr->add_option("--config", tr_config, "config file (key = value lines)");
    tr->add_option("--preset", tr_preset, "built-in preset name");
    tr->add_option("--out", tr_out, "artifact directory")->required();
    tr->add_option("--seed", tr_seed, "override the config seed");
    tr->add_option("--iterations", tr_iters, "override the iteration count");
    tr->add_flag("--quiet", tr_quiet, "suppress progress lines");

    // sample
    fs::path sm_ckpt, sm_out;
    std::size_t sm_n = 1000, sm_fan = 100;
    std::uint64_t sm_seed = 0;
    bool sm_ema = false, sm_raw = false;
    std::vector<double> sm_cond_x;
    std::int64_t sm_cond_t = -1;
    auto* sm = app.add_subcommand("sample", "generate samples from a checkpoint");
    sm->add_option("--checkpoint", sm_ckpt, "checkpoint file")->required();
    sm->add_option("--n", sm_n, "number of samples");
    sm->add_option("--seed", sm_seed, "rng seed");
    sm->add_flag("--ema", sm_ema, "use EMA weights");
    sm->add_flag("--raw", sm_raw, "use raw weights");
    sm->add_option("--out", sm_out, "output directory")->required();
    sm->add_option("--cond-x", sm_cond_x, "conditioning point (fan mode)");
    sm->add_option("--cond-t", sm_cond_t, "conditioning step (fan mode)");
    sm->add_option("--fan", sm_fan, "fan size in conditional mode");

    // eval
    std::vector<std::string> ev_samples, ev_labels;
    std::string ev_dataset = "25gaussians";
    double ev_std = 0.05, ev_center = 1.0, ev_radius = 3.0;
    fs::path ev_out;
    auto* ev = app.add_subcommand("eval", "mode-coverage report for sample CSVs");
    ev->add_option("--samples", ev_samples, "sample CSV file(s)")->required();
    ev->add_option("--label", ev_labels, "label per samples file");
    ev->add_option("--dataset", ev_dataset, "reference mixture");
    ev->add_option("--std", ev_std, "mixture stddev");
    ev->add_option("--center", ev_center, "bimodal1d centers");
    ev->add_option("--radius", ev_radius, "quality radius in mode stddevs");
    ev->add_option("--out", ev_out, "output directory")->required();

    // ablate
    std::string ab_preset = "table3-toy";
    std::vector<std::string> ab_cells;
    std::size_t ab_seeds = 5, ab_neval = 4000;
    std::uint64_t ab_seed_base = 1;
    std::int64_t ab_iters = -1, ab_batch = -1;
    fs::path ab_out;
    bool ab_quiet = false;
    auto* ab = app.add_subcommand("ablate", "run the toy ablation grid and compare cells");
    ab->add_option("--preset", ab_preset, "base config preset");
    ab->add_option("--cells", ab_cells, "subset of the named cells (default: all)");
    std::vector<std::size_t> ab_grid_T;
    std::vector<std::string> ab_grid_parm, ab_grid_latent;
    ab->add_option("--grid-T", ab_grid_T, "grid mode: step counts (default 1 2 4 8)");
    ab->add_option("--grid-parametrization", ab_grid_parm,
                   "grid mode: parametrizations (default x0 direct noise)");
    ab->add_option("--grid-latent", ab_grid_latent, "grid mode: on/off (default both)");
    ab->add_option("--seeds", ab_seeds, "seeds per cell");
    ab->add_option("--seed-base", ab_seed_base, "first seed");
    ab->add_option("--iterations", ab_iters, "override iterations");
    ab->add_option("--batch", ab_batch, "override batch size");
    ab->add_option("--n-eval", ab_neval, "samples per evaluation");
    ab->add_option("--out", ab_out, "output directory")->required();
    ab->add_flag("--quiet", ab_quiet, "suppress per-run lines");

    // list-presets
    auto* lp = app.add_subcommand("list-presets", "show built-in experiment presets");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sch->parsed()) return cmd_schedule(sch_T, sch_bmin, sch_bmax);
        if (eq->parsed()) return cmd_equivalence(eq_T, eq_trials, eq_seed);
        if (orc->parsed())
            return cmd_oracle(or_out, or_dataset, or_std, or_center, or_T, or_t, or_gaps, or_xt,
                              or_grid);
        if (tr->parsed())
            return cmd_train(tr_config, tr_preset, tr_out, tr_seed, tr_iters, tr_quiet);
        if (sm->parsed())
            return cmd_sample(sm_ckpt, sm_n, sm_seed, sm_ema, sm_raw, sm_out, sm_cond_x,
                              sm_cond_t, sm_fan);
        if (ev->parsed())
            return cmd_eval(ev_samples, ev_labels, ev_dataset, ev_std, ev_center, ev_radius,
                            ev_out);
        if (ab->parsed())
            return cmd_ablate(ab_preset, ab_cells, ab_grid_T, ab_grid_parm, ab_grid_latent,
                              ab_seeds, ab_seed_base, ab_iters, ab_batch, ab_neval, ab_out,
                              ab_quiet);
        if (lp->parsed()) {
            for (const auto& p : experiment_presets())
                std::cout << p.name << ": " << p.description << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
