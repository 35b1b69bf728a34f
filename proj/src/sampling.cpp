#include "ddgan/sampling.hpp"

#include <chrono>
#include <cmath>
#include <cstring>

#include "ddgan/config.hpp"
#include "ddgan/posterior.hpp"

namespace ddgan {

TrainConfig config_from_checkpoint(const Checkpoint& ckpt) {
    return parse_train_config(ckpt.config_echo);
}

DiffusionSchedule schedule_from_checkpoint(const Checkpoint& ckpt) {
    const TrainConfig cfg = config_from_checkpoint(ckpt);
    return DiffusionSchedule(cfg.T, cfg.beta_min, cfg.beta_max);
}

std::shared_ptr<GeneratorNet> generator_from_checkpoint(const Checkpoint& ckpt,
                                                        WeightChoice choice) {
    const TrainConfig cfg = config_from_checkpoint(ckpt);
    Rng rng(0);  // structural only; every value is overwritten below
    auto g = std::make_shared<GeneratorNet>(generator_config(cfg), rng);
    auto params = g->parameters();
    for (auto& p : params) {
        const Checkpoint::Array* src =
            choice == WeightChoice::ema ? ckpt.find_ema(p.name) : ckpt.find_param(p.name);
        if (!src)
            throw IoError("checkpoint: missing " +
                          std::string(choice == WeightChoice::ema ? "EMA" : "parameter") +
                          " array '" + p.name + "'");
        if (src->values.size() != p.value.size())
            throw IoError("checkpoint: size mismatch for '" + p.name + "'");
        p.value.mutable_values() = src->values;
    }
    return g;
}

namespace {

// Expected normal draws per generated sample, by parametrization.
std::size_t expected_draws(const GeneratorConfig& cfg, std::size_t T, std::size_t N) {
    const std::size_t L = cfg.latent_enabled ? cfg.latent_dim : 0;
    if (cfg.parametrization == Parametrization::direct) return N + T * L;
    return T * (L + N);  // x_T once, z each step, posterior noise except t=1
}

}  // namespace

Tensor generate(const GeneratorNet& g, const DiffusionSchedule& sched, std::size_t n, Rng& rng,
                SampleSummary* summary, bool one_shot) {
    if (n < 1) throw Error("generate: sample count must be >= 1");
    const auto& gc = g.config();
    const std::size_t N = gc.data_dim;
    const std::size_t T = sched.steps();
    const std::size_t L = gc.latent_enabled ? gc.latent_dim : 0;
    const auto t0 = std::chrono::steady_clock::now();
    NoGradGuard ng;

    std::vector<double> out(n * N);
    const std::size_t chunk = 512;
    std::size_t nfe = 0;
    for (std::size_t base = 0; base < n; base += chunk) {
        const std::size_t m = std::min(chunk, n - base);
        std::vector<Rng> sub;
        sub.reserve(m);
        for (std::size_t i = 0; i < m; ++i) sub.push_back(rng.fork(base + i));

        std::vector<double> x(m * N);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < N; ++j) x[i * N + j] = sub[i].normal();
        Tensor xt = Tensor::constant({m, N}, x, gc.dtype);

        if (one_shot) {
            Tensor z;
            if (L > 0) {
                std::vector<double> zv(m * L);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < L; ++j) zv[i * L + j] = sub[i].normal();
                z = Tensor::constant({m, L}, std::move(zv), gc.dtype);
            }
            xt = g.forward(xt, z, 1);
            nfe = 1;
        } else {
            for (std::size_t t = T; t >= 1; --t) {
                Tensor z;
                if (L > 0) {
                    std::vector<double> zv(m * L);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < L; ++j) zv[i * L + j] = sub[i].normal();
                    z = Tensor::constant({m, L}, std::move(zv), gc.dtype);
                }
                Tensor eps;
                if (gc.parametrization != Parametrization::direct &&
                    posterior_params(sched, t).var > 0.0) {
                    std::vector<double> ev(m * N);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < N; ++j) ev[i * N + j] = sub[i].normal();
                    eps = Tensor::constant({m, N}, std::move(ev), gc.dtype);
                }
                xt = denoise_step_given(g, sched, xt, t, z, eps);
            }
            nfe = T;
            const std::size_t expect = expected_draws(gc, T, N);
            for (std::size_t i = 0; i < m; ++i)
                if (sub[i].normal_count() != expect)
                    throw Error("generate: per-sample draw accounting failed (" +
                                std::to_string(sub[i].normal_count()) + " != " +
                                std::to_string(expect) + ")");
        }
        std::memcpy(out.data() + base * N, xt.values().data(), m * N * sizeof(double));
    }

    if (summary) {
        summary->n = n;
        summary->T = T;
        summary->nfe_per_sample = nfe;
        summary->wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        summary->wall_per_100 = summary->wall_seconds / static_cast<double>(n) * 100.0;
        summary->seed = rng.seed();
    }
    return Tensor::constant({n, N}, std::move(out));
}

Tensor conditional_fan(const GeneratorNet& g, const DiffusionSchedule& sched,
                       const std::vector<double>& x_t, std::size_t t, std::size_t m, Rng& rng) {
    sched.check_step(t);
    if (m < 1) throw Error("conditional_fan: need m >= 1");
    const auto& gc = g.config();
    const std::size_t N = gc.data_dim;
    if (x_t.size() != N) throw ShapeError("conditional_fan: conditioning point dim mismatch");
    NoGradGuard ng;

    std::vector<double> tiled(m * N);
    for (std::size_t i = 0; i < m; ++i)
        std::copy(x_t.begin(), x_t.end(), tiled.begin() + i * N);
    Tensor x = Tensor::constant({m, N}, std::move(tiled), gc.dtype);

    for (std::size_t step = t; step >= 1; --step) {
        Tensor z;
        if (gc.latent_enabled) z = sample_normal(rng, {m, gc.latent_dim}, gc.dtype);
        Tensor eps;
        if (step > 1 && gc.parametrization != Parametrization::direct &&
            posterior_params(sched, step).var > 0.0)
            eps = sample_normal(rng, {m, N}, gc.dtype);
        x = denoise_step_given(g, sched, x, step, z, eps);
    }
    return x.detach();
}

}  // namespace ddgan
