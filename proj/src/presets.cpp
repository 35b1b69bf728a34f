#include "ddgan/presets.hpp"

namespace ddgan {

namespace {

ExperimentPreset make_toy25() {
    ExperimentPreset p;
    p.name = "toy25";
    p.description = "25-Gaussians grid, T=4, full-length toy protocol";
    p.expected = {25, 0.8, 0.2, 10000};
    return p;  // config: all defaults
}

ExperimentPreset make_toy25_acceptance() {
    ExperimentPreset p;
    p.name = "toy25-acceptance";
    p.description = "25-Gaussians at the reduced iteration count used by the acceptance suite";
    p.config.iterations = 3000;
    p.expected = {25, 0.8, 0.2, 10000};
    return p;
}

ExperimentPreset make_bimodal() {
    ExperimentPreset p;
    p.name = "bimodal1d";
    p.description = "two-component 1-D mixture for conditional-multimodality studies";
    p.config.dataset = "bimodal1d";
    p.config.dataset_std = 0.1;
    p.config.dataset_center = 1.0;
    p.config.batch_size = 256;
    p.config.hidden_dim = 256;
    p.config.iterations = 2000;
    return p;
}

ExperimentPreset make_bimodal_nolatent() {
    ExperimentPreset p = make_bimodal();
    p.name = "bimodal1d-nolatent";
    p.description = "bimodal 1-D run without latent variables (unimodal denoiser)";
    p.config.latent_enabled = false;
    return p;
}

ExperimentPreset make_table3() {
    ExperimentPreset p;
    p.name = "table3-toy";
    p.description = "base config for the toy ablation grid (use with the ablate command)";
    p.config.batch_size = 256;
    p.config.iterations = 1200;
    return p;
}

}  // namespace

const std::vector<ExperimentPreset>& experiment_presets() {
    static const std::vector<ExperimentPreset> presets = {
        make_toy25(), make_toy25_acceptance(), make_bimodal(), make_bimodal_nolatent(),
        make_table3()};
    return presets;
}

const ExperimentPreset& find_preset(const std::string& name) {
    for (const auto& p : experiment_presets())
        if (p.name == name) return p;
    std::string known;
    for (const auto& p : experiment_presets()) known += (known.empty() ? "" : ", ") + p.name;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
}

TrainConfig AblationCell::apply(const TrainConfig& base) const {
    TrainConfig cfg = base;
    cfg.T = T;
    cfg.parametrization = parametrization;
    cfg.latent_enabled = latent_enabled;
    cfg.aug_baseline = aug_baseline;
    return cfg;
}

const std::vector<AblationCell>& ablation_cells() {
    static const std::vector<AblationCell> cells = {
        {"T1", 1, "x0", true, false},
        {"T2", 2, "x0", true, false},
        {"T4", 4, "x0", true, false},
        {"T8", 8, "x0", true, false},
        {"aug", 4, "x0", true, true},
        {"direct", 4, "direct", true, false},
        {"noise", 4, "noise", true, false},
        {"nolatent", 4, "x0", false, false},
    };
    return cells;
}

}  // namespace ddgan
