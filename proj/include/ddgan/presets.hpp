#pragma once

#include <string>
#include <vector>

#include "ddgan/training.hpp"

namespace ddgan {

// Metric bar a preset is expected to clear when trained and evaluated at
// n_eval samples (EMA weights). Zero-valued fields mean "not specified".
struct ExpectedMetrics {
    std::size_t modes_min = 0;
    double hq_min = 0.0;
    double kl_max = 0.0;
    std::size_t n_eval = 0;
};

struct ExperimentPreset {
    std::string name;
    std::string description;
    TrainConfig config;
    ExpectedMetrics expected;
};

// Built-in presets; names are unique and configs round-trip through the
// config text format.
const std::vector<ExperimentPreset>& experiment_presets();
const ExperimentPreset& find_preset(const std::string& name);

// Cells of the toy ablation grid (T sweep, augmentation baseline, alternative
// parametrizations, no-latent variant), applied on top of a base config.
struct AblationCell {
    std::string name;
    TrainConfig apply(const TrainConfig& base) const;
    std::size_t T = 4;
    std::string parametrization = "x0";
    bool latent_enabled = true;
    bool aug_baseline = false;
};

const std::vector<AblationCell>& ablation_cells();

}  // namespace ddgan
