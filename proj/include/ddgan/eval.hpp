#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ddgan/mixture.hpp"
#include "ddgan/tensor.hpp"

namespace ddgan {

struct ModeAssignments {
    std::vector<std::size_t> mode;   // nearest mode per sample
    std::vector<char> high_quality;  // within radius * mode stddev
};

// Nearest-mode assignment with a quality radius in units of the mode's
// stddev. Requires well-separated modes (min pairwise mean distance greater
// than twice the largest quality radius) and a nonempty sample set.
ModeAssignments assign_modes(const Tensor& samples, const GaussianMixture& mix,
                             double quality_radius_in_std = 3.0);

struct ModeReport {
    std::size_t modes_covered = 0;
    std::size_t total_modes = 0;
    double high_quality_fraction = 0.0;
    double mode_kl = 0.0;  // KL(generated histogram || data weights), add-one smoothed
    std::size_t n_samples = 0;
    bool low_sample_warning = false;  // fewer than 10x total_modes samples
};

ModeReport mode_report(const Tensor& samples, const GaussianMixture& mix,
                       double quality_radius_in_std = 3.0);

std::string report_to_json(const ModeReport& report, const std::string& label);

// One comparison row: a label plus named cells. compare_runs merges rows
// into a CSV over the union of columns; missing cells stay empty.
struct RunSummary {
    std::string label;
    std::vector<std::pair<std::string, std::string>> fields;
};

std::string compare_runs(const std::vector<RunSummary>& rows);

}  // namespace ddgan
