#include "ddgan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ddgan {

ModeAssignments assign_modes(const Tensor& samples, const GaussianMixture& mix,
                             double quality_radius_in_std) {
    mix.validate();
    if (samples.size() == 0) throw Error("assign_modes: empty sample set");
    if (samples.rank() != 2 || samples.shape()[1] != mix.dim)
        throw ShapeError("assign_modes: expected samples of shape [n," +
                         std::to_string(mix.dim) + "], got " + shape_str(samples.shape()));

    double max_radius = 0.0;
    for (double v : mix.variances)
        max_radius = std::max(max_radius, quality_radius_in_std * std::sqrt(v));
    for (std::size_t a = 0; a < mix.components(); ++a)
        for (std::size_t b = a + 1; b < mix.components(); ++b) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < mix.dim; ++k) {
                const double r = mix.means[a][k] - mix.means[b][k];
                d2 += r * r;
            }
            if (std::sqrt(d2) <= 2.0 * max_radius)
                throw Error("assign_modes: overlapping-mode configuration (modes " +
                            std::to_string(a) + " and " + std::to_string(b) + ")");
        }

    const std::size_t n = samples.shape()[0];
    ModeAssignments out;
    out.mode.resize(n);
    out.high_quality.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double best = 0.0;
        std::size_t arg = 0;
        for (std::size_t k = 0; k < mix.components(); ++k) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < mix.dim; ++c) {
                const double r = samples.at(i * mix.dim + c) - mix.means[k][c];
                d2 += r * r;
            }
            if (k == 0 || d2 < best) {
                best = d2;
                arg = k;
            }
        }
        out.mode[i] = arg;
        const double radius = quality_radius_in_std * std::sqrt(mix.variances[arg]);
        out.high_quality[i] = std::sqrt(best) <= radius ? 1 : 0;
    }
    return out;
}

ModeReport mode_report(const Tensor& samples, const GaussianMixture& mix,
                       double quality_radius_in_std) {
    const ModeAssignments a = assign_modes(samples, mix, quality_radius_in_std);
    const std::size_t n = a.mode.size();
    const std::size_t K = mix.components();

    ModeReport rep;
    rep.total_modes = K;
    rep.n_samples = n;
    rep.low_sample_warning = n < 10 * K;

    std::vector<std::size_t> counts(K, 0);
    std::vector<char> covered(K, 0);
    std::size_t hq = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ++counts[a.mode[i]];
        if (a.high_quality[i]) {
            covered[a.mode[i]] = 1;
            ++hq;
        }
    }
    for (auto c : covered) rep.modes_covered += c;
    rep.high_quality_fraction = static_cast<double>(hq) / static_cast<double>(n);

    // add-one smoothing keeps uncovered modes finite in the KL
    double kl = 0.0;
    const double denom = static_cast<double>(n + K);
    for (std::size_t k = 0; k < K; ++k) {
        const double p = (static_cast<double>(counts[k]) + 1.0) / denom;
        kl += p * std::log(p / mix.weights[k]);
    }
    rep.mode_kl = kl;
    return rep;
}

std::string report_to_json(const ModeReport& r, const std::string& label) {
    std::ostringstream os;
    os.precision(17);
    os << "{\n"
       << "  \"label\": \"" << label << "\",\n"
       << "  \"modes_covered\": " << r.modes_covered << ",\n"
       << "  \"total_modes\": " << r.total_modes << ",\n"
       << "  \"high_quality_fraction\": " << r.high_quality_fraction << ",\n"
       << "  \"mode_kl\": " << r.mode_kl << ",\n"
       << "  \"n_samples\": " << r.n_samples << ",\n"
       << "  \"low_sample_warning\": " << (r.low_sample_warning ? "true" : "false") << "\n"
       << "}\n";
    return os.str();
}

std::string compare_runs(const std::vector<RunSummary>& rows) {
    // union of columns in first-seen order
    std::vector<std::string> cols;
    for (const auto& row : rows)
        for (const auto& [k, v] : row.fields)
            if (std::find(cols.begin(), cols.end(), k) == cols.end()) cols.push_back(k);

    std::ostringstream os;
    os << "label";
    for (const auto& c : cols) os << "," << c;
    os << "\n";
    for (const auto& row : rows) {
        os << row.label;
        for (const auto& c : cols) {
            os << ",";
            for (const auto& [k, v] : row.fields)
                if (k == c) {
                    os << v;
                    break;
                }
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace ddgan
