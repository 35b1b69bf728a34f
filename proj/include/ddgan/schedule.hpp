#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "ddgan/error.hpp"
#include "ddgan/rng.hpp"
#include "ddgan/tensor.hpp"

namespace ddgan {

// Discrete variance schedule derived from the VP variance function
// sigma^2(t') = 1 - exp(-beta_min t' - 0.5 (beta_max - beta_min) t'^2),
// sampled at equidistant normalized times t' = t/T. Steps are 1-indexed;
// t = 0 means clean data.
class DiffusionSchedule {
public:
    static constexpr double kDefaultBetaMin = 0.1;
    static constexpr double kDefaultBetaMax = 20.0;

    DiffusionSchedule(std::size_t T, double beta_min = kDefaultBetaMin,
                      double beta_max = kDefaultBetaMax);

    std::size_t steps() const { return T_; }
    double beta_min() const { return beta_min_; }
    double beta_max() const { return beta_max_; }

    double beta(std::size_t t) const;            // 1 <= t <= T
    double alpha(std::size_t t) const;           // 1 - beta_t
    double alpha_bar(std::size_t t) const;       // 0 <= t <= T, alpha_bar(0) = 1
    double one_minus_alpha_bar(std::size_t t) const;  // exact near 0 via expm1

    // Continuous VP variance at normalized time u in [0, 1].
    double sigma2(double u) const;

    // -log(alpha_bar_t) in closed form; keeps ratios alpha_bar_t/alpha_bar_s
    // fully precise even when both factors are close to 1.
    double exponent(std::size_t t) const;

    // q(x_t | x_0) = N(mean_coef * x_0, var I); t = 0 yields (1, 0).
    std::pair<double, double> marginal_params(std::size_t t) const;

    // x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps. When eps_out is
    // non-null the drawn noise is stored there (noise-generation targets).
    Tensor forward_sample(const Tensor& x0, std::size_t t, Rng& rng,
                          Tensor* eps_out = nullptr) const;

    // One forward step: x_t = sqrt(1 - beta_t) x_prev + sqrt(beta_t) eps.
    Tensor stepwise_sample(const Tensor& x_prev, std::size_t t, Rng& rng) const;

    void check_step(std::size_t t, bool allow_zero = false) const;

private:
    std::size_t T_;
    double beta_min_, beta_max_;
    std::vector<double> beta_;       // [T], beta_[t-1] is beta_t
    std::vector<double> alpha_bar_;  // [T+1], alpha_bar_[0] = 1
    std::vector<double> var_;        // [T+1], 1 - alpha_bar via expm1
};

inline DiffusionSchedule build_schedule(std::size_t T,
                                        double beta_min = DiffusionSchedule::kDefaultBetaMin,
                                        double beta_max = DiffusionSchedule::kDefaultBetaMax) {
    return DiffusionSchedule(T, beta_min, beta_max);
}

}  // namespace ddgan
