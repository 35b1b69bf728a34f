#pragma once

#include <cstddef>

#include "ddgan/schedule.hpp"

namespace ddgan {

// q(x_{t-1} | x_t, x_0) = N(coef_x0 * x_0 + coef_xt * x_t, var I).
// var is exactly zero at t = 1 because alpha_bar_0 = 1.
struct PosteriorParams {
    double coef_x0 = 0.0;  // sqrt(alpha_bar_{t-1}) beta_t / (1 - alpha_bar_t)
    double coef_xt = 0.0;  // sqrt(alpha_t) (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)
    double var = 0.0;      // (1 - alpha_bar_{t-1}) beta_t / (1 - alpha_bar_t)
};

PosteriorParams posterior_params(const DiffusionSchedule& sched, std::size_t t);

// coef_x0 * x0 + coef_xt * xt + sqrt(var) * eps. A zero-variance posterior
// returns the mean exactly and consumes no randomness; the deterministic
// flag forces that behaviour for any variance. Differentiable w.r.t. x0/xt.
Tensor posterior_sample(const PosteriorParams& params, const Tensor& x0, const Tensor& xt,
                        Rng& rng, bool deterministic = false);

// Per-row variant: params[i] applies to row i of the rank-2 inputs.
Tensor posterior_sample_rows(const std::vector<PosteriorParams>& params, const Tensor& x0,
                             const Tensor& xt, Rng& rng);

// x0 = (xt - sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_bar_t).
Tensor x0_from_eps(const DiffusionSchedule& sched, const Tensor& xt, const Tensor& eps,
                   std::size_t t);

struct EquivalenceReport {
    bool pass = true;
    std::size_t trials = 0;
    double max_mean_dev = 0.0;   // |DDPM update mean - posterior mean|
    double max_sigma_dev = 0.0;  // |sigma_t - sqrt(posterior var)|
    double max_last_step_dev = 0.0;  // t=1 update with z=0 vs posterior mean
    // first violating tuple, when any
    std::size_t fail_t = 0;
    double fail_xt = 0.0, fail_eps = 0.0;
};

// Checks, on random (xt, eps, t), that the DDPM noise-prediction update
// (1/sqrt(alpha_t)) (xt - (1-alpha_t)/sqrt(1-alpha_bar_t) eps) + sigma_t z
// equals sampling the posterior around the implied x0 prediction, with
// sigma_t = sqrt(posterior var) and z = 0 on the last denoising step.
EquivalenceReport ddpm_equivalence_check(const DiffusionSchedule& sched, std::size_t trials,
                                         std::uint64_t seed = 0, double tol = 1e-10);

}  // namespace ddgan
