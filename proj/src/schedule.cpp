#include "ddgan/schedule.hpp"

#include <cmath>
#include <string>

namespace ddgan {

namespace {

// Exponent of the VP survival factor: alpha_bar(u) = exp(-e(u)).
double vp_exponent(double u, double bmin, double bmax) {
    return bmin * u + 0.5 * (bmax - bmin) * u * u;
}

}  // namespace

DiffusionSchedule::DiffusionSchedule(std::size_t T, double beta_min, double beta_max)
    : T_(T), beta_min_(beta_min), beta_max_(beta_max) {
    if (T < 1) throw Error("schedule: T must be >= 1");
    if (!(beta_min > 0.0) || !(beta_min <= beta_max))
        throw Error("schedule: need 0 < beta_min <= beta_max, got beta_min=" +
                    std::to_string(beta_min) + " beta_max=" + std::to_string(beta_max));

    const double Td = static_cast<double>(T);
    beta_.resize(T);
    alpha_bar_.resize(T + 1);
    var_.resize(T + 1);
    alpha_bar_[0] = 1.0;
    var_[0] = 0.0;
    for (std::size_t t = 1; t <= T; ++t) {
        const double td = static_cast<double>(t);
        // beta_t = 1 - exp(-beta_min/T - 0.5 (beta_max-beta_min)(2t-1)/T^2)
        beta_[t - 1] = -std::expm1(-beta_min / Td -
                                   0.5 * (beta_max - beta_min) * (2.0 * td - 1.0) / (Td * Td));
        const double e = vp_exponent(td / Td, beta_min, beta_max);
        alpha_bar_[t] = std::exp(-e);
        var_[t] = -std::expm1(-e);  // 1 - alpha_bar_t, full precision near 0
        if (!(beta_[t - 1] > 0.0 && beta_[t - 1] < 1.0))
            throw Error("schedule: beta_" + std::to_string(t) + " out of (0,1)");
        // The stored cumulative product must telescope against beta_t. The
        // 1 - beta_t subtraction cancels when beta_t is close to 1, so the
        // tolerance is anchored on the previous alpha_bar.
        const double recon = alpha_bar_[t - 1] * (1.0 - beta_[t - 1]);
        if (std::abs(recon - alpha_bar_[t]) > 1e-12 * alpha_bar_[t - 1])
            throw Error("schedule: alpha_bar inconsistent at t=" + std::to_string(t));
    }
}

void DiffusionSchedule::check_step(std::size_t t, bool allow_zero) const {
    const std::size_t lo = allow_zero ? 0 : 1;
    if (t < lo || t > T_)
        throw Error("schedule: step t=" + std::to_string(t) + " outside [" + std::to_string(lo) +
                    "," + std::to_string(T_) + "]");
}

double DiffusionSchedule::beta(std::size_t t) const {
    check_step(t);
    return beta_[t - 1];
}

double DiffusionSchedule::alpha(std::size_t t) const { return 1.0 - beta(t); }

double DiffusionSchedule::alpha_bar(std::size_t t) const {
    check_step(t, true);
    return alpha_bar_[t];
}

double DiffusionSchedule::one_minus_alpha_bar(std::size_t t) const {
    check_step(t, true);
    return var_[t];
}

double DiffusionSchedule::sigma2(double u) const {
    return -std::expm1(-vp_exponent(u, beta_min_, beta_max_));
}

double DiffusionSchedule::exponent(std::size_t t) const {
    check_step(t, true);
    return vp_exponent(static_cast<double>(t) / static_cast<double>(T_), beta_min_, beta_max_);
}

std::pair<double, double> DiffusionSchedule::marginal_params(std::size_t t) const {
    check_step(t, true);
    return {std::sqrt(alpha_bar_[t]), var_[t]};
}

Tensor DiffusionSchedule::forward_sample(const Tensor& x0, std::size_t t, Rng& rng,
                                         Tensor* eps_out) const {
    auto [mean_coef, var] = marginal_params(t);
    if (t == 0) {
        if (eps_out) *eps_out = Tensor::zeros(x0.shape(), x0.dtype());
        return x0.detach();
    }
    Tensor eps = sample_normal(rng, x0.shape(), x0.dtype());
    if (eps_out) *eps_out = eps;
    return add(affine(x0, mean_coef, 0.0), affine(eps, std::sqrt(var), 0.0));
}

Tensor DiffusionSchedule::stepwise_sample(const Tensor& x_prev, std::size_t t, Rng& rng) const {
    const double b = beta(t);
    Tensor eps = sample_normal(rng, x_prev.shape(), x_prev.dtype());
    return add(affine(x_prev, std::sqrt(1.0 - b), 0.0), affine(eps, std::sqrt(b), 0.0));
}

}  // namespace ddgan
