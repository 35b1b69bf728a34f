#pragma once

#include <cstddef>
#include <vector>

#include "ddgan/rng.hpp"
#include "ddgan/schedule.hpp"
#include "ddgan/tensor.hpp"

namespace ddgan {

// Weighted mixture of isotropic Gaussians. Serves both as toy data
// distribution and as the carrier of exact diffused marginals and exact
// multi-step denoising posteriors.
struct GaussianMixture {
    std::size_t dim = 1;
    std::vector<double> weights;             // k entries, positive, sum 1
    std::vector<std::vector<double>> means;  // k x dim
    std::vector<double> variances;           // k, per-component isotropic

    std::size_t components() const { return weights.size(); }
    void validate() const;

    double log_pdf(const std::vector<double>& x) const;
    double pdf(const std::vector<double>& x) const;

    std::size_t sample_component(Rng& rng) const;
    std::vector<double> sample_point(Rng& rng) const;
    Tensor sample_matrix(std::size_t n, Rng& rng) const;  // [n, dim]

    // 1-D helpers
    double mean1d() const;
    double var1d() const;
    double cdf1d(double x) const;
    double quantile1d(double p) const;
};

// 25 equal-weight components on the grid {-4,-2,0,2,4}^2.
GaussianMixture make_25gaussians(double stddev = 0.05);

// 0.5 N(-center, stddev^2) + 0.5 N(+center, stddev^2); the default demo mix.
GaussianMixture make_bimodal1d(double center = 1.0, double stddev = 0.1);

// Marginal of the forward process at step t: component means shrink by
// sqrt(alpha_bar_t), variances become alpha_bar_t v + (1 - alpha_bar_t).
GaussianMixture diffused_marginal(const GaussianMixture& mix, const DiffusionSchedule& sched,
                                  std::size_t t);

// Exact q(x_s | x_t = point) for 0 <= s < t: the Gaussian transition
// q(x_t | x_s) multiplied against each component of the diffused marginal at
// s, reweighted by the per-component evidence at the conditioning point.
struct DenoisingPosterior {
    GaussianMixture mix;
};

DenoisingPosterior true_denoising_posterior(const GaussianMixture& mix,
                                            const DiffusionSchedule& sched,
                                            const std::vector<double>& x_t, std::size_t t,
                                            std::size_t s);

// Quadrature settings shared by the density diagnostics below.
struct QuadratureSpec {
    std::size_t points = 20000;
    double span_std = 10.0;  // grid half-width in posterior standard deviations
};

// Integral of the posterior density over the quadrature grid (1-D); should
// be 1 within the grid's error budget.
double quadrature_mass(const DenoisingPosterior& post, const QuadratureSpec& q = {});

// KL(posterior || moment-matched Gaussian) by grid quadrature, 1-D only.
double gaussian_fit_kl(const DenoisingPosterior& post, const QuadratureSpec& q = {});

// Strict interior local maxima of the 1-D posterior density on the grid,
// ignoring maxima below 1e-12 of the peak.
std::size_t count_local_maxima(const DenoisingPosterior& post, const QuadratureSpec& q = {});

}  // namespace ddgan
