#include "ddgan/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ddgan {

namespace {

double log_gauss_iso(const std::vector<double>& x, const std::vector<double>& mu, double var,
                     std::size_t dim) {
    double q = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
        const double r = x[d] - mu[d];
        q += r * r;
    }
    return -0.5 * q / var - 0.5 * static_cast<double>(dim) * std::log(2.0 * M_PI * var);
}

double logsumexp(const std::vector<double>& xs) {
    const double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace

void GaussianMixture::validate() const {
    if (weights.empty() || means.size() != weights.size() || variances.size() != weights.size())
        throw Error("mixture: inconsistent component counts");
    double sum = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) throw Error("mixture: weights must be positive");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw Error("mixture: weights sum to " + std::to_string(sum) + ", expected 1");
    for (const auto& m : means)
        if (m.size() != dim) throw Error("mixture: mean dimensionality mismatch");
    for (double v : variances)
        if (!(v > 0.0)) throw Error("mixture: variances must be positive");
}

double GaussianMixture::log_pdf(const std::vector<double>& x) const {
    std::vector<double> terms(components());
    for (std::size_t k = 0; k < components(); ++k)
        terms[k] = std::log(weights[k]) + log_gauss_iso(x, means[k], variances[k], dim);
    return logsumexp(terms);
}

double GaussianMixture::pdf(const std::vector<double>& x) const { return std::exp(log_pdf(x)); }

std::size_t GaussianMixture::sample_component(Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < components(); ++k) {
        acc += weights[k];
        if (u < acc) return k;
    }
    return components() - 1;
}

std::vector<double> GaussianMixture::sample_point(Rng& rng) const {
    const std::size_t k = sample_component(rng);
    std::vector<double> x(dim);
    const double sd = std::sqrt(variances[k]);
    for (std::size_t d = 0; d < dim; ++d) x[d] = means[k][d] + sd * rng.normal();
    return x;
}

Tensor GaussianMixture::sample_matrix(std::size_t n, Rng& rng) const {
    std::vector<double> data(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        auto x = sample_point(rng);
        std::copy(x.begin(), x.end(), data.begin() + i * dim);
    }
    return Tensor::constant({n, dim}, std::move(data));
}

double GaussianMixture::mean1d() const {
    if (dim != 1) throw Error("mixture: mean1d requires dim 1");
    double m = 0.0;
    for (std::size_t k = 0; k < components(); ++k) m += weights[k] * means[k][0];
    return m;
}

double GaussianMixture::var1d() const {
    if (dim != 1) throw Error("mixture: var1d requires dim 1");
    const double m = mean1d();
    double v = 0.0;
    for (std::size_t k = 0; k < components(); ++k)
        v += weights[k] * (variances[k] + means[k][0] * means[k][0]);
    return v - m * m;
}

double GaussianMixture::cdf1d(double x) const {
    if (dim != 1) throw Error("mixture: cdf1d requires dim 1");
    double c = 0.0;
    for (std::size_t k = 0; k < components(); ++k)
        c += weights[k] * 0.5 * std::erfc(-(x - means[k][0]) / std::sqrt(2.0 * variances[k]));
    return c;
}

double GaussianMixture::quantile1d(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw Error("mixture: quantile requires p in (0,1)");
    double lo = mean1d() - 20.0 * std::sqrt(var1d());
    double hi = mean1d() + 20.0 * std::sqrt(var1d());
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (cdf1d(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

GaussianMixture make_25gaussians(double stddev) {
    if (!(stddev > 0.0)) throw Error("make_25gaussians: stddev must be positive");
    GaussianMixture mix;
    mix.dim = 2;
    for (int i = -2; i <= 2; ++i)
        for (int j = -2; j <= 2; ++j) {
            mix.weights.push_back(1.0 / 25.0);
            mix.means.push_back({2.0 * i, 2.0 * j});
            mix.variances.push_back(stddev * stddev);
        }
    mix.validate();
    return mix;
}

GaussianMixture make_bimodal1d(double center, double stddev) {
    GaussianMixture mix;
    mix.dim = 1;
    mix.weights = {0.5, 0.5};
    mix.means = {{-center}, {center}};
    mix.variances = {stddev * stddev, stddev * stddev};
    mix.validate();
    return mix;
}

GaussianMixture diffused_marginal(const GaussianMixture& mix, const DiffusionSchedule& sched,
                                  std::size_t t) {
    sched.check_step(t, true);
    if (t == 0) return mix;
    const double ab = sched.alpha_bar(t);
    const double var = sched.one_minus_alpha_bar(t);
    const double shrink = std::sqrt(ab);
    GaussianMixture out = mix;
    for (std::size_t k = 0; k < mix.components(); ++k) {
        for (auto& m : out.means[k]) m *= shrink;
        out.variances[k] = ab * mix.variances[k] + var;
    }
    return out;
}

DenoisingPosterior true_denoising_posterior(const GaussianMixture& mix,
                                            const DiffusionSchedule& sched,
                                            const std::vector<double>& x_t, std::size_t t,
                                            std::size_t s) {
    sched.check_step(t);
    if (s >= t) throw Error("true_denoising_posterior: need s < t, got s=" + std::to_string(s) +
                            " t=" + std::to_string(t));
    if (x_t.size() != mix.dim) throw Error("true_denoising_posterior: point dim mismatch");

    // q(x_t | x_s) = N(c x_s, w2 I) with c = sqrt(ab_t/ab_s); exponent
    // differences keep w2 precise when both alpha_bars are close to 1.
    const double de = sched.exponent(t) - sched.exponent(s);
    const double c = std::exp(-0.5 * de);
    const double w2 = -std::expm1(-de);

    const GaussianMixture prior = diffused_marginal(mix, sched, s);
    GaussianMixture post = prior;
    std::vector<double> logw(prior.components());
    for (std::size_t k = 0; k < prior.components(); ++k) {
        const double vp = prior.variances[k];
        // product of N(x_s; mu, vp) and the likelihood viewed in x_s
        const double vtilde = vp * w2 / (w2 + c * c * vp);
        for (std::size_t d = 0; d < mix.dim; ++d) {
            const double mu = prior.means[k][d];
            post.means[k][d] = vtilde * (mu / vp + c * x_t[d] / w2);
        }
        post.variances[k] = vtilde;
        // evidence: N(x_t; c mu, (c^2 vp + w2) I)
        std::vector<double> scaled(prior.means[k]);
        for (auto& m : scaled) m *= c;
        logw[k] = std::log(prior.weights[k]) +
                  log_gauss_iso(x_t, scaled, c * c * vp + w2, mix.dim);
    }
    const double lse = logsumexp(logw);
    for (std::size_t k = 0; k < post.components(); ++k)
        post.weights[k] = std::exp(logw[k] - lse);
    // renormalize away the last few ulps so validate() stays happy
    double sum = 0.0;
    for (double w : post.weights) sum += w;
    for (auto& w : post.weights) w /= sum;
    post.validate();
    return DenoisingPosterior{std::move(post)};
}

namespace {

struct Grid {
    double lo, step;
    std::size_t n;
};

Grid posterior_grid(const DenoisingPosterior& post, const QuadratureSpec& q) {
    if (post.mix.dim != 1) throw Error("posterior quadrature requires dim 1");
    const double m = post.mix.mean1d();
    const double sd = std::sqrt(post.mix.var1d());
    const double lo = m - q.span_std * sd;
    const double hi = m + q.span_std * sd;
    return {lo, (hi - lo) / static_cast<double>(q.points - 1), q.points};
}

}  // namespace

double quadrature_mass(const DenoisingPosterior& post, const QuadratureSpec& q) {
    const Grid g = posterior_grid(post, q);
    double acc = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) {
        const double p = post.mix.pdf({g.lo + g.step * static_cast<double>(i)});
        acc += (i == 0 || i + 1 == g.n) ? 0.5 * p : p;
    }
    return acc * g.step;
}

double gaussian_fit_kl(const DenoisingPosterior& post, const QuadratureSpec& q) {
    post.mix.validate();  // rejects unnormalized weights
    const Grid g = posterior_grid(post, q);
    const double m = post.mix.mean1d();
    const double v = post.mix.var1d();
    double acc = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) {
        const double x = g.lo + g.step * static_cast<double>(i);
        const double logp = post.mix.log_pdf({x});
        if (logp < -700.0) continue;  // density underflows; contributes nothing
        const double p = std::exp(logp);
        const double logq =
            -0.5 * (x - m) * (x - m) / v - 0.5 * std::log(2.0 * M_PI * v);
        const double term = p * (logp - logq);
        acc += (i == 0 || i + 1 == g.n) ? 0.5 * term : term;
    }
    return acc * g.step;
}

std::size_t count_local_maxima(const DenoisingPosterior& post, const QuadratureSpec& q) {
    const Grid g = posterior_grid(post, q);
    std::vector<double> d(g.n);
    double peak = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) {
        d[i] = post.mix.pdf({g.lo + g.step * static_cast<double>(i)});
        peak = std::max(peak, d[i]);
    }
    // Plateau-aware: a symmetric peak can land between two equal-valued grid
    // points, so runs of equal values count as one maximum.
    std::size_t count = 0;
    std::size_t i = 0;
    while (i < g.n) {
        std::size_t j = i;
        while (j + 1 < g.n && d[j + 1] == d[i]) ++j;
        const bool rises = i > 0 && d[i] > d[i - 1];
        const bool falls = j + 1 < g.n && d[j] > d[j + 1];
        if (rises && falls && d[i] > 1e-12 * peak) ++count;
        i = j + 1;
    }
    return count;
}

}  // namespace ddgan
