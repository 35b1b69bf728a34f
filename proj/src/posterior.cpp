#include "ddgan/posterior.hpp"

#include <cmath>

namespace ddgan {

PosteriorParams posterior_params(const DiffusionSchedule& sched, std::size_t t) {
    sched.check_step(t);
    const double beta = sched.beta(t);
    const double ab_prev = sched.alpha_bar(t - 1);
    const double var_t = sched.one_minus_alpha_bar(t);
    const double var_prev = sched.one_minus_alpha_bar(t - 1);
    PosteriorParams p;
    p.coef_x0 = std::sqrt(ab_prev) * beta / var_t;
    p.coef_xt = std::sqrt(1.0 - beta) * var_prev / var_t;
    p.var = var_prev * beta / var_t;
    return p;
}

Tensor posterior_sample(const PosteriorParams& params, const Tensor& x0, const Tensor& xt,
                        Rng& rng, bool deterministic) {
    if (x0.shape() != xt.shape())
        throw ShapeError("posterior_sample: incompatible shapes " + shape_str(x0.shape()) +
                         " and " + shape_str(xt.shape()));
    Tensor mean = add(affine(x0, params.coef_x0, 0.0), affine(xt, params.coef_xt, 0.0));
    if (deterministic || params.var == 0.0) return mean;
    Tensor eps = sample_normal(rng, x0.shape(), x0.dtype());
    return add(mean, affine(eps, std::sqrt(params.var), 0.0));
}

Tensor posterior_sample_rows(const std::vector<PosteriorParams>& params, const Tensor& x0,
                             const Tensor& xt, Rng& rng) {
    if (x0.rank() != 2 || x0.shape() != xt.shape() || params.size() != x0.shape()[0])
        throw ShapeError("posterior_sample_rows: incompatible shapes " + shape_str(x0.shape()) +
                         " and " + shape_str(xt.shape()));
    const std::size_t rows = x0.shape()[0], cols = x0.shape()[1];
    std::vector<double> c0(rows), ct(rows), noise(rows * cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        c0[r] = params[r].coef_x0;
        ct[r] = params[r].coef_xt;
        if (params[r].var > 0.0) {
            const double sd = std::sqrt(params[r].var);
            for (std::size_t j = 0; j < cols; ++j) noise[r * cols + j] = sd * rng.normal();
        }
    }
    Tensor mean = add(mul_colvec(x0, Tensor::constant({rows}, c0, x0.dtype())),
                      mul_colvec(xt, Tensor::constant({rows}, ct, x0.dtype())));
    return add(mean, Tensor::constant({rows, cols}, noise, x0.dtype()));
}

Tensor x0_from_eps(const DiffusionSchedule& sched, const Tensor& xt, const Tensor& eps,
                   std::size_t t) {
    sched.check_step(t);
    if (xt.shape() != eps.shape())
        throw ShapeError("x0_from_eps: incompatible shapes " + shape_str(xt.shape()) + " and " +
                         shape_str(eps.shape()));
    const double root_ab = std::sqrt(sched.alpha_bar(t));
    const double sd = std::sqrt(sched.one_minus_alpha_bar(t));
    return affine(add(xt, affine(eps, -sd, 0.0)), 1.0 / root_ab, 0.0);
}

EquivalenceReport ddpm_equivalence_check(const DiffusionSchedule& sched, std::size_t trials,
                                         std::uint64_t seed, double tol) {
    Rng rng(seed);
    EquivalenceReport rep;
    rep.trials = trials;
    const std::size_t T = sched.steps();
    for (std::size_t i = 0; i < trials; ++i) {
        const std::size_t t = 1 + rng.next_u64() % T;
        const double xt = 3.0 * rng.normal();
        const double eps = rng.normal();

        const double alpha = sched.alpha(t);
        const double var_t = sched.one_minus_alpha_bar(t);
        const double ddpm_mean = (xt - (1.0 - alpha) / std::sqrt(var_t) * eps) / std::sqrt(alpha);

        const PosteriorParams p = posterior_params(sched, t);
        const double x0 = (xt - std::sqrt(var_t) * eps) / std::sqrt(sched.alpha_bar(t));
        const double post_mean = p.coef_x0 * x0 + p.coef_xt * xt;

        const double mean_dev = std::abs(ddpm_mean - post_mean);
        // sigma_t = sqrt(beta_tilde_t), cross-checked through the
        // precision-sum form 1/beta_tilde = 1/(1-alpha_bar_{t-1}) + alpha/beta.
        const double var_prev = sched.one_minus_alpha_bar(t - 1);
        const double sigma_indep =
            std::sqrt(1.0 / (1.0 / var_prev + alpha / sched.beta(t)));
        const double sigma_dev = std::abs(sigma_indep - std::sqrt(p.var));
        rep.max_mean_dev = std::max(rep.max_mean_dev, mean_dev);
        rep.max_sigma_dev = std::max(rep.max_sigma_dev, sigma_dev);
        if (mean_dev > tol || sigma_dev > tol) {
            rep.pass = false;
            rep.fail_t = t;
            rep.fail_xt = xt;
            rep.fail_eps = eps;
            return rep;
        }
    }
    // Last denoising step: z = 0, so the update must equal the posterior
    // mean exactly, and the posterior variance must vanish.
    {
        const PosteriorParams p1 = posterior_params(sched, 1);
        const double x1 = 1.3, eps1 = -0.4;
        const double alpha = sched.alpha(1);
        const double var1 = sched.one_minus_alpha_bar(1);
        const double ddpm = (x1 - (1.0 - alpha) / std::sqrt(var1) * eps1) / std::sqrt(alpha);
        const double x0 = (x1 - std::sqrt(var1) * eps1) / std::sqrt(sched.alpha_bar(1));
        const double post = p1.coef_x0 * x0 + p1.coef_xt * x1;
        rep.max_last_step_dev = std::abs(ddpm - post);
        if (p1.var != 0.0 || rep.max_last_step_dev > tol) {
            rep.pass = false;
            rep.fail_t = 1;
            rep.fail_xt = x1;
            rep.fail_eps = eps1;
        }
    }
    return rep;
}

}  // namespace ddgan
