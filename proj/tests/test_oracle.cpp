#include "doctest.h"

#include <cmath>
#include <vector>

#include "ddgan/mixture.hpp"
#include "ddgan/posterior.hpp"
#include "testutil.hpp"

using namespace ddgan;

TEST_CASE("mixture validation") {
    GaussianMixture m = make_bimodal1d();
    CHECK_NOTHROW(m.validate());
    GaussianMixture bad = m;
    bad.weights = {0.6, 0.6};
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = m;
    bad.variances[0] = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("component frequencies match weights (chi-square, p > 0.001)") {
    GaussianMixture mix;
    mix.dim = 1;
    mix.weights = {0.1, 0.2, 0.3, 0.4};
    mix.means = {{-3}, {-1}, {1}, {3}};
    mix.variances = {0.01, 0.01, 0.01, 0.01};
    mix.validate();
    Rng rng(2);
    const std::size_t n = 100000;
    std::vector<double> counts(4, 0.0);
    for (std::size_t i = 0; i < n; ++i) counts[mix.sample_component(rng)] += 1.0;
    double stat = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        const double e = mix.weights[k] * static_cast<double>(n);
        stat += (counts[k] - e) * (counts[k] - e) / e;
    }
    CHECK(stat < testutil::chi2_quantile(0.999, 3.0));
}

TEST_CASE("diffused marginal") {
    GaussianMixture mix = make_bimodal1d();
    SUBCASE("t=0 is the input mixture") {
        DiffusionSchedule s(4);
        GaussianMixture out = diffused_marginal(mix, s, 0);
        CHECK(out.means == mix.means);
        CHECK(out.variances == mix.variances);
    }
    SUBCASE("t=T at T=1000 is close to a standard normal") {
        DiffusionSchedule s(1000);
        CHECK(std::sqrt(s.alpha_bar(1000)) < 0.01);
        GaussianMixture out = diffused_marginal(mix, s, 1000);
        for (std::size_t k = 0; k < out.components(); ++k) {
            CHECK(std::abs(out.means[k][0]) < 0.01);
            CHECK(std::abs(out.variances[k] - 1.0) < 1e-4);
        }
    }
    SUBCASE("single component reduces to marginal_params") {
        GaussianMixture one;
        one.dim = 1;
        one.weights = {1.0};
        one.means = {{2.0}};
        one.variances = {0.04};
        one.validate();
        DiffusionSchedule s(4);
        for (std::size_t t = 1; t <= 4; ++t) {
            auto [mc, v] = s.marginal_params(t);
            GaussianMixture out = diffused_marginal(one, s, t);
            CHECK(out.means[0][0] == doctest::Approx(mc * 2.0).epsilon(1e-14));
            CHECK(out.variances[0] ==
                  doctest::Approx(s.alpha_bar(t) * 0.04 + v).epsilon(1e-12));
        }
    }
}

namespace {

// Brute-force Bayes route for the denoising posterior density at x: prior is
// the diffused marginal at s, the likelihood is the s->t Gaussian transition.
// Kept outside the closed-form product/evidence algebra under test.
struct BayesOracle {
    GaussianMixture prior;
    double c, w2, xt;

    BayesOracle(const GaussianMixture& mix, const DiffusionSchedule& s, double xt_, std::size_t t,
                std::size_t sstep)
        : prior(diffused_marginal(mix, s, sstep)), xt(xt_) {
        const double ratio = s.alpha_bar(t) / s.alpha_bar(sstep);
        c = std::sqrt(ratio);
        w2 = 1.0 - ratio;
    }

    double numerator(double x) const {
        return prior.pdf({x}) *
               std::exp(-0.5 * (xt - c * x) * (xt - c * x) / w2) / std::sqrt(2.0 * M_PI * w2);
    }
};

}  // namespace

TEST_CASE("closed-form posterior equals Bayes quadrature (TV < 1e-6)") {
    Rng rng(808);
    for (int inst = 0; inst < 20; ++inst) {
        // random bimodal-ish mixture
        GaussianMixture mix;
        mix.dim = 1;
        const std::size_t K = 1 + rng.next_u64() % 3;
        std::vector<double> w(K);
        double sum = 0;
        for (auto& x : w) {
            x = 0.2 + rng.uniform();
            sum += x;
        }
        for (auto& x : w) x /= sum;
        mix.weights = w;
        for (std::size_t k = 0; k < K; ++k) {
            mix.means.push_back({3.0 * (2.0 * rng.uniform() - 1.0)});
            mix.variances.push_back(0.05 + 0.5 * rng.uniform());
        }
        mix.validate();

        const std::size_t T = 4 + rng.next_u64() % 5;
        DiffusionSchedule sched(T);
        const std::size_t t = 2 + rng.next_u64() % (T - 1);
        const std::size_t s = rng.next_u64() % t;
        const double xt = 2.0 * (2.0 * rng.uniform() - 1.0);

        DenoisingPosterior post = true_denoising_posterior(mix, sched, {xt}, t, s);
        BayesOracle oracle(mix, sched, xt, t, s);

        const double m = post.mix.mean1d();
        const double sd = std::sqrt(post.mix.var1d());
        const std::size_t n = 20001;
        const double lo = m - 10 * sd, hi = m + 10 * sd;
        const double h = (hi - lo) / static_cast<double>(n - 1);
        // normalize the Bayes numerator on the same grid, then accumulate TV
        double z = 0;
        std::vector<double> num(n);
        for (std::size_t i = 0; i < n; ++i) {
            num[i] = oracle.numerator(lo + h * static_cast<double>(i));
            z += (i == 0 || i + 1 == n) ? 0.5 * num[i] : num[i];
        }
        z *= h;
        double tv = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = lo + h * static_cast<double>(i);
            const double diff = std::abs(num[i] / z - post.mix.pdf({x}));
            tv += (i == 0 || i + 1 == n) ? 0.5 * diff : diff;
        }
        tv *= 0.5 * h;
        CHECK_MESSAGE(tv < 1e-6, "instance " << inst << " tv=" << tv);
    }
}

TEST_CASE("posterior normalizes to one under quadrature") {
    GaussianMixture mix = make_bimodal1d();
    DiffusionSchedule s(6);
    for (std::size_t gap : {1u, 2u, 4u}) {
        DenoisingPosterior post = true_denoising_posterior(mix, s, {0.0}, 5, 5 - gap);
        CHECK(std::abs(quadrature_mass(post) - 1.0) < 1e-6);
    }
}

TEST_CASE("symmetric bimodal posterior at the symmetry point has equal weights") {
    GaussianMixture mix = make_bimodal1d(1.0, 0.01);
    DiffusionSchedule s(6);
    DenoisingPosterior post = true_denoising_posterior(mix, s, {0.0}, 5, 1);
    REQUIRE(post.mix.components() == 2);
    CHECK(post.mix.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(post.mix.weights[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("local maxima count is nondecreasing in the step gap") {
    GaussianMixture mix = make_bimodal1d();
    DiffusionSchedule s(6);
    std::vector<std::size_t> maxima;
    std::vector<double> kls;
    for (std::size_t gap : {1u, 2u, 4u}) {
        DenoisingPosterior post = true_denoising_posterior(mix, s, {0.0}, 5, 5 - gap);
        maxima.push_back(count_local_maxima(post));
        kls.push_back(gaussian_fit_kl(post));
    }
    INFO("maxima: " << maxima[0] << " " << maxima[1] << " " << maxima[2]);
    INFO("kl: " << kls[0] << " " << kls[1] << " " << kls[2]);
    CHECK(maxima[0] <= maxima[1]);
    CHECK(maxima[1] <= maxima[2]);
    CHECK(maxima[0] == 1);
    CHECK(maxima[2] >= 2);
    CHECK(kls[0] < kls[1]);
    CHECK(kls[1] < kls[2]);
}

TEST_CASE("gaussian_fit_kl") {
    SUBCASE("single Gaussian gives zero") {
        GaussianMixture one;
        one.dim = 1;
        one.weights = {1.0};
        one.means = {{0.7}};
        one.variances = {0.3};
        one.validate();
        DenoisingPosterior post{one};
        CHECK(std::abs(gaussian_fit_kl(post)) < 1e-8);
    }
    SUBCASE("small steps are Gaussian: gap 1 at T=100") {
        GaussianMixture mix = make_bimodal1d();
        DiffusionSchedule s(100);
        const std::size_t t = 75;
        const double xq = diffused_marginal(mix, s, t).quantile1d(0.75);
        DenoisingPosterior post = true_denoising_posterior(mix, s, {xq}, t, t - 1);
        CHECK(gaussian_fit_kl(post) < 1e-3);
    }
    SUBCASE("well-separated bimodal posterior is far from Gaussian") {
        GaussianMixture mix = make_bimodal1d(1.0, 0.05);
        DiffusionSchedule s(4);
        DenoisingPosterior post = true_denoising_posterior(mix, s, {0.0}, 4, 0);
        CHECK(gaussian_fit_kl(post) > 0.1);
    }
}

TEST_CASE("small-step limit: KL nonincreasing as T doubles at matched time") {
    GaussianMixture mix = make_bimodal1d();
    double prev = 1e300;
    for (std::size_t T : {8u, 16u, 32u, 64u, 128u}) {
        DiffusionSchedule s(T);
        const std::size_t t = (3 * T) / 4;
        const double xq = diffused_marginal(mix, s, t).quantile1d(0.75);
        const double kl = gaussian_fit_kl(true_denoising_posterior(mix, s, {xq}, t, t - 1));
        INFO("T=" << T << " kl=" << kl);
        CHECK(kl <= prev);
        prev = kl;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("25-gaussians construction and sampling") {
    GaussianMixture mix = make_25gaussians();
    REQUIRE(mix.components() == 25);
    SUBCASE("equal weights") {
        for (double w : mix.weights) CHECK(w == doctest::Approx(0.04).epsilon(1e-14));
    }
    SUBCASE("every mode attracts between 3% and 5% of samples") {
        Rng rng(6);
        const std::size_t n = 100000;
        std::vector<std::size_t> counts(25, 0);
        for (std::size_t i = 0; i < n; ++i) ++counts[mix.sample_component(rng)];
        for (auto c : counts) {
            const double f = static_cast<double>(c) / static_cast<double>(n);
            CHECK(f > 0.03);
            CHECK(f < 0.05);
        }
    }
    SUBCASE("sample mean is near the origin") {
        Rng rng(8);
        Tensor pts = mix.sample_matrix(100000, rng);
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < 100000; ++i) {
            mx += pts.at(2 * i);
            my += pts.at(2 * i + 1);
        }
        mx /= 100000;
        my /= 100000;
        // per-coordinate variance is 8.0025, so 5 sigma of the mean ~ 0.045
        CHECK(std::abs(mx) < 0.045);
        CHECK(std::abs(my) < 0.045);
    }
    SUBCASE("invalid stddev rejected") {
        CHECK_THROWS_AS(make_25gaussians(0.0), Error);
    }
}

TEST_CASE("posterior argument validation") {
    GaussianMixture mix = make_bimodal1d();
    DiffusionSchedule s(4);
    CHECK_THROWS_AS(true_denoising_posterior(mix, s, {0.0}, 2, 2), Error);
    CHECK_THROWS_AS(true_denoising_posterior(mix, s, {0.0}, 2, 3), Error);
    CHECK_THROWS_AS(true_denoising_posterior(mix, s, {0.0, 0.0}, 2, 1), Error);
    CHECK_THROWS_AS(true_denoising_posterior(mix, s, {0.0}, 5, 1), Error);
}

TEST_CASE("gaussian_fit_kl rejects unnormalized input") {
    GaussianMixture bad = make_bimodal1d();
    bad.weights = {0.4, 0.4};
    CHECK_THROWS_AS(gaussian_fit_kl(DenoisingPosterior{bad}), Error);
}
