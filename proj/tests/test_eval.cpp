#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "ddgan/eval.hpp"
#include "ddgan/mixture.hpp"
#include "testutil.hpp"

using namespace ddgan;

TEST_CASE("high-quality fraction of true samples matches the chi-square radius") {
    // P(||x - mu|| <= 3 sigma) in 2-D = 1 - exp(-9/2) = 0.988891...
    GaussianMixture mix = make_25gaussians();
    Rng rng(17);
    const std::size_t n = 100000;
    Tensor samples = mix.sample_matrix(n, rng);
    ModeReport rep = mode_report(samples, mix);
    const double expect = 1.0 - std::exp(-4.5);
    CHECK(std::abs(rep.high_quality_fraction - expect) < 0.002);
    CHECK(rep.modes_covered == 25);
    CHECK(rep.total_modes == 25);
    CHECK(rep.mode_kl < 0.01);
    CHECK(!rep.low_sample_warning);
}

TEST_CASE("all samples on one center collapse the report") {
    GaussianMixture mix = make_25gaussians();
    const std::size_t n = 10000;
    std::vector<double> pts(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        pts[2 * i] = mix.means[0][0];
        pts[2 * i + 1] = mix.means[0][1];
    }
    ModeReport rep = mode_report(Tensor::constant({n, 2}, pts), mix);
    CHECK(rep.modes_covered == 1);
    CHECK(rep.high_quality_fraction == 1.0);
    // closed-form smoothed KL for total collapse
    const double denom = static_cast<double>(n + 25);
    double expect = ((n + 1) / denom) * std::log(((n + 1) / denom) / 0.04);
    expect += 24.0 * (1.0 / denom) * std::log((1.0 / denom) / 0.04);
    CHECK(rep.mode_kl == doctest::Approx(expect).epsilon(1e-12));
    CHECK(rep.mode_kl == doctest::Approx(std::log(25.0)).epsilon(0.01));
}

TEST_CASE("uniform coverage of 24 of 25 modes") {
    GaussianMixture mix = make_25gaussians();
    const std::size_t per = 1000;
    std::vector<double> pts;
    for (std::size_t k = 0; k < 24; ++k)
        for (std::size_t i = 0; i < per; ++i) {
            pts.push_back(mix.means[k][0]);
            pts.push_back(mix.means[k][1]);
        }
    const std::size_t n = 24 * per;
    ModeReport rep = mode_report(Tensor::constant({n, 2}, pts), mix);
    CHECK(rep.modes_covered == 24);
    const double denom = static_cast<double>(n + 25);
    double expect = 24.0 * ((per + 1) / denom) * std::log(((per + 1) / denom) / 0.04);
    expect += (1.0 / denom) * std::log((1.0 / denom) / 0.04);
    CHECK(rep.mode_kl == doctest::Approx(expect).epsilon(1e-12));
    // the unsmoothed value is log(25/24) ~ 0.0408; smoothing shifts it a little
    CHECK(rep.mode_kl == doctest::Approx(std::log(25.0 / 24.0)).epsilon(0.15));
}

TEST_CASE("mode_kl is permutation invariant") {
    GaussianMixture mix = make_25gaussians();
    Rng rng(23);
    Tensor samples = mix.sample_matrix(2000, rng);
    ModeReport a = mode_report(samples, mix);
    auto v = samples.values();
    // reverse rows
    const std::size_t n = 2000;
    for (std::size_t i = 0; i < n / 2; ++i) {
        std::swap(v[2 * i], v[2 * (n - 1 - i)]);
        std::swap(v[2 * i + 1], v[2 * (n - 1 - i) + 1]);
    }
    ModeReport b = mode_report(Tensor::constant({n, 2}, v), mix);
    CHECK(a.mode_kl == b.mode_kl);
    CHECK(a.modes_covered == b.modes_covered);
    CHECK(a.high_quality_fraction == b.high_quality_fraction);
}

TEST_CASE("mode_kl decreases with sample size on true data") {
    GaussianMixture mix = make_25gaussians();
    Rng rng(29);
    auto median_kl = [&](std::size_t n) {
        std::vector<double> kls;
        for (int rep = 0; rep < 10; ++rep) {
            Tensor s = mix.sample_matrix(n, rng);
            kls.push_back(mode_report(s, mix).mode_kl);
        }
        std::sort(kls.begin(), kls.end());
        return 0.5 * (kls[4] + kls[5]);
    };
    const double k3 = median_kl(1000);
    const double k4 = median_kl(10000);
    const double k5 = median_kl(100000);
    CHECK(k4 < k3);
    CHECK(k5 < k4);
}

TEST_CASE("input validation") {
    GaussianMixture mix = make_25gaussians();
    SUBCASE("empty sample set") {
        CHECK_THROWS_AS(mode_report(Tensor::zeros({0, 2}), mix), Error);
    }
    SUBCASE("overlapping modes rejected") {
        GaussianMixture tight;
        tight.dim = 1;
        tight.weights = {0.5, 0.5};
        tight.means = {{0.0}, {0.1}};
        tight.variances = {1.0, 1.0};
        tight.validate();
        CHECK_THROWS_AS(assign_modes(Tensor::zeros({5, 1}), tight, 3.0), Error);
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(mode_report(Tensor::zeros({5, 3}), mix), ShapeError);
    }
    SUBCASE("low sample warning below 10x modes") {
        Rng rng(3);
        Tensor s = mix.sample_matrix(100, rng);
        CHECK(mode_report(s, mix).low_sample_warning);
    }
}

TEST_CASE("report json contains every field") {
    ModeReport r;
    r.modes_covered = 24;
    r.total_modes = 25;
    r.high_quality_fraction = 0.75;
    r.mode_kl = 0.125;
    r.n_samples = 4000;
    std::string j = report_to_json(r, "run-a");
    for (const char* key : {"label", "modes_covered", "total_modes", "high_quality_fraction",
                            "mode_kl", "n_samples", "low_sample_warning"})
        CHECK(j.find(key) != std::string::npos);
    CHECK(j.find("run-a") != std::string::npos);
}

TEST_CASE("compare_runs") {
    SUBCASE("single run gives a single row") {
        std::string csv = compare_runs({{"solo", {{"T", "4"}, {"modes", "25"}}}});
        CHECK(csv == "label,T,modes\nsolo,4,25\n");
    }
    SUBCASE("rows keep caller order and missing cells stay empty") {
        std::vector<RunSummary> rows{
            {"T1", {{"T", "1"}, {"modes", "12"}}},
            {"T2", {{"T", "2"}, {"modes", "20"}, {"kl", "0.5"}}},
            {"T4", {{"T", "4"}}},
        };
        std::string csv = compare_runs(rows);
        CHECK(csv ==
              "label,T,modes,kl\n"
              "T1,1,12,\n"
              "T2,2,20,0.5\n"
              "T4,4,,\n");
    }
}
