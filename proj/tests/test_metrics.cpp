#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "navlab/core/rng.hpp"
#include "navlab/metrics/metrics.hpp"

using namespace navlab;
using namespace navlab::metrics;

TEST_CASE("spl: hand-computed cases") {
    CHECK(spl(true, 4.0, 4.0) == 1.0);
    CHECK(spl(false, 4.0, 2.0) == 0.0);
    CHECK(spl(true, 4.0, 8.0) == 0.5);
    // actual shorter than shortest (stop radius effects) still caps at 1
    CHECK(spl(true, 4.0, 3.0) == 1.0);
    CHECK_THROWS_AS(spl(true, 0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(spl(true, -1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(spl(true, 1.0, -0.5), std::invalid_argument);
}

TEST_CASE("psnr: exact cases and the 100dB cap") {
    Image a(8, 8, 0.0), b(8, 8, 1.0);
    CHECK(psnr(a, a) == 100.0);
    CHECK(psnr(a, b) == doctest::Approx(0.0));
    Image c(8, 8, 0.0), d(8, 8, 0.1);  // MSE = 0.01 -> 20 dB
    CHECK(psnr(c, d) == doctest::Approx(20.0).epsilon(1e-12));
    Image e(4, 4, 0.0);
    CHECK_THROWS(psnr(a, e));
}

TEST_CASE("frechet: identical sets give zero, symmetric") {
    Rng rng(1);
    std::vector<std::vector<double>> a;
    for (int i = 0; i < 20; ++i) a.push_back({rng.normal(), rng.normal(), rng.normal()});
    CHECK(frechet_feature_distance(a, a) == doctest::Approx(0.0).epsilon(1e-9));

    std::vector<std::vector<double>> b;
    for (int i = 0; i < 24; ++i) b.push_back({1.0 + rng.normal(), rng.normal(), 2.0 + rng.normal()});
    const double ab = frechet_feature_distance(a, b);
    const double ba = frechet_feature_distance(b, a);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-9));
    CHECK(ab > 0.0);
}

TEST_CASE("frechet: equal diagonal covariances with mean shift give ||delta||^2") {
    // construct two sets with identical sample covariance, shifted means
    std::vector<std::vector<double>> a, b;
    const std::vector<std::vector<double>> base = {
        {1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}, {0.5, 0.5}, {-0.5, -0.5},
    };
    const std::vector<double> delta = {0.7, -0.3};
    for (const auto& r : base) {
        a.push_back(r);
        b.push_back({r[0] + delta[0], r[1] + delta[1]});
    }
    const double expect = delta[0] * delta[0] + delta[1] * delta[1];
    CHECK(frechet_feature_distance(a, b) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("frechet: sampled Gaussians approach the analytic value") {
    // d=2 Gaussians with known means and covariances
    Rng rng(7);
    const int n = 10000;
    std::vector<std::vector<double>> a, b;
    a.reserve(n);
    b.reserve(n);
    // A ~ N([0,0], diag(1, 4)); B ~ N([3,1], diag(2, 2))
    for (int i = 0; i < n; ++i) {
        a.push_back({rng.normal(), 2.0 * rng.normal()});
        b.push_back({3.0 + std::sqrt(2.0) * rng.normal(), 1.0 + std::sqrt(2.0) * rng.normal()});
    }
    // ||mu||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}) for diagonals: sum over dims
    const double analytic = (9.0 + 1.0) + (1.0 + 2.0 - 2.0 * std::sqrt(2.0)) + (4.0 + 2.0 - 2.0 * std::sqrt(8.0));
    const double measured = frechet_feature_distance(a, b);
    CHECK(std::fabs(measured - analytic) / analytic < 0.05);
}

TEST_CASE("frechet: degenerate covariance is regularized, not fatal") {
    std::vector<std::vector<double>> a, b;
    for (int i = 0; i < 8; ++i) {
        a.push_back({1.0, 2.0});  // zero variance
        b.push_back({1.0, 2.0});
    }
    CHECK(frechet_feature_distance(a, b) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("frechet: input validation") {
    std::vector<std::vector<double>> tiny = {{1.0, 2.0}, {0.5, 1.0}};
    CHECK_THROWS_AS(frechet_feature_distance(tiny, tiny), std::invalid_argument);  // n <= d
}

TEST_CASE("perceptual distance: identity, symmetry, psnr ranking agreement") {
    auto extractor = [](const Image& img) { return img.px; };
    Rng rng(3);
    Image base(16, 16);
    for (auto& v : base.px) v = rng.uniform();
    CHECK(perceptual_distance(extractor, base, base) == 0.0);

    // corrupt with increasing Gaussian noise; ranking must agree with PSNR
    std::vector<Image> corrupted;
    for (double sigma : {0.02, 0.08, 0.2}) {
        Image img = base;
        for (auto& v : img.px) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
        corrupted.push_back(img);
    }
    std::vector<double> pd, ps;
    for (const auto& img : corrupted) {
        pd.push_back(perceptual_distance(extractor, base, img));
        ps.push_back(psnr(base, img));
        CHECK(perceptual_distance(extractor, base, img) ==
              doctest::Approx(perceptual_distance(extractor, img, base)).epsilon(1e-12));
    }
    CHECK(pd[0] < pd[1]);
    CHECK(pd[1] < pd[2]);
    CHECK(ps[0] > ps[1]);
    CHECK(ps[1] > ps[2]);
}

TEST_CASE("EvalReport: aggregation invariants and round trip") {
    std::vector<EpisodeRecord> records;
    Rng rng(11);
    for (int i = 0; i < 30; ++i) {
        EpisodeRecord r;
        r.episode_id = "ep" + std::to_string(i);
        r.success = rng.uniform() < 0.6;
        r.steps = 5 + rng.uniform_index(50);
        r.shortest_length = 1.0 + rng.uniform(0.0, 3.0);
        r.path_length = r.shortest_length * (1.0 + rng.uniform(0.0, 1.0));
        r.spl = spl(r.success, r.shortest_length, r.path_length);
        records.push_back(r);
    }
    auto report = aggregate(records, {{"suite", "unit"}});

    double sr = 0.0, sp = 0.0;
    for (const auto& r : records) {
        sr += r.success;
        sp += r.spl;
        CHECK(r.spl <= (r.success ? 1.0 : 0.0));  // spl <= success indicator
    }
    CHECK(report.sr == doctest::Approx(sr / records.size()));
    CHECK(report.spl == doctest::Approx(sp / records.size()));
    CHECK(report.spl <= report.sr + 1e-12);  // SPL <= SR

    // permutation invariance
    auto shuffled = records;
    std::reverse(shuffled.begin(), shuffled.end());
    auto report2 = aggregate(shuffled, {{"suite", "unit"}});
    CHECK(report2.sr == doctest::Approx(report.sr).epsilon(1e-12));
    CHECK(report2.spl == doctest::Approx(report.spl).epsilon(1e-12));

    const auto j = report_to_json(report);
    const auto back = report_from_json(j);
    CHECK(back.sr == report.sr);
    CHECK(back.spl == report.spl);
    REQUIRE(back.records.size() == report.records.size());
    CHECK(back.records[3].episode_id == report.records[3].episode_id);
    CHECK(report_to_json(back).dump() == j.dump());
}
