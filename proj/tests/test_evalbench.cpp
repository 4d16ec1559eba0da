#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cbdae/csv.hpp"
#include "cbdae/evalbench.hpp"
#include "support/test_helpers.hpp"

using namespace cbdae;

TEST_CASE("rmse forced cases") {
    std::vector<double> a = {1, 2, 3, 4};
    CHECK(rmse(a, a) == 0.0);
    std::vector<double> b = {2, 3, 4, 5};
    CHECK(rmse(a, b) == doctest::Approx(1.0).epsilon(1e-14));
    std::vector<double> c = {1, 2, 3};
    CHECK_THROWS_AS((void)rmse(a, c), ContractError);
}

TEST_CASE("rmse of pure gaussian noise approaches sigma") {
    auto rng = make_rng(1, "rmse");
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t n = 1000000;
    std::vector<double> clean(n, 5.0), noisy(n);
    for (std::size_t i = 0; i < n; ++i) noisy[i] = clean[i] + noise(rng);
    CHECK(std::fabs(rmse(clean, noisy) - 1.0) < 0.02);
}

TEST_CASE("rmse_levels aligns every method on the post-warmup range") {
    std::vector<TankLevels> clean(10, {1, 2, 3, 4});
    std::vector<TankLevels> est = clean;
    for (std::size_t t = 0; t < 3; ++t) est[t] = {9, 9, 9, 9};  // warm-up junk
    auto r = rmse_levels(clean, est, 3);
    CHECK(r.average == 0.0);
    CHECK_THROWS_AS((void)rmse_levels(clean, est, 10), ContractError);
}

TEST_CASE("pca on a line leaves no second-component variance") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> t(-3, 3);
    std::vector<std::vector<double>> pts;
    const std::vector<double> dir = {0.267261241912424, 0.534522483824849,
                                     0.801783725737273};  // normalized (1,2,3)
    for (int i = 0; i < 200; ++i) {
        const double s = t(rng);
        pts.push_back({7.0 + s * dir[0], -2.0 + s * dir[1], 0.5 + s * dir[2]});
    }
    auto pca = pca_fit(pts, 2);
    CHECK(pca.explained[0] > 1.0);
    if (pca.n_components > 1)
        CHECK(pca.explained[1] < 1e-10 * pca.explained[0]);
    else
        CHECK(pca.rank_deficient);
    // principal direction is the line direction up to sign
    double dot_dir = 0.0;
    for (std::size_t i = 0; i < 3; ++i) dot_dir += pca.components(0, i) * dir[i];
    CHECK(std::fabs(std::fabs(dot_dir) - 1.0) < 1e-6);
}

TEST_CASE("pca components are orthonormal") {
    std::mt19937_64 rng(3);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 300; ++i) pts.push_back(testhelp::random_values(5, rng));
    auto pca = pca_fit(pts, 2);
    REQUIRE(pca.n_components == 2);
    double n1 = 0, n2 = 0, d12 = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        n1 += pca.components(0, i) * pca.components(0, i);
        n2 += pca.components(1, i) * pca.components(1, i);
        d12 += pca.components(0, i) * pca.components(1, i);
    }
    CHECK(std::fabs(n1 - 1.0) < 1e-10);
    CHECK(std::fabs(n2 - 1.0) < 1e-10);
    CHECK(std::fabs(d12) < 1e-10);
}

TEST_CASE("pca explained variance is near-equal on an isotropic cloud") {
    auto rng = make_rng(4, "pca");
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 20000; ++i) pts.push_back({g(rng), g(rng)});
    auto pca = pca_fit(pts, 2);
    REQUIRE(pca.n_components == 2);
    CHECK(pca.explained[0] / pca.explained[1] < 1.1);
}

TEST_CASE("pca projection is invariant to rigid translation") {
    std::mt19937_64 rng(5);
    std::vector<std::vector<double>> pts, shifted;
    for (int i = 0; i < 100; ++i) {
        auto v = testhelp::random_values(4, rng);
        pts.push_back(v);
        for (std::size_t k = 0; k < v.size(); ++k) v[k] += 100.0;
        shifted.push_back(v);
    }
    auto pa = pca_fit(pts, 2);
    auto pb = pca_fit(shifted, 2);
    auto ta = pca_transform(pa, pts);
    auto tb = pca_transform(pb, shifted);
    for (std::size_t i = 0; i < ta.size(); ++i)
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(std::fabs(std::fabs(ta[i][k]) - std::fabs(tb[i][k])) < 1e-8);
}

TEST_CASE("smoothness score: straight line at constant velocity is zero") {
    std::vector<std::array<double, 2>> line;
    for (int t = 0; t < 50; ++t) line.push_back({0.5 * t, -0.25 * t});
    CHECK(smoothness_score(line) < 1e-12);
    CHECK_THROWS_AS((void)smoothness_score(
                        std::vector<std::array<double, 2>>{{0, 0}, {1, 1}}),
                    ContractError);
}

TEST_CASE("smoothness score of white noise matches the Monte-Carlo reference") {
    auto rng = make_rng(6, "smooth");
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<std::array<double, 2>> trace;
    for (int t = 0; t < 200000; ++t) trace.push_back({g(rng), g(rng)});
    // second differences of iid N(0,1) have per-axis variance 6; the norm of
    // a 2-D gaussian with that scale averages sqrt(6) * sqrt(pi/2); the
    // normalizing spread is sqrt(2)
    const double expected = std::sqrt(6.0) * std::sqrt(M_PI / 2.0) / std::sqrt(2.0);
    CHECK(std::fabs(smoothness_score(trace) - expected) < 0.02);
}

TEST_CASE("paper reference table answers the cells the paper published") {
    CHECK(paper_table1_reference("noisy", 0.5) == doctest::Approx(2.165));
    CHECK(paper_table1_reference("cbdae", 1.0) == doctest::Approx(0.318));
    CHECK(paper_table1_reference("median", 1.0) == doctest::Approx(0.917));
    CHECK(paper_table1_reference("bdae_noreg", 1.0) == doctest::Approx(0.502));
    CHECK_FALSE(paper_table1_reference("cbdae", 0.75).has_value());
    CHECK_FALSE(paper_table1_reference("unknown", 1.0).has_value());
}

TEST_CASE("classical-only benchmark grid is exhaustive and deterministic") {
    BenchConfig cfg;
    cfg.sigmas = {1.0};
    cfg.methods = {"noisy", "mean", "median", "ema"};
    cfg.sim.duration = 1200;
    cfg.train.window = 10;  // warm-up alignment only; no networks trained
    cfg.window_scan = {3, 5, 7};
    cfg.seed = 33;

    auto report = run_benchmark(cfg);
    REQUIRE(report.cells.size() == 4);
    for (const auto& cell : report.cells) {
        CHECK(cell.available);
        CHECK(std::isfinite(cell.rmse));
        CHECK(cell.runtime_s >= 0.0);
    }
    // the identity method reproduces the noisy row exactly, and smoothing
    // beats doing nothing
    auto noisy_val = report.lookup("noisy", 1.0);
    auto mean_val = report.lookup("mean", 1.0);
    REQUIRE(noisy_val.has_value());
    REQUIRE(mean_val.has_value());
    CHECK(*mean_val < *noisy_val);

    auto again = run_benchmark(cfg);
    for (std::size_t i = 0; i < report.cells.size(); ++i)
        CHECK(report.cells[i].rmse == again.cells[i].rmse);

    const std::string path = "/tmp/cbdae_report_test.csv";
    report.write_csv(path);
    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "method,sigma,rmse,paper_reference,runtime_s");
    std::size_t rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 4);
    std::filesystem::remove(path);
}

TEST_CASE("unknown bench methods are rejected") {
    BenchConfig cfg;
    cfg.methods = {"wavelet"};
    CHECK_THROWS_AS((void)run_benchmark(cfg), ContractError);
}

TEST_CASE("a failing cell is reported absent and the run continues") {
    BenchConfig cfg;
    cfg.sigmas = {1.0};
    cfg.methods = {"noisy", "cbdae"};
    cfg.sim.duration = 800;
    cfg.train.window = 10;
    cfg.train.batch = 8;
    cfg.train.seq_members = 4;
    cfg.train.rand_members = 3;  // s + r != B: the network cell must fail
    cfg.seed = 5;
    auto report = run_benchmark(cfg);
    REQUIRE(report.cells.size() == 2);
    CHECK(report.cells[0].available);
    CHECK_FALSE(report.cells[1].available);
    CHECK_FALSE(report.cells[1].note.empty());
}
