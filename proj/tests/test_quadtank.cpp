#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "cbdae/csv.hpp"
#include "cbdae/quadtank.hpp"
#include "support/test_helpers.hpp"

using namespace cbdae;

namespace {

// Independent fixed-point oracle on the flow-balance equations; iterates
// level -> implied level until convergence instead of using closed forms.
TankLevels balance_oracle(const TankParams& p, const PumpInput& u) {
    TankLevels h = {5.0, 5.0, 5.0, 5.0};
    const double g1 = p.valve_split[0], g2 = p.valve_split[1];
    for (int it = 0; it < 20000; ++it) {
        TankLevels next;
        auto inval = [&](double inflow, std::size_t i) {
            const double v = inflow / (p.outlet_area[i] *
                                       std::sqrt(2.0 * p.gravity));
            return v * v;
        };
        next[2] = inval((1.0 - g2) * p.pump_gain[1] * u[1], 2);
        next[3] = inval((1.0 - g1) * p.pump_gain[0] * u[0], 3);
        next[0] = inval(g1 * p.pump_gain[0] * u[0] +
                            p.outlet_area[2] *
                                std::sqrt(2.0 * p.gravity * std::max(h[2], 0.0)),
                        0);
        next[1] = inval(g2 * p.pump_gain[1] * u[1] +
                            p.outlet_area[3] *
                                std::sqrt(2.0 * p.gravity * std::max(h[3], 0.0)),
                        1);
        double delta = 0.0;
        for (std::size_t i = 0; i < 4; ++i)
            delta = std::max(delta, std::fabs(next[i] - h[i]));
        h = next;
        if (delta < 1e-13) break;
    }
    return h;
}

}  // namespace

TEST_CASE("default parameters satisfy the non-minimum-phase constraint") {
    TankParams p;
    CHECK_NOTHROW(p.validate());
    CHECK(p.valve_split[0] + p.valve_split[1] < 1.0);

    TankParams bad;
    bad.valve_split = {0.7, 0.6};
    CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("zero input and empty tanks stay at the equilibrium") {
    TankParams p;
    TankLevels h = {0, 0, 0, 0};
    for (int step = 0; step < 100; ++step)
        h = step_dynamics(p, h, {0.0, 0.0}, 0.1);
    for (double v : h) CHECK(v == 0.0);
}

TEST_CASE("constant input converges to the flow-balance equilibrium") {
    TankParams p;
    const PumpInput u = {0.55, 0.45};
    const TankLevels oracle = balance_oracle(p, u);
    TankLevels h = {1.0, 1.0, 1.0, 1.0};
    for (int step = 0; step < 60000; ++step) h = step_dynamics(p, h, u, 0.1);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(std::fabs(h[i] - oracle[i]) < 1e-6);

    // the closed-form helper must agree with the numeric oracle too
    const TankLevels closed = steady_state(p, u);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(std::fabs(closed[i] - oracle[i]) < 1e-9);
}

TEST_CASE("with pumps off the total volume is non-increasing") {
    TankParams p;
    TankLevels h = {20.0, 15.0, 10.0, 5.0};
    double prev = h[0] + h[1] + h[2] + h[3];
    for (int step = 0; step < 2000; ++step) {
        h = step_dynamics(p, h, {0.0, 0.0}, 0.1);
        const double total = h[0] + h[1] + h[2] + h[3];
        CHECK(total <= prev + 1e-12);
        prev = total;
    }
}

TEST_CASE("excitation respects the voltage range and is reproducible") {
    auto rng1 = make_rng(9, "exc");
    auto rng2 = make_rng(9, "exc");
    auto a = excite(10000, rng1);
    auto b = excite(10000, rng2);
    CHECK(a.size() == 10000);
    std::size_t transitions = 0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        CHECK(a[t][0] >= 0.0);
        CHECK(a[t][0] <= 1.0);
        CHECK(a[t][1] >= 0.0);
        CHECK(a[t][1] <= 1.0);
        CHECK(a[t][0] == b[t][0]);
        if (t > 0 && (a[t][0] != a[t - 1][0] || a[t][1] != a[t - 1][1]))
            ++transitions;
    }
    CHECK(transitions >= 10);
}

TEST_CASE("corrupt with no noise is the identity") {
    std::vector<TankLevels> clean = {{1, 2, 3, 4}, {5, 6, 7, 8}};
    NoiseSpec spec;
    spec.sigma = 0.0;
    spec.impulse_prob = 0.0;
    auto noisy = corrupt(clean, spec);
    for (std::size_t t = 0; t < clean.size(); ++t)
        for (std::size_t c = 0; c < 4; ++c) CHECK(noisy[t][c] == clean[t][c]);
}

TEST_CASE("white noise std lands within one percent at sigma = 1") {
    const std::size_t n = 250000;  //一million scalar samples across channels
    std::vector<TankLevels> clean(n, {10, 10, 10, 10});
    NoiseSpec spec;
    spec.sigma = 1.0;
    spec.impulse_prob = 0.0;
    spec.seed = 42;
    auto noisy = corrupt(clean, spec);
    double sq = 0.0;
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t c = 0; c < 4; ++c) {
            const double d = noisy[t][c] - 10.0;
            sq += d * d;
        }
    const double std_hat = std::sqrt(sq / double(4 * n));
    CHECK(std::fabs(std_hat - 1.0) < 0.01);
}

TEST_CASE("impulse count stays within three sigma of the binomial expectation") {
    const std::size_t n = 25000;  // 100k scalar draws
    std::vector<TankLevels> clean(n, {25, 25, 25, 25});
    NoiseSpec spec;
    spec.sigma = 0.0;
    spec.impulse_prob = 0.01;
    spec.seed = 43;
    auto noisy = corrupt(clean, spec);
    std::size_t impulses = 0;
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t c = 0; c < 4; ++c)
            if (noisy[t][c] == 0.0 || noisy[t][c] == 50.0) ++impulses;
    const double total = 4.0 * double(n);
    const double expect = total * 0.01;
    const double sd = std::sqrt(total * 0.01 * 0.99);
    CHECK(std::fabs(double(impulses) - expect) < 3.0 * sd);
}

TEST_CASE("shared clean trajectory across noise powers") {
    SimConfig cfg;
    cfg.duration = 500;
    cfg.seed = 11;
    const std::vector<double> sigmas = {0.5, 4.0};
    auto sets = generate_dataset(cfg, sigmas);
    REQUIRE(sets.size() == 2);
    CHECK(sets[0].clean_series.data == sets[1].clean_series.data);
    CHECK(sets[0].model_series.data != sets[1].model_series.data);
}

TEST_CASE("splits are chronological and window-disjoint") {
    SimConfig cfg;
    cfg.duration = 1000;
    cfg.seed = 12;
    auto sets = generate_dataset(cfg, std::vector<double>{1.0});
    const auto& ds = sets[0];
    CHECK(ds.train_end == 800);
    CHECK(ds.val_end == 900);
    auto data = ds.train_data();
    CHECK(data.train.length() == 800);
    CHECK(data.validation.length() == 100);
    CHECK(ds.test_model().length() == 100);
    // windows drawn inside each split cannot touch another split
    CHECK(data.train.length() - 1 < ds.train_end);
}

TEST_CASE("levels stay smooth at the sampling rate") {
    SimConfig cfg;
    cfg.duration = 2000;
    cfg.seed = 13;
    auto sets = generate_dataset(cfg, std::vector<double>{0.5});
    const auto& clean = sets[0].clean_series;
    // bound: tau times the worst-case net fill rate of a single tank
    const TankParams& p = cfg.tank;
    const double max_inflow =
        (p.pump_gain[0] + p.pump_gain[1]) / *std::min_element(
            p.tank_area.begin(), p.tank_area.end());
    const double max_outflow =
        *std::max_element(p.outlet_area.begin(), p.outlet_area.end()) *
        std::sqrt(2.0 * p.gravity * p.level_max) /
        *std::min_element(p.tank_area.begin(), p.tank_area.end());
    const double bound = cfg.sample_period * (max_inflow + max_outflow);
    for (std::size_t t = 1; t < clean.length(); ++t)
        for (std::size_t c = 2; c < 6; ++c)
            CHECK(std::fabs(clean.at(t, c) - clean.at(t - 1, c)) <= bound);
}

TEST_CASE("generation is deterministic in the seed") {
    SimConfig cfg;
    cfg.duration = 400;
    cfg.seed = 14;
    auto a = generate_dataset(cfg, std::vector<double>{2.0});
    auto b = generate_dataset(cfg, std::vector<double>{2.0});
    CHECK(a[0].model_series.data == b[0].model_series.data);
}

TEST_CASE("dataset round-trips through CSV losslessly") {
    SimConfig cfg;
    cfg.duration = 300;
    cfg.seed = 15;
    auto sets = generate_dataset(cfg, std::vector<double>{1.5});
    const std::string path = "/tmp/cbdae_ds_roundtrip.csv";
    write_dataset_csv(path, sets[0]);
    auto back = read_dataset_csv(path, cfg.train_fraction, cfg.val_fraction);
    CHECK(back.model_series.data == sets[0].model_series.data);
    CHECK(back.clean_series.data == sets[0].clean_series.data);
    CHECK(back.train_end == sets[0].train_end);
    std::filesystem::remove(path);
}
