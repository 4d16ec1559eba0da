#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cbdae/baselines.hpp"
#include "cbdae/linalg.hpp"
#include "cbdae/quadtank.hpp"
#include "cbdae/training.hpp"

namespace cbdae {

// Root mean squared error between two equal-length sequences.
double rmse(std::span<const double> reference, std::span<const double> estimate);

struct ChannelRmse {
    std::vector<double> per_channel;
    double average = 0.0;
};

// Per-level RMSE over an aligned index range, averaged across channels.
// Rows before `warmup` are skipped so every method is scored on the same
// post-warm-up range.
ChannelRmse rmse_levels(std::span<const TankLevels> clean,
                        std::span<const TankLevels> estimate, std::size_t warmup);

// --- PCA -----------------------------------------------------------------------

struct PcaResult {
    std::vector<double> center;
    Mat components;                    // one row per component
    std::vector<double> explained;     // variance along each component
    std::size_t n_components = 0;
    bool rank_deficient = false;
};

// Top principal directions by power iteration with deflation.
PcaResult pca_fit(std::span<const std::vector<double>> samples,
                  std::size_t dims = 2);

std::vector<std::array<double, 2>> pca_transform(
    const PcaResult& pca, std::span<const std::vector<double>> samples);

struct LatentTrace {
    std::string label;
    std::vector<std::array<double, 2>> points;
};

// Mean second-difference norm of the projected trajectory, normalized by the
// trajectory's RMS spread; straight constant-velocity traces score 0.
double smoothness_score(std::span<const std::array<double, 2>> trace);

// Mean pointwise distance between two aligned traces, normalized by their
// joint RMS spread.
double trace_separation(std::span<const std::array<double, 2>> a,
                        std::span<const std::array<double, 2>> b);

// --- benchmark -------------------------------------------------------------------

// Published Table-I RMSE for (method, sigma), attached to reports as
// reference metadata only.
std::optional<double> paper_table1_reference(const std::string& method,
                                             double sigma);

const std::vector<std::string>& all_bench_methods();

struct BenchConfig {
    std::vector<double> sigmas = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0};
    std::vector<std::string> methods;  // empty = all
    SimConfig sim;
    TrainConfig train;
    std::vector<std::size_t> window_scan = {3, 5, 7, 9, 11, 13, 15, 17, 19,
                                            21, 23, 25, 27, 29, 31};
    std::size_t sg_order = 2;
    double ema_alpha = 0.33;
    double kf_q = 1e-3;
    ParticleConfig particle;
    std::size_t jobs = 1;
    std::uint64_t seed = 1;
};

struct BenchCell {
    std::string method;
    double sigma = 0.0;
    double rmse = 0.0;
    std::optional<double> paper_reference;
    double runtime_s = 0.0;
    std::optional<std::size_t> chosen_window;  // window-filter scans
    bool available = true;
    std::string note;
};

struct BenchReport {
    std::vector<BenchCell> cells;
    std::uint64_t seed = 0;

    void write_csv(const std::string& path) const;
    std::optional<double> lookup(const std::string& method, double sigma) const;
};

BenchReport run_benchmark(const BenchConfig& cfg);

// --- latent study ------------------------------------------------------------------

struct LatentStudyConfig {
    SimConfig sim;
    TrainConfig train;
    double sigma = 3.0;
    std::vector<std::string> variants = {"cbdae", "bdae_noreg"};
    std::size_t trajectory_length = 1200;  // samples per test trajectory
    double perturbation = 0.05;            // volts added to the second trajectory
    std::uint64_t seed = 1;
};

struct LatentStudyVariant {
    std::string variant;
    LatentTrace trace_a;
    LatentTrace trace_b;
    double smoothness_a = 0.0;
    double smoothness_b = 0.0;
    double separation = 0.0;

    void write_csv(const std::string& path) const;  // t,pc1,pc2,label
};

struct LatentStudyResult {
    std::vector<LatentStudyVariant> variants;
};

LatentStudyResult run_latent_study(const LatentStudyConfig& cfg);

}  // namespace cbdae
