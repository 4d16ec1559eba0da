#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cbdae/series.hpp"
#include "cbdae/training.hpp"

namespace cbdae {

// Quadruple-tank process in the non-minimum-phase configuration. Units:
// areas cm^2, levels cm, gravity cm/s^2, pump gains cm^3/(s V).
struct TankParams {
    std::array<double, 4> tank_area = {28.0, 28.0, 28.0, 28.0};
    std::array<double, 4> outlet_area = {0.071, 0.071, 0.071, 0.071};
    double gravity = 981.0;
    std::array<double, 2> pump_gain = {20.0, 20.0};
    std::array<double, 2> valve_split = {0.43, 0.34};  // gamma_1, gamma_2
    double level_max = 50.0;

    void validate() const;  // positivity and 0 < g1 + g2 < 1
};

using TankLevels = std::array<double, 4>;
using PumpInput = std::array<double, 2>;

TankLevels tank_derivative(const TankParams& p, const TankLevels& h,
                           const PumpInput& u);

// One fixed-step RK4 update over dt; levels clamped to [0, level_max].
TankLevels step_dynamics(const TankParams& p, const TankLevels& h,
                         const PumpInput& u, double dt);

// Closed-form flow-balance equilibrium for a constant input.
TankLevels steady_state(const TankParams& p, const PumpInput& u);

struct ExcitationConfig {
    double dwell_min = 60.0;   // samples
    double dwell_max = 240.0;
    double level_min = 0.05;   // volts
    double level_max = 0.95;
};

// Piecewise-constant pseudo-random steps per pump, dwell times long against
// the dominant tank time constants.
std::vector<PumpInput> excite(std::size_t duration, std::mt19937_64& rng,
                              const ExcitationConfig& cfg = {});

struct NoiseSpec {
    double sigma = 1.0;          // white-noise std, cm
    double impulse_prob = 0.01;  // per sample and channel
    double rail_low = 0.0;       // impulse target levels
    double rail_high = 50.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// White Gaussian noise plus salt-and-pepper rail excursions on the level
// channels; inputs are assumed known and pass through untouched.
std::vector<TankLevels> corrupt(std::span<const TankLevels> clean,
                                const NoiseSpec& spec);

struct SimConfig {
    TankParams tank;
    ExcitationConfig excitation;
    std::size_t duration = 20000;  // samples
    double sample_period = 4.0;    // seconds; dominant time constants span
                                   // 15-20 samples at this rate
    std::size_t substeps = 40;     // RK4 steps per sample (dt = 0.1 s)
    double impulse_prob = 0.01;
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    std::uint64_t seed = 1;

    void validate() const;
};

// Paired clean/noisy dataset for one noise power. Channel layout
// [u1, u2, yt1..yt4] for the model; the clean levels are retained for
// evaluation only and never fed to training.
struct SimDataset {
    double sigma = 0.0;
    Series model_series;  // u1,u2,ytilde1..ytilde4
    Series clean_series;  // u1,u2,y1..y4
    std::size_t train_end = 0;  // sample index boundaries
    std::size_t val_end = 0;

    TrainData train_data() const;
    Series test_model() const { return model_series.slice(val_end, model_series.length()); }
    Series test_clean() const { return clean_series.slice(val_end, clean_series.length()); }
};

// One shared clean trajectory, one corrupted copy per noise power.
std::vector<SimDataset> generate_dataset(const SimConfig& cfg,
                                         std::span<const double> sigmas);

// Simulates the tank over an explicit input sequence.
std::vector<TankLevels> simulate(const TankParams& p, std::span<const PumpInput> u,
                                 const TankLevels& h0, double sample_period,
                                 std::size_t substeps);

// CSV layout: step,u1,u2,y1..y4,ytilde1..ytilde4, full 64-bit precision.
void write_dataset_csv(const std::string& path, const SimDataset& ds);
SimDataset read_dataset_csv(const std::string& path, double train_fraction = 0.8,
                            double val_fraction = 0.1);

}  // namespace cbdae
