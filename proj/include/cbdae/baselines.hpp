#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "cbdae/linalg.hpp"
#include "cbdae/quadtank.hpp"

namespace cbdae {

enum class WindowKind { mean, median, savitzky_golay };

struct WindowFilterConfig {
    WindowKind kind = WindowKind::median;
    std::size_t window = 5;
    std::size_t poly_order = 2;  // Savitzky-Golay only

    void validate() const;
};

// Causal trailing-window filter evaluated at the window's last point; the
// first w-1 outputs use the partial window.
std::vector<double> window_filter(std::span<const double> x,
                                  const WindowFilterConfig& cfg);

// s_0 = x_0; s_n = alpha x_n + (1 - alpha) s_{n-1}.
std::vector<double> ema_filter(std::span<const double> x, double alpha);

// Discrete-time linear model in deviation coordinates around an operating
// point: x+ = A x + B u, y = C x.
struct LinearStateModel {
    Mat a, b, c;
    Mat q, r;
    std::vector<double> x_op;
    std::vector<double> u_op;
    std::vector<double> y_op;

    void validate() const;
};

struct KalmanResult {
    std::vector<std::vector<double>> outputs;  // filtered C x-hat, absolute units
    Mat gain;        // final Kalman gain
    Mat covariance;  // final posterior covariance
};

KalmanResult kalman_filter(std::span<const std::vector<double>> measurements,
                           std::span<const std::vector<double>> inputs,
                           const LinearStateModel& model);

// Tank model linearized at an operating point and discretized over tau.
LinearStateModel linearize_tanks(const TankParams& p, const TankLevels& levels_op,
                                 const PumpInput& u_op, double tau, double q_diag,
                                 double r_diag);

// Continuous-time Jacobian of the tank dynamics; levels are floored at
// 1e-3 cm inside the derivative so sqrt stays differentiable.
Mat tank_jacobian(const TankParams& p, const TankLevels& levels);

struct EkfConfig {
    double tau = 1.0;
    std::size_t substeps = 10;
    double q_diag = 1e-3;
    double r_diag = 1.0;
};

std::vector<TankLevels> ekf_filter(std::span<const TankLevels> measurements,
                                   std::span<const PumpInput> inputs,
                                   const TankParams& p, const EkfConfig& cfg);

struct ParticleConfig {
    std::size_t n_particles = 1000;
    double tau = 1.0;
    std::size_t substeps = 10;
    double process_std = 0.05;  // cm per step, per tank
    double meas_std = 1.0;
    std::uint64_t seed = 0;
};

struct ParticleResult {
    std::vector<TankLevels> levels;
    std::size_t reinit_count = 0;  // weight-collapse recoveries
};

// Bootstrap filter: dynamics propagation plus process noise, Gaussian
// likelihood weighting, systematic resampling below half effective size.
ParticleResult particle_filter(std::span<const TankLevels> measurements,
                               std::span<const PumpInput> inputs,
                               const TankParams& p, const ParticleConfig& cfg);

}  // namespace cbdae
