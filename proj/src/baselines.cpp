#include "cbdae/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace cbdae {

void WindowFilterConfig::validate() const {
    if (window == 0) throw ContractError("window filter: window must be >= 1");
    if (kind == WindowKind::savitzky_golay && poly_order >= window)
        throw ContractError("window filter: SG order must be below the window length");
}

namespace {

double window_mean(std::span<const double> w) {
    double acc = 0.0;
    for (double v : w) acc += v;
    return acc / static_cast<double>(w.size());
}

double window_median(std::span<const double> w, std::vector<double>& scratch) {
    scratch.assign(w.begin(), w.end());
    const std::size_t n = scratch.size();
    const std::size_t mid = n / 2;
    std::nth_element(scratch.begin(), scratch.begin() + mid, scratch.end());
    if (n % 2 == 1) return scratch[mid];
    const double hi = scratch[mid];
    const double lo = *std::max_element(scratch.begin(), scratch.begin() + mid);
    return 0.5 * (lo + hi);
}

// Least-squares polynomial through the trailing window on centered
// coordinates j - (m-1), so the fit value at the last point is the constant
// coefficient.
double window_savgol(std::span<const double> w, std::size_t order) {
    const std::size_t m = w.size();
    const std::size_t p = std::min(order, m - 1);
    Mat ata(p + 1, p + 1);
    Mat aty(p + 1, 1);
    std::vector<double> powers(p + 1);
    for (std::size_t j = 0; j < m; ++j) {
        const double x = static_cast<double>(j) - static_cast<double>(m - 1);
        double xp = 1.0;
        for (std::size_t d = 0; d <= p; ++d) {
            powers[d] = xp;
            xp *= x;
        }
        for (std::size_t a = 0; a <= p; ++a) {
            for (std::size_t b = 0; b <= p; ++b) ata(a, b) += powers[a] * powers[b];
            aty(a, 0) += powers[a] * w[j];
        }
    }
    return solve(ata, aty)(0, 0);
}

}  // namespace

std::vector<double> window_filter(std::span<const double> x,
                                  const WindowFilterConfig& cfg) {
    cfg.validate();
    if (x.size() < cfg.window)
        throw RangeError("window filter: sequence shorter than the window");
    std::vector<double> out(x.size());
    std::vector<double> scratch;
    for (std::size_t t = 0; t < x.size(); ++t) {
        const std::size_t len = std::min(cfg.window, t + 1);
        std::span<const double> w(x.data() + (t + 1 - len), len);
        switch (cfg.kind) {
            case WindowKind::mean: out[t] = window_mean(w); break;
            case WindowKind::median: out[t] = window_median(w, scratch); break;
            case WindowKind::savitzky_golay:
                out[t] = window_savgol(w, cfg.poly_order);
                break;
        }
    }
    return out;
}

std::vector<double> ema_filter(std::span<const double> x, double alpha) {
    if (alpha <= 0.0 || alpha > 1.0)
        throw ContractError("ema filter: alpha must lie in (0, 1]");
    std::vector<double> out(x.size());
    if (x.empty()) return out;
    out[0] = x[0];
    for (std::size_t t = 1; t < x.size(); ++t)
        out[t] = alpha * x[t] + (1.0 - alpha) * out[t - 1];
    return out;
}

// --- Kalman --------------------------------------------------------------------

void LinearStateModel::validate() const {
    const std::size_t n = a.rows;
    if (a.cols != n || b.rows != n || c.cols != n || q.rows != n || q.cols != n ||
        r.rows != c.rows || r.cols != c.rows)
        throw DimensionError("linear model: inconsistent dimensions");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (std::fabs(q(i, j) - q(j, i)) > 1e-12)
                throw ContractError("linear model: Q must be symmetric");
    for (std::size_t i = 0; i < r.rows; ++i)
        for (std::size_t j = 0; j < r.rows; ++j)
            if (std::fabs(r(i, j) - r(j, i)) > 1e-12)
                throw ContractError("linear model: R must be symmetric");
}

KalmanResult kalman_filter(std::span<const std::vector<double>> measurements,
                           std::span<const std::vector<double>> inputs,
                           const LinearStateModel& model) {
    model.validate();
    if (measurements.size() != inputs.size())
        throw DimensionError("kalman: measurement/input length mismatch");
    const std::size_t n = model.a.rows;
    const std::size_t ny = model.c.rows;
    const std::size_t nu = model.b.cols;

    Mat x(n, 1);
    Mat p = Mat::identity(n);
    Mat gain(n, ny);
    KalmanResult result;
    result.outputs.reserve(measurements.size());

    const Mat at = transpose(model.a);
    const Mat ct = transpose(model.c);

    for (std::size_t t = 0; t < measurements.size(); ++t) {
        if (measurements[t].size() != ny || inputs[t].size() != nu)
            throw DimensionError("kalman: sample dimension mismatch");

        // predict
        Mat u(nu, 1);
        for (std::size_t i = 0; i < nu; ++i)
            u(i, 0) = inputs[t][i] - (model.u_op.empty() ? 0.0 : model.u_op[i]);
        x = add(matmul(model.a, x), matmul(model.b, u));
        p = add(matmul(model.a, matmul(p, at)), model.q);

        // update
        Mat y(ny, 1);
        for (std::size_t i = 0; i < ny; ++i)
            y(i, 0) = measurements[t][i] - (model.y_op.empty() ? 0.0 : model.y_op[i]);
        const Mat innovation = sub(y, matmul(model.c, x));
        const Mat s = add(matmul(model.c, matmul(p, ct)), model.r);
        // K = P C' S^-1  via  S' K' = C P'
        gain = transpose(solve(transpose(s), transpose(matmul(p, ct))));
        x = add(x, matmul(gain, innovation));
        p = matmul(sub(Mat::identity(n), matmul(gain, model.c)), p);
        // keep the covariance symmetric against roundoff
        Mat pt = transpose(p);
        p = scale(add(p, pt), 0.5);

        const Mat yhat = matmul(model.c, x);
        std::vector<double> out(ny);
        for (std::size_t i = 0; i < ny; ++i)
            out[i] = yhat(i, 0) + (model.y_op.empty() ? 0.0 : model.y_op[i]);
        result.outputs.push_back(std::move(out));
    }
    result.gain = gain;
    result.covariance = p;
    return result;
}

Mat tank_jacobian(const TankParams& p, const TankLevels& levels) {
    Mat j(4, 4);
    auto dout = [&](std::size_t i) {
        const double h = std::max(levels[i], 1e-3);
        // d/dh [ a sqrt(2 g h) ] = a sqrt(g / (2 h))
        return p.outlet_area[i] * std::sqrt(p.gravity / (2.0 * h));
    };
    j(0, 0) = -dout(0) / p.tank_area[0];
    j(0, 2) = dout(2) / p.tank_area[0];
    j(1, 1) = -dout(1) / p.tank_area[1];
    j(1, 3) = dout(3) / p.tank_area[1];
    j(2, 2) = -dout(2) / p.tank_area[2];
    j(3, 3) = -dout(3) / p.tank_area[3];
    return j;
}

LinearStateModel linearize_tanks(const TankParams& p, const TankLevels& levels_op,
                                 const PumpInput& u_op, double tau, double q_diag,
                                 double r_diag) {
    p.validate();
    const Mat jc = tank_jacobian(p, levels_op);
    Mat bc(4, 2);
    bc(0, 0) = p.valve_split[0] * p.pump_gain[0] / p.tank_area[0];
    bc(1, 1) = p.valve_split[1] * p.pump_gain[1] / p.tank_area[1];
    bc(2, 1) = (1.0 - p.valve_split[1]) * p.pump_gain[1] / p.tank_area[2];
    bc(3, 0) = (1.0 - p.valve_split[0]) * p.pump_gain[0] / p.tank_area[3];

    LinearStateModel m;
    m.a = expm_taylor(scale(jc, tau));
    // B_d = (integral_0^tau e^{J s} ds) B_c, via the series tau (I + J tau/2 + ...)
    Mat integral = Mat::identity(4);
    Mat term = Mat::identity(4);
    for (int k = 1; k <= 6; ++k) {
        term = scale(matmul(term, scale(jc, tau)), 1.0 / static_cast<double>(k + 1));
        integral = add(integral, term);
    }
    m.b = matmul(scale(integral, tau), bc);
    m.c = Mat::identity(4);
    m.q = scale(Mat::identity(4), q_diag);
    m.r = scale(Mat::identity(4), r_diag);
    m.x_op = {levels_op[0], levels_op[1], levels_op[2], levels_op[3]};
    m.u_op = {u_op[0], u_op[1]};
    m.y_op = m.x_op;
    return m;
}

std::vector<TankLevels> ekf_filter(std::span<const TankLevels> measurements,
                                   std::span<const PumpInput> inputs,
                                   const TankParams& p, const EkfConfig& cfg) {
    if (measurements.size() != inputs.size())
        throw DimensionError("ekf: measurement/input length mismatch");
    if (measurements.empty()) return {};

    const double dt = cfg.tau / static_cast<double>(cfg.substeps);
    TankLevels x{};
    for (std::size_t i = 0; i < 4; ++i)
        x[i] = std::clamp(measurements[0][i], 0.0, p.level_max);
    Mat cov = Mat::identity(4);
    const Mat q = scale(Mat::identity(4), cfg.q_diag);
    const Mat r = scale(Mat::identity(4), cfg.r_diag);

    std::vector<TankLevels> out;
    out.reserve(measurements.size());
    for (std::size_t t = 0; t < measurements.size(); ++t) {
        // predict: nonlinear propagation, second-order transition for P
        const Mat jc = tank_jacobian(p, x);
        const Mat jtau = scale(jc, cfg.tau);
        Mat f = add(Mat::identity(4), jtau);
        f = add(f, scale(matmul(jtau, jtau), 0.5));
        for (std::size_t s = 0; s < cfg.substeps; ++s)
            x = step_dynamics(p, x, inputs[t], dt);
        cov = add(matmul(f, matmul(cov, transpose(f))), q);

        // update with identity measurement of all four levels
        const Mat s_mat = add(cov, r);
        const Mat gain = transpose(solve(transpose(s_mat), transpose(cov)));
        Mat innovation(4, 1);
        for (std::size_t i = 0; i < 4; ++i) innovation(i, 0) = measurements[t][i] - x[i];
        const Mat dx = matmul(gain, innovation);
        for (std::size_t i = 0; i < 4; ++i)
            x[i] = std::clamp(x[i] + dx(i, 0), 0.0, p.level_max);
        cov = matmul(sub(Mat::identity(4), gain), cov);
        Mat covt = transpose(cov);
        cov = scale(add(cov, covt), 0.5);
        out.push_back(x);
    }
    return out;
}

ParticleResult particle_filter(std::span<const TankLevels> measurements,
                               std::span<const PumpInput> inputs,
                               const TankParams& p, const ParticleConfig& cfg) {
    if (cfg.n_particles < 100)
        throw ContractError("particle filter: need at least 100 particles");
    if (measurements.size() != inputs.size())
        throw DimensionError("particle filter: measurement/input length mismatch");
    ParticleResult result;
    if (measurements.empty()) return result;

    auto rng = make_rng(cfg.seed, "particle");
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double dt = cfg.tau / static_cast<double>(cfg.substeps);
    const std::size_t n = cfg.n_particles;

    auto sample_around = [&](const TankLevels& center) {
        TankLevels s;
        for (std::size_t i = 0; i < 4; ++i)
            s[i] = std::clamp(center[i] + cfg.meas_std * gauss(rng), 0.0,
                              p.level_max);
        return s;
    };

    std::vector<TankLevels> particles(n);
    for (auto& part : particles) part = sample_around(measurements[0]);
    std::vector<double> weights(n, 1.0 / static_cast<double>(n));
    std::vector<double> logw(n);
    std::vector<TankLevels> propagated(n);

    result.levels.reserve(measurements.size());
    const double inv_two_var = 1.0 / (2.0 * cfg.meas_std * cfg.meas_std);

    for (std::size_t t = 0; t < measurements.size(); ++t) {
        for (std::size_t k = 0; k < n; ++k) {
            TankLevels x = particles[k];
            for (std::size_t s = 0; s < cfg.substeps; ++s)
                x = step_dynamics(p, x, inputs[t], dt);
            if (cfg.process_std > 0.0)
                for (std::size_t i = 0; i < 4; ++i)
                    x[i] = std::clamp(x[i] + cfg.process_std * gauss(rng), 0.0,
                                      p.level_max);
            propagated[k] = x;
            double sq = 0.0;
            for (std::size_t i = 0; i < 4; ++i) {
                const double d = measurements[t][i] - x[i];
                sq += d * d;
            }
            logw[k] = std::log(weights[k]) - sq * inv_two_var;
        }

        double max_logw = -std::numeric_limits<double>::infinity();
        for (double lw : logw) max_logw = std::max(max_logw, lw);
        double total = 0.0;
        // below about exp(-700) every direct-domain weight underflows to
        // zero; treat that as the all-zero collapse even though the log-sum
        // normalization could still limp on
        const bool collapsed = !std::isfinite(max_logw) || max_logw < -700.0;
        if (!collapsed) {
            for (std::size_t k = 0; k < n; ++k) {
                weights[k] = std::exp(logw[k] - max_logw);
                total += weights[k];
            }
        }
        if (collapsed || !(total > 0.0) || !std::isfinite(total)) {
            ++result.reinit_count;
            std::fprintf(stderr,
                         "particle filter: weight collapse at step %zu, "
                         "reinitializing from the prior\n",
                         t);
            for (auto& part : particles) part = sample_around(measurements[t]);
            std::fill(weights.begin(), weights.end(),
                      1.0 / static_cast<double>(n));
            propagated = particles;
            total = 1.0;
            for (std::size_t k = 0; k < n; ++k)
                weights[k] = 1.0 / static_cast<double>(n);
        } else {
            for (double& w : weights) w /= total;
        }
        particles = propagated;

        TankLevels estimate{};
        double ess_den = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t i = 0; i < 4; ++i)
                estimate[i] += weights[k] * particles[k][i];
            ess_den += weights[k] * weights[k];
        }
        result.levels.push_back(estimate);

        const double ess = 1.0 / ess_den;
        if (ess < static_cast<double>(n) / 2.0) {
            // systematic resampling
            std::vector<TankLevels> resampled(n);
            const double step = 1.0 / static_cast<double>(n);
            double u = unit(rng) * step;
            double cum = weights[0];
            std::size_t idx = 0;
            for (std::size_t k = 0; k < n; ++k) {
                const double target = u + static_cast<double>(k) * step;
                while (cum < target && idx + 1 < n) cum += weights[++idx];
                resampled[k] = particles[idx];
            }
            particles = std::move(resampled);
            std::fill(weights.begin(), weights.end(), step);
        }
    }
    return result;
}

}  // namespace cbdae
