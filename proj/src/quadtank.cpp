#include "cbdae/quadtank.hpp"

#include <algorithm>
#include <cmath>

#include "cbdae/csv.hpp"

namespace cbdae {

void TankParams::validate() const {
    for (double v : tank_area)
        if (v <= 0.0) throw ContractError("tank params: tank areas must be positive");
    for (double v : outlet_area)
        if (v <= 0.0) throw ContractError("tank params: outlet areas must be positive");
    if (gravity <= 0.0) throw ContractError("tank params: gravity must be positive");
    for (double v : pump_gain)
        if (v <= 0.0) throw ContractError("tank params: pump gains must be positive");
    const double g12 = valve_split[0] + valve_split[1];
    if (valve_split[0] <= 0.0 || valve_split[1] <= 0.0 || g12 <= 0.0 || g12 >= 1.0)
        throw ContractError(
            "tank params: non-minimum phase requires 0 < gamma1 + gamma2 < 1");
    if (level_max <= 0.0) throw ContractError("tank params: level_max must be positive");
}

namespace {

inline double outflow(const TankParams& p, std::size_t i, double level) {
    const double h = level > 0.0 ? level : 0.0;
    return p.outlet_area[i] * std::sqrt(2.0 * p.gravity * h);
}

}  // namespace

TankLevels tank_derivative(const TankParams& p, const TankLevels& h,
                           const PumpInput& u) {
    const double g1 = p.valve_split[0], g2 = p.valve_split[1];
    const double q1 = p.pump_gain[0] * u[0], q2 = p.pump_gain[1] * u[1];
    TankLevels d;
    d[0] = (-outflow(p, 0, h[0]) + outflow(p, 2, h[2]) + g1 * q1) / p.tank_area[0];
    d[1] = (-outflow(p, 1, h[1]) + outflow(p, 3, h[3]) + g2 * q2) / p.tank_area[1];
    d[2] = (-outflow(p, 2, h[2]) + (1.0 - g2) * q2) / p.tank_area[2];
    d[3] = (-outflow(p, 3, h[3]) + (1.0 - g1) * q1) / p.tank_area[3];
    return d;
}

TankLevels step_dynamics(const TankParams& p, const TankLevels& h,
                         const PumpInput& u, double dt) {
    if (dt <= 0.0) throw ContractError("step_dynamics: dt must be positive");
    for (double v : h)
        if (v < 0.0) throw ContractError("step_dynamics: negative level");

    auto axpy = [](const TankLevels& a, const TankLevels& b, double c) {
        TankLevels out;
        for (std::size_t i = 0; i < 4; ++i) out[i] = a[i] + c * b[i];
        return out;
    };
    const TankLevels k1 = tank_derivative(p, h, u);
    const TankLevels k2 = tank_derivative(p, axpy(h, k1, dt / 2.0), u);
    const TankLevels k3 = tank_derivative(p, axpy(h, k2, dt / 2.0), u);
    const TankLevels k4 = tank_derivative(p, axpy(h, k3, dt), u);

    TankLevels out;
    for (std::size_t i = 0; i < 4; ++i) {
        out[i] = h[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if (!std::isfinite(out[i]))
            throw NumericError("step_dynamics: non-finite level");
        out[i] = std::clamp(out[i], 0.0, p.level_max);
    }
    return out;
}

TankLevels steady_state(const TankParams& p, const PumpInput& u) {
    const double g1 = p.valve_split[0], g2 = p.valve_split[1];
    const double q1 = p.pump_gain[0] * u[0], q2 = p.pump_gain[1] * u[1];
    const double two_g = 2.0 * p.gravity;
    auto level_for = [&](double flow, double outlet) {
        const double root = flow / outlet;
        return root * root / two_g;
    };
    TankLevels h;
    h[2] = level_for((1.0 - g2) * q2, p.outlet_area[2]);
    h[3] = level_for((1.0 - g1) * q1, p.outlet_area[3]);
    h[0] = level_for(g1 * q1 + (1.0 - g2) * q2, p.outlet_area[0]);
    h[1] = level_for(g2 * q2 + (1.0 - g1) * q1, p.outlet_area[1]);
    for (double& v : h) v = std::min(v, p.level_max);
    return h;
}

std::vector<PumpInput> excite(std::size_t duration, std::mt19937_64& rng,
                              const ExcitationConfig& cfg) {
    if (duration == 0) throw ContractError("excite: duration must be positive");
    if (cfg.level_min < 0.0 || cfg.level_max > 1.0 || cfg.level_min > cfg.level_max)
        throw ContractError("excite: levels must stay within [0, 1] volts");
    if (cfg.dwell_min <= 0.0 || cfg.dwell_max < cfg.dwell_min)
        throw ContractError("excite: bad dwell range");

    std::vector<PumpInput> out(duration);
    std::uniform_real_distribution<double> level(cfg.level_min, cfg.level_max);
    std::uniform_real_distribution<double> dwell(cfg.dwell_min, cfg.dwell_max);
    for (std::size_t ch = 0; ch < 2; ++ch) {
        std::size_t t = 0;
        while (t < duration) {
            const double v = level(rng);
            const auto hold = static_cast<std::size_t>(dwell(rng));
            const std::size_t end = std::min(duration, t + std::max<std::size_t>(1, hold));
            for (; t < end; ++t) out[t][ch] = v;
        }
    }
    return out;
}

void NoiseSpec::validate() const {
    if (sigma < 0.0) throw ContractError("noise spec: sigma must be nonnegative");
    if (impulse_prob < 0.0 || impulse_prob > 1.0)
        throw ContractError("noise spec: impulse probability in [0, 1]");
    if (rail_high < rail_low) throw ContractError("noise spec: rail range inverted");
}

std::vector<TankLevels> corrupt(std::span<const TankLevels> clean,
                                const NoiseSpec& spec) {
    spec.validate();
    auto rng = make_rng(spec.seed, "corrupt");
    std::normal_distribution<double> white(0.0, spec.sigma > 0.0 ? spec.sigma : 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<TankLevels> out(clean.begin(), clean.end());
    for (auto& sample : out) {
        for (double& v : sample) {
            if (spec.sigma > 0.0) v += white(rng);
            if (spec.impulse_prob > 0.0 && unit(rng) < spec.impulse_prob)
                v = unit(rng) < 0.5 ? spec.rail_low : spec.rail_high;
        }
    }
    return out;
}

void SimConfig::validate() const {
    tank.validate();
    if (duration == 0) throw ContractError("sim config: duration must be positive");
    if (sample_period <= 0.0 || substeps == 0)
        throw ContractError("sim config: bad integration setup");
    if (impulse_prob < 0.0 || impulse_prob > 1.0)
        throw ContractError("sim config: impulse probability in [0, 1]");
    if (train_fraction <= 0.0 || val_fraction < 0.0 ||
        train_fraction + val_fraction >= 1.0)
        throw ContractError("sim config: split fractions must leave a test share");
}

std::vector<TankLevels> simulate(const TankParams& p, std::span<const PumpInput> u,
                                 const TankLevels& h0, double sample_period,
                                 std::size_t substeps) {
    const double dt = sample_period / static_cast<double>(substeps);
    std::vector<TankLevels> out;
    out.reserve(u.size());
    TankLevels h = h0;
    for (const PumpInput& input : u) {
        for (std::size_t s = 0; s < substeps; ++s)
            h = step_dynamics(p, h, input, dt);
        out.push_back(h);
    }
    return out;
}

namespace {

Series assemble_series(std::span<const PumpInput> u,
                       std::span<const TankLevels> levels, const char* prefix) {
    Series s;
    s.channels = {"u1", "u2", std::string(prefix) + "1", std::string(prefix) + "2",
                  std::string(prefix) + "3", std::string(prefix) + "4"};
    s.is_input = {1, 1, 0, 0, 0, 0};
    s.data.reserve(u.size() * 6);
    for (std::size_t t = 0; t < u.size(); ++t) {
        s.data.push_back(u[t][0]);
        s.data.push_back(u[t][1]);
        for (double v : levels[t]) s.data.push_back(v);
    }
    return s;
}

}  // namespace

TrainData SimDataset::train_data() const {
    TrainData d;
    d.train = model_series.slice(0, train_end);
    d.validation = model_series.slice(train_end, val_end);
    d.clean_validation = clean_series.slice(train_end, val_end);
    return d;
}

std::vector<SimDataset> generate_dataset(const SimConfig& cfg,
                                         std::span<const double> sigmas) {
    cfg.validate();
    auto exc_rng = make_rng(cfg.seed, "excitation");
    auto inputs = excite(cfg.duration, exc_rng, cfg.excitation);
    const TankLevels h0 = steady_state(cfg.tank, inputs[0]);
    auto clean = simulate(cfg.tank, inputs, h0, cfg.sample_period, cfg.substeps);

    const auto train_end = static_cast<std::size_t>(
        static_cast<double>(cfg.duration) * cfg.train_fraction);
    const auto val_end = static_cast<std::size_t>(
        static_cast<double>(cfg.duration) * (cfg.train_fraction + cfg.val_fraction));

    std::vector<SimDataset> out;
    out.reserve(sigmas.size());
    for (double sigma : sigmas) {
        NoiseSpec spec;
        spec.sigma = sigma;
        spec.impulse_prob = cfg.impulse_prob;
        spec.rail_high = cfg.tank.level_max;
        spec.seed = derive_seed(cfg.seed, "noise." + format_double(sigma));
        auto noisy = corrupt(clean, spec);

        SimDataset ds;
        ds.sigma = sigma;
        ds.model_series = assemble_series(inputs, noisy, "ytilde");
        ds.clean_series = assemble_series(inputs, clean, "y");
        ds.train_end = train_end;
        ds.val_end = val_end;
        out.push_back(std::move(ds));
    }
    return out;
}

void write_dataset_csv(const std::string& path, const SimDataset& ds) {
    CsvTable table;
    table.header = {"step", "u1", "u2", "y1", "y2", "y3", "y4",
                    "ytilde1", "ytilde2", "ytilde3", "ytilde4"};
    const std::size_t len = ds.model_series.length();
    table.rows.reserve(len);
    for (std::size_t t = 0; t < len; ++t) {
        std::vector<std::optional<double>> row;
        row.reserve(11);
        row.emplace_back(static_cast<double>(t));
        row.emplace_back(ds.clean_series.at(t, 0));
        row.emplace_back(ds.clean_series.at(t, 1));
        for (std::size_t c = 2; c < 6; ++c) row.emplace_back(ds.clean_series.at(t, c));
        for (std::size_t c = 2; c < 6; ++c) row.emplace_back(ds.model_series.at(t, c));
        table.rows.push_back(std::move(row));
    }
    write_csv(path, table);
}

SimDataset read_dataset_csv(const std::string& path, double train_fraction,
                            double val_fraction) {
    CsvTable table = read_csv(path);
    const std::size_t len = table.rows.size();
    if (len == 0) throw IoError("dataset csv: no rows in '" + path + "'");
    std::array<std::size_t, 11> idx{};
    const char* names[11] = {"step", "u1", "u2", "y1", "y2", "y3", "y4",
                             "ytilde1", "ytilde2", "ytilde3", "ytilde4"};
    for (std::size_t i = 0; i < 11; ++i) idx[i] = table.column_index(names[i]);

    auto cell = [&](std::size_t r, std::size_t c) {
        const auto& v = table.rows[r][idx[c]];
        if (!v) throw IoError("dataset csv: empty cell in '" + path + "'");
        return *v;
    };

    SimDataset ds;
    ds.model_series.channels = {"u1", "u2", "ytilde1", "ytilde2", "ytilde3", "ytilde4"};
    ds.model_series.is_input = {1, 1, 0, 0, 0, 0};
    ds.clean_series.channels = {"u1", "u2", "y1", "y2", "y3", "y4"};
    ds.clean_series.is_input = {1, 1, 0, 0, 0, 0};
    ds.model_series.data.reserve(len * 6);
    ds.clean_series.data.reserve(len * 6);
    for (std::size_t t = 0; t < len; ++t) {
        ds.model_series.data.push_back(cell(t, 1));
        ds.model_series.data.push_back(cell(t, 2));
        for (std::size_t c = 7; c <= 10; ++c)
            ds.model_series.data.push_back(cell(t, c));
        ds.clean_series.data.push_back(cell(t, 1));
        ds.clean_series.data.push_back(cell(t, 2));
        for (std::size_t c = 3; c <= 6; ++c)
            ds.clean_series.data.push_back(cell(t, c));
    }
    ds.train_end = static_cast<std::size_t>(static_cast<double>(len) * train_fraction);
    ds.val_end = static_cast<std::size_t>(
        static_cast<double>(len) * (train_fraction + val_fraction));
    return ds;
}

}  // namespace cbdae
