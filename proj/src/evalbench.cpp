#include "cbdae/evalbench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include "cbdae/csv.hpp"

namespace cbdae {

double rmse(std::span<const double> reference, std::span<const double> estimate) {
    if (reference.size() != estimate.size())
        throw ContractError("rmse: length mismatch");
    if (reference.empty()) throw ContractError("rmse: empty sequences");
    double sq = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double d = reference[i] - estimate[i];
        sq += d * d;
    }
    return std::sqrt(sq / static_cast<double>(reference.size()));
}

ChannelRmse rmse_levels(std::span<const TankLevels> clean,
                        std::span<const TankLevels> estimate, std::size_t warmup) {
    if (clean.size() != estimate.size())
        throw ContractError("rmse_levels: length mismatch");
    if (warmup >= clean.size())
        throw ContractError("rmse_levels: warmup consumes the whole range");
    ChannelRmse out;
    out.per_channel.assign(4, 0.0);
    const auto n = static_cast<double>(clean.size() - warmup);
    for (std::size_t c = 0; c < 4; ++c) {
        double sq = 0.0;
        for (std::size_t t = warmup; t < clean.size(); ++t) {
            const double d = clean[t][c] - estimate[t][c];
            sq += d * d;
        }
        out.per_channel[c] = std::sqrt(sq / n);
        out.average += out.per_channel[c];
    }
    out.average /= 4.0;
    return out;
}

// --- PCA -----------------------------------------------------------------------

PcaResult pca_fit(std::span<const std::vector<double>> samples, std::size_t dims) {
    if (samples.size() < dims)
        throw ContractError("pca: need at least as many samples as components");
    const std::size_t d = samples[0].size();
    PcaResult out;
    out.center.assign(d, 0.0);
    for (const auto& s : samples) {
        if (s.size() != d) throw DimensionError("pca: inconsistent sample size");
        for (std::size_t i = 0; i < d; ++i) out.center[i] += s[i];
    }
    for (double& v : out.center) v /= static_cast<double>(samples.size());

    Mat cov(d, d);
    for (const auto& s : samples)
        for (std::size_t i = 0; i < d; ++i) {
            const double di = s[i] - out.center[i];
            for (std::size_t j = 0; j < d; ++j)
                cov(i, j) += di * (s[j] - out.center[j]);
        }
    const double denom = samples.size() > 1
                             ? static_cast<double>(samples.size() - 1)
                             : 1.0;
    for (double& v : cov.data) v /= denom;

    double top_variance = 0.0;
    out.components = Mat(dims, d);
    out.explained.assign(dims, 0.0);
    Mat work = cov;
    for (std::size_t comp = 0; comp < dims; ++comp) {
        // deterministic start: the axis with the largest remaining variance
        std::size_t best_axis = 0;
        for (std::size_t i = 1; i < d; ++i)
            if (work(i, i) > work(best_axis, best_axis)) best_axis = i;
        std::vector<double> v(d, 0.0);
        v[best_axis] = 1.0;

        double lambda = 0.0;
        for (int iter = 0; iter < 500; ++iter) {
            std::vector<double> w = matvec(work, v);
            double norm = 0.0;
            for (double x : w) norm += x * x;
            norm = std::sqrt(norm);
            if (norm < 1e-300) break;
            for (double& x : w) x /= norm;
            double delta = 0.0;
            for (std::size_t i = 0; i < d; ++i)
                delta = std::max(delta, std::fabs(w[i] - v[i]));
            v = std::move(w);
            if (delta < 1e-12 && iter > 2) break;
        }
        // re-orthogonalize against earlier components, then measure variance
        for (std::size_t prev = 0; prev < comp; ++prev) {
            double proj = 0.0;
            for (std::size_t i = 0; i < d; ++i)
                proj += v[i] * out.components(prev, i);
            for (std::size_t i = 0; i < d; ++i)
                v[i] -= proj * out.components(prev, i);
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 1e-12)
            for (double& x : v) x /= norm;
        const std::vector<double> cv = matvec(cov, v);
        for (std::size_t i = 0; i < d; ++i) lambda += v[i] * cv[i];

        if (comp == 0) top_variance = lambda;
        if (comp > 0 && (lambda < 0.0 || lambda < 1e-12 * std::max(1.0, top_variance))) {
            out.rank_deficient = true;
            break;
        }
        for (std::size_t i = 0; i < d; ++i) out.components(comp, i) = v[i];
        out.explained[comp] = lambda;
        ++out.n_components;

        // deflate
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                work(i, j) -= lambda * v[i] * v[j];
    }
    return out;
}

std::vector<std::array<double, 2>> pca_transform(
    const PcaResult& pca, std::span<const std::vector<double>> samples) {
    std::vector<std::array<double, 2>> out;
    out.reserve(samples.size());
    const std::size_t d = pca.center.size();
    for (const auto& s : samples) {
        std::array<double, 2> p{0.0, 0.0};
        for (std::size_t comp = 0; comp < std::min<std::size_t>(2, pca.n_components);
             ++comp)
            for (std::size_t i = 0; i < d; ++i)
                p[comp] += (s[i] - pca.center[i]) * pca.components(comp, i);
        out.push_back(p);
    }
    return out;
}

namespace {

double trace_scale(std::span<const std::array<double, 2>> points) {
    double cx = 0.0, cy = 0.0;
    for (const auto& p : points) {
        cx += p[0];
        cy += p[1];
    }
    cx /= static_cast<double>(points.size());
    cy /= static_cast<double>(points.size());
    double sq = 0.0;
    for (const auto& p : points) {
        const double dx = p[0] - cx, dy = p[1] - cy;
        sq += dx * dx + dy * dy;
    }
    return std::sqrt(sq / static_cast<double>(points.size()));
}

}  // namespace

double smoothness_score(std::span<const std::array<double, 2>> trace) {
    if (trace.size() < 3)
        throw ContractError("smoothness: trace needs at least 3 points");
    const double scale = trace_scale(trace);
    if (scale < 1e-15) return 0.0;
    double acc = 0.0;
    for (std::size_t t = 1; t + 1 < trace.size(); ++t) {
        const double dx = trace[t + 1][0] - 2.0 * trace[t][0] + trace[t - 1][0];
        const double dy = trace[t + 1][1] - 2.0 * trace[t][1] + trace[t - 1][1];
        acc += std::sqrt(dx * dx + dy * dy);
    }
    return acc / (static_cast<double>(trace.size() - 2) * scale);
}

double trace_separation(std::span<const std::array<double, 2>> a,
                        std::span<const std::array<double, 2>> b) {
    const std::size_t n = std::min(a.size(), b.size());
    if (n == 0) throw ContractError("trace_separation: empty traces");
    std::vector<std::array<double, 2>> joint(a.begin(), a.begin() + n);
    joint.insert(joint.end(), b.begin(), b.begin() + n);
    const double scale = trace_scale(joint);
    if (scale < 1e-15) return 0.0;
    double acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double dx = a[t][0] - b[t][0];
        const double dy = a[t][1] - b[t][1];
        acc += std::sqrt(dx * dx + dy * dy);
    }
    return acc / (static_cast<double>(n) * scale);
}

// --- Table I references ---------------------------------------------------------

namespace {

struct ReferenceRow {
    const char* method;
    std::array<double, 8> values;  // sigma 0.5 .. 4.0 in 0.5 steps
};

constexpr ReferenceRow kTable1[] = {
    {"noisy", {2.165, 2.406, 2.572, 2.850, 3.121, 3.515, 3.929, 4.277}},
    {"mean", {1.254, 1.269, 1.381, 1.475, 1.634, 1.777, 1.911, 2.115}},
    {"median", {0.803, 0.917, 1.117, 1.337, 1.583, 1.785, 2.019, 2.173}},
    {"savgol", {1.303, 1.313, 1.473, 1.560, 1.757, 1.907, 2.04, 2.207}},
    {"ema", {1.244, 1.264, 1.375, 1.469, 1.630, 1.773, 1.913, 2.089}},
    {"kalman", {2.005, 2.108, 2.176, 2.259, 2.324, 2.445, 2.548, 2.581}},
    {"particle", {1.708, 1.774, 1.986, 2.088, 2.334, 2.560, 2.797, 3.026}},
    {"ekf", {1.773, 1.846, 1.956, 2.041, 2.187, 2.342, 2.497, 2.603}},
    {"bdae_noreg", {0.671, 0.502, 0.577, 0.638, 0.663, 0.647, 0.779, 0.641}},
    {"bdae_l1", {0.668, 0.572, 0.58, 0.587, 0.588, 0.668, 0.566, 0.620}},
    {"cbdae_h", {0.392, 0.313, 0.326, 0.445, 0.521, 0.569, 0.741, 0.602}},
    {"cbdae", {0.276, 0.318, 0.355, 0.394, 0.407, 0.518, 0.489, 0.542}},
};

}  // namespace

std::optional<double> paper_table1_reference(const std::string& method,
                                             double sigma) {
    const double idx = sigma / 0.5 - 1.0;
    const auto i = static_cast<long>(std::lround(idx));
    if (i < 0 || i > 7 || std::fabs(idx - static_cast<double>(i)) > 1e-9)
        return std::nullopt;
    for (const auto& row : kTable1)
        if (method == row.method) return row.values[static_cast<std::size_t>(i)];
    return std::nullopt;
}

const std::vector<std::string>& all_bench_methods() {
    static const std::vector<std::string> methods = {
        "noisy",    "mean",     "median",  "savgol",
        "ema",      "kalman",   "ekf",     "particle",
        "bdae_noreg", "bdae_l1", "cbdae_h", "cbdae"};
    return methods;
}

// --- benchmark -------------------------------------------------------------------

namespace {

bool is_network_method(const std::string& m) {
    return m == "cbdae" || m == "cbdae_h" || m == "bdae_noreg" || m == "bdae_l1";
}

std::vector<TankLevels> levels_of(const Series& s) {
    std::vector<TankLevels> out(s.length());
    for (std::size_t t = 0; t < s.length(); ++t)
        for (std::size_t c = 0; c < 4; ++c) out[t][c] = s.at(t, c + 2);
    return out;
}

struct CellJob {
    std::string method;
    std::size_t sigma_index;
};

}  // namespace

void BenchReport::write_csv(const std::string& path) const {
    std::string text = "method,sigma,rmse,paper_reference,runtime_s\n";
    for (const auto& c : cells) {
        text += c.method;
        text += ',';
        text += format_double(c.sigma);
        text += ',';
        text += c.available ? format_double(c.rmse) : std::string();
        text += ',';
        text += c.paper_reference ? format_double(*c.paper_reference) : std::string();
        text += ',';
        text += format_double(c.runtime_s);
        text += '\n';
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("report: cannot open '" + path + "'");
    out << text;
    if (!out) throw IoError("report: write failed for '" + path + "'");
}

std::optional<double> BenchReport::lookup(const std::string& method,
                                          double sigma) const {
    for (const auto& c : cells)
        if (c.method == method && std::fabs(c.sigma - sigma) < 1e-12 && c.available)
            return c.rmse;
    return std::nullopt;
}

BenchReport run_benchmark(const BenchConfig& cfg) {
    std::vector<std::string> methods =
        cfg.methods.empty() ? all_bench_methods() : cfg.methods;
    for (const auto& m : methods)
        if (std::find(all_bench_methods().begin(), all_bench_methods().end(), m) ==
            all_bench_methods().end())
            throw ContractError("bench: unknown method '" + m + "'");

    SimConfig sim = cfg.sim;
    sim.seed = cfg.seed;
    auto datasets = generate_dataset(sim, cfg.sigmas);
    const std::size_t warmup = cfg.train.window - 1;

    BenchReport report;
    report.seed = cfg.seed;
    report.cells.resize(methods.size() * cfg.sigmas.size());

    std::vector<CellJob> jobs;
    for (std::size_t si = 0; si < cfg.sigmas.size(); ++si)
        for (const auto& m : methods) jobs.push_back({m, si});

    auto run_job = [&](const CellJob& job, BenchCell& cell) {
        const auto t0 = std::chrono::steady_clock::now();
        const SimDataset& ds = datasets[job.sigma_index];
        const Series test_model = ds.test_model();
        const Series test_clean = ds.test_clean();
        const auto clean_levels = levels_of(test_clean);
        const auto noisy_levels = levels_of(test_model);

        cell.method = job.method;
        cell.sigma = ds.sigma;
        cell.paper_reference = paper_table1_reference(job.method, ds.sigma);
        try {
            if (job.method == "noisy") {
                cell.rmse = rmse_levels(clean_levels, noisy_levels, warmup).average;
            } else if (job.method == "mean" || job.method == "median" ||
                       job.method == "savgol") {
                WindowFilterConfig wf;
                wf.kind = job.method == "mean"
                              ? WindowKind::mean
                              : (job.method == "median" ? WindowKind::median
                                                        : WindowKind::savitzky_golay);
                wf.poly_order = cfg.sg_order;
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t w : cfg.window_scan) {
                    if (wf.kind == WindowKind::savitzky_golay && w <= cfg.sg_order)
                        continue;
                    wf.window = w;
                    std::vector<TankLevels> est(noisy_levels.size());
                    for (std::size_t c = 0; c < 4; ++c) {
                        auto x = test_model.channel(c + 2);
                        auto f = window_filter(x, wf);
                        for (std::size_t t = 0; t < f.size(); ++t) est[t][c] = f[t];
                    }
                    const double score =
                        rmse_levels(clean_levels, est, warmup).average;
                    if (score < best) {
                        best = score;
                        cell.chosen_window = w;
                    }
                }
                cell.rmse = best;
            } else if (job.method == "ema") {
                std::vector<TankLevels> est(noisy_levels.size());
                for (std::size_t c = 0; c < 4; ++c) {
                    auto f = ema_filter(test_model.channel(c + 2), cfg.ema_alpha);
                    for (std::size_t t = 0; t < f.size(); ++t) est[t][c] = f[t];
                }
                cell.rmse = rmse_levels(clean_levels, est, warmup).average;
            } else if (job.method == "kalman") {
                // operating point from the measured data, model from the true
                // process parameters
                TankLevels op{};
                PumpInput uop{};
                for (std::size_t t = 0; t < test_model.length(); ++t) {
                    for (std::size_t c = 0; c < 4; ++c) op[c] += test_model.at(t, c + 2);
                    uop[0] += test_model.at(t, 0);
                    uop[1] += test_model.at(t, 1);
                }
                const auto n = static_cast<double>(test_model.length());
                for (auto& v : op) v = std::clamp(v / n, 0.5, 49.5);
                for (auto& v : uop) v /= n;
                auto model = linearize_tanks(cfg.sim.tank, op, uop,
                                             cfg.sim.sample_period, cfg.kf_q,
                                             ds.sigma * ds.sigma);
                std::vector<std::vector<double>> meas(test_model.length()),
                    ins(test_model.length());
                for (std::size_t t = 0; t < test_model.length(); ++t) {
                    meas[t] = {test_model.at(t, 2), test_model.at(t, 3),
                               test_model.at(t, 4), test_model.at(t, 5)};
                    ins[t] = {test_model.at(t, 0), test_model.at(t, 1)};
                }
                auto kf = kalman_filter(meas, ins, model);
                std::vector<TankLevels> est(kf.outputs.size());
                for (std::size_t t = 0; t < kf.outputs.size(); ++t)
                    for (std::size_t c = 0; c < 4; ++c) est[t][c] = kf.outputs[t][c];
                cell.rmse = rmse_levels(clean_levels, est, warmup).average;
            } else if (job.method == "ekf") {
                std::vector<PumpInput> ins(test_model.length());
                for (std::size_t t = 0; t < test_model.length(); ++t)
                    ins[t] = {test_model.at(t, 0), test_model.at(t, 1)};
                EkfConfig ekf;
                ekf.tau = cfg.sim.sample_period;
                ekf.substeps = cfg.sim.substeps;
                ekf.q_diag = cfg.kf_q;
                ekf.r_diag = ds.sigma * ds.sigma;
                auto est = ekf_filter(noisy_levels, ins, cfg.sim.tank, ekf);
                cell.rmse = rmse_levels(clean_levels, est, warmup).average;
            } else if (job.method == "particle") {
                std::vector<PumpInput> ins(test_model.length());
                for (std::size_t t = 0; t < test_model.length(); ++t)
                    ins[t] = {test_model.at(t, 0), test_model.at(t, 1)};
                ParticleConfig pc = cfg.particle;
                pc.tau = cfg.sim.sample_period;
                pc.substeps = cfg.sim.substeps;
                pc.meas_std = std::max(ds.sigma, 0.1);
                pc.seed = derive_seed(cfg.seed, "particle." + format_double(ds.sigma));
                auto pf = particle_filter(noisy_levels, ins, cfg.sim.tank, pc);
                cell.rmse = rmse_levels(clean_levels, pf.levels, warmup).average;
            } else {
                // network variants: train on the train/validation splits,
                // evaluate on the held-out test split
                TrainConfig tc = cfg.train;
                tc.seed = derive_seed(cfg.seed,
                                      "train." + job.method + "." +
                                          format_double(ds.sigma));
                auto result = train_variant(ds.train_data(), tc,
                                            variant_from_string(job.method));
                auto est_rows = denoise_series(result.model, test_model);
                std::vector<TankLevels> est(noisy_levels.size());
                for (std::size_t t = 0; t < est.size(); ++t) {
                    if (est_rows[t]) {
                        for (std::size_t c = 0; c < 4; ++c)
                            est[t][c] = (*est_rows[t])[c + 2];
                    } else {
                        est[t] = noisy_levels[t];  // inside warm-up, excluded anyway
                    }
                }
                cell.rmse = rmse_levels(clean_levels, est, warmup).average;
            }
        } catch (const Error& e) {
            cell.available = false;
            cell.note = e.what();
        }
        cell.runtime_s = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    };

    const std::size_t jobs_n = std::max<std::size_t>(1, cfg.jobs);
    if (jobs_n == 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i)
            run_job(jobs[i], report.cells[i]);
    } else {
        std::vector<std::thread> workers;
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < jobs_n; ++w)
            workers.emplace_back([&]() {
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= jobs.size()) return;
                    run_job(jobs[i], report.cells[i]);
                }
            });
        for (auto& t : workers) t.join();
    }
    return report;
}

// --- latent study ------------------------------------------------------------------

void LatentStudyVariant::write_csv(const std::string& path) const {
    std::string text = "t,pc1,pc2,label\n";
    for (std::size_t t = 0; t < trace_a.points.size(); ++t)
        text += std::to_string(t) + "," + format_double(trace_a.points[t][0]) +
                "," + format_double(trace_a.points[t][1]) + "," + trace_a.label +
                "\n";
    for (std::size_t t = 0; t < trace_b.points.size(); ++t)
        text += std::to_string(t) + "," + format_double(trace_b.points[t][0]) +
                "," + format_double(trace_b.points[t][1]) + "," + trace_b.label +
                "\n";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("latent trace: cannot open '" + path + "'");
    out << text;
}

LatentStudyResult run_latent_study(const LatentStudyConfig& cfg) {
    SimConfig sim = cfg.sim;
    sim.seed = cfg.seed;
    const std::vector<double> sigmas = {cfg.sigma};
    auto datasets = generate_dataset(sim, sigmas);
    const SimDataset& ds = datasets[0];

    // two similar test trajectories: same excitation, the second one nudged
    auto exc_rng = make_rng(cfg.seed, "latent.excitation");
    auto inputs_a = excite(cfg.trajectory_length, exc_rng, sim.excitation);
    auto inputs_b = inputs_a;
    for (auto& u : inputs_b) {
        u[0] = std::clamp(u[0] + cfg.perturbation, 0.0, 1.0);
        u[1] = std::clamp(u[1] - cfg.perturbation, 0.0, 1.0);
    }

    auto run_trajectory = [&](std::span<const PumpInput> inputs,
                              std::uint64_t noise_key) {
        const TankLevels h0 = steady_state(sim.tank, inputs[0]);
        auto clean = simulate(sim.tank, inputs, h0, sim.sample_period, sim.substeps);
        NoiseSpec spec;
        spec.sigma = cfg.sigma;
        spec.impulse_prob = sim.impulse_prob;
        spec.rail_high = sim.tank.level_max;
        spec.seed = noise_key;
        auto noisy = corrupt(clean, spec);
        Series s;
        s.channels = ds.model_series.channels;
        s.is_input = ds.model_series.is_input;
        s.data.reserve(inputs.size() * 6);
        for (std::size_t t = 0; t < inputs.size(); ++t) {
            s.data.push_back(inputs[t][0]);
            s.data.push_back(inputs[t][1]);
            for (double v : noisy[t]) s.data.push_back(v);
        }
        return s;
    };
    const Series series_a =
        run_trajectory(inputs_a, derive_seed(cfg.seed, "latent.noise.a"));
    const Series series_b =
        run_trajectory(inputs_b, derive_seed(cfg.seed, "latent.noise.b"));

    LatentStudyResult result;
    for (const auto& name : cfg.variants) {
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(cfg.seed, "train." + name + "." +
                                            format_double(cfg.sigma));
        auto trained =
            train_variant(ds.train_data(), tc, variant_from_string(name));

        auto lat_a = latent_series(trained.model, series_a);
        auto lat_b = latent_series(trained.model, series_b);
        std::vector<std::vector<double>> joint = lat_a;
        joint.insert(joint.end(), lat_b.begin(), lat_b.end());
        auto pca = pca_fit(joint, 2);

        LatentStudyVariant v;
        v.variant = name;
        v.trace_a.label = "trajectory_a";
        v.trace_a.points = pca_transform(pca, lat_a);
        v.trace_b.label = "trajectory_b";
        v.trace_b.points = pca_transform(pca, lat_b);
        v.smoothness_a = smoothness_score(v.trace_a.points);
        v.smoothness_b = smoothness_score(v.trace_b.points);
        v.separation = trace_separation(v.trace_a.points, v.trace_b.points);
        result.variants.push_back(std::move(v));
    }
    return result;
}

}  // namespace cbdae
