#include "cbdae/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cbdae/csv.hpp"
#include "cbdae/evalbench.hpp"
#include "cbdae/model.hpp"
#include "cbdae/quadtank.hpp"

namespace cbdae {

namespace {

using nlohmann::json;

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("config: parse error in '" + path + "': " + e.what());
    }
    if (!j.is_object()) throw IoError("config: top level must be an object");
    return j;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& context) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) known = true;
        if (!known)
            throw ContractError("config: unknown key '" + it.key() + "' in " +
                                context);
    }
}

json section(const json& root, const char* name) {
    check_keys(root, {"seed", "simulate", "train", "denoise", "bench", "latent"},
               "top level");
    if (!root.contains(name)) return json::object();
    if (!root[name].is_object())
        throw ContractError(std::string("config: '") + name +
                            "' must be an object");
    return root[name];
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j[key].is_null()) return fallback;
    try {
        return j[key].get<T>();
    } catch (const json::exception&) {
        throw ContractError(std::string("config: bad value for '") + key + "'");
    }
}

std::uint64_t resolve_seed(const json& root, const CliOverrides& o) {
    if (o.seed) return *o.seed;
    return get_or<std::uint64_t>(root, "seed", 1);
}

TankParams parse_tank(const json& j) {
    check_keys(j,
               {"tank_area", "outlet_area", "gravity", "pump_gain", "valve_split",
                "level_max"},
               "tank");
    TankParams p;
    if (j.contains("tank_area")) {
        auto v = j["tank_area"].get<std::vector<double>>();
        if (v.size() != 4) throw ContractError("config: tank_area needs 4 values");
        std::copy(v.begin(), v.end(), p.tank_area.begin());
    }
    if (j.contains("outlet_area")) {
        auto v = j["outlet_area"].get<std::vector<double>>();
        if (v.size() != 4) throw ContractError("config: outlet_area needs 4 values");
        std::copy(v.begin(), v.end(), p.outlet_area.begin());
    }
    p.gravity = get_or(j, "gravity", p.gravity);
    if (j.contains("pump_gain")) {
        auto v = j["pump_gain"].get<std::vector<double>>();
        if (v.size() != 2) throw ContractError("config: pump_gain needs 2 values");
        std::copy(v.begin(), v.end(), p.pump_gain.begin());
    }
    if (j.contains("valve_split")) {
        auto v = j["valve_split"].get<std::vector<double>>();
        if (v.size() != 2) throw ContractError("config: valve_split needs 2 values");
        std::copy(v.begin(), v.end(), p.valve_split.begin());
    }
    p.level_max = get_or(j, "level_max", p.level_max);
    return p;
}

json tank_to_json(const TankParams& p) {
    return {{"tank_area", p.tank_area},
            {"outlet_area", p.outlet_area},
            {"gravity", p.gravity},
            {"pump_gain", p.pump_gain},
            {"valve_split", p.valve_split},
            {"level_max", p.level_max}};
}

ExcitationConfig parse_excitation(const json& j) {
    check_keys(j, {"dwell_min", "dwell_max", "level_min", "level_max"},
               "excitation");
    ExcitationConfig e;
    e.dwell_min = get_or(j, "dwell_min", e.dwell_min);
    e.dwell_max = get_or(j, "dwell_max", e.dwell_max);
    e.level_min = get_or(j, "level_min", e.level_min);
    e.level_max = get_or(j, "level_max", e.level_max);
    return e;
}

json excitation_to_json(const ExcitationConfig& e) {
    return {{"dwell_min", e.dwell_min},
            {"dwell_max", e.dwell_max},
            {"level_min", e.level_min},
            {"level_max", e.level_max}};
}

SimConfig parse_sim(const json& j) {
    check_keys(j,
               {"tank", "excitation", "duration", "sample_period", "substeps",
                "impulse_prob", "train_fraction", "val_fraction"},
               "sim");
    SimConfig s;
    if (j.contains("tank")) s.tank = parse_tank(j["tank"]);
    if (j.contains("excitation")) s.excitation = parse_excitation(j["excitation"]);
    s.duration = get_or<std::size_t>(j, "duration", s.duration);
    s.sample_period = get_or(j, "sample_period", s.sample_period);
    s.substeps = get_or<std::size_t>(j, "substeps", s.substeps);
    s.impulse_prob = get_or(j, "impulse_prob", s.impulse_prob);
    s.train_fraction = get_or(j, "train_fraction", s.train_fraction);
    s.val_fraction = get_or(j, "val_fraction", s.val_fraction);
    return s;
}

json sim_to_json(const SimConfig& s) {
    return {{"tank", tank_to_json(s.tank)},
            {"excitation", excitation_to_json(s.excitation)},
            {"duration", s.duration},
            {"sample_period", s.sample_period},
            {"substeps", s.substeps},
            {"impulse_prob", s.impulse_prob},
            {"train_fraction", s.train_fraction},
            {"val_fraction", s.val_fraction}};
}

TrainConfig parse_train_params(const json& j, const std::string& context) {
    check_keys(j,
               {"window", "batch", "seq_members", "rand_members", "hidden",
                "proj_inner", "proj_dim", "beta", "l1_beta", "k_d", "c_d",
                "epochs", "learning_rate", "grad_clip", "epoch_budget",
                "validation_fraction"},
               context);
    TrainConfig c;
    c.window = get_or<std::size_t>(j, "window", c.window);
    c.batch = get_or<std::size_t>(j, "batch", c.batch);
    c.seq_members = get_or<std::size_t>(j, "seq_members", c.seq_members);
    c.rand_members = get_or<std::size_t>(j, "rand_members", c.rand_members);
    c.hidden = get_or(j, "hidden", c.hidden);
    c.proj_inner = get_or<std::size_t>(j, "proj_inner", c.proj_inner);
    c.proj_dim = get_or<std::size_t>(j, "proj_dim", c.proj_dim);
    c.beta = get_or(j, "beta", c.beta);
    c.l1_beta = get_or(j, "l1_beta", c.l1_beta);
    c.k_d = get_or(j, "k_d", c.k_d);
    c.c_d = get_or(j, "c_d", c.c_d);
    c.epochs = get_or<std::size_t>(j, "epochs", c.epochs);
    c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
    c.grad_clip = get_or(j, "grad_clip", c.grad_clip);
    c.epoch_budget = get_or<std::size_t>(j, "epoch_budget", c.epoch_budget);
    c.validation_fraction =
        get_or(j, "validation_fraction", c.validation_fraction);
    return c;
}

json train_params_to_json(const TrainConfig& c) {
    return {{"window", c.window},
            {"batch", c.batch},
            {"seq_members", c.seq_members},
            {"rand_members", c.rand_members},
            {"hidden", c.hidden},
            {"proj_inner", c.proj_inner},
            {"proj_dim", c.proj_dim},
            {"beta", c.beta},
            {"l1_beta", c.l1_beta},
            {"k_d", c.k_d},
            {"c_d", c.c_d},
            {"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"grad_clip", c.grad_clip},
            {"epoch_budget", c.epoch_budget},
            {"validation_fraction", c.validation_fraction}};
}

void write_effective_config(const std::string& path, const char* command,
                            std::uint64_t seed, json body) {
    json out;
    out["seed"] = seed;
    out[command] = std::move(body);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("config: cannot write '" + path + "'");
    f << out.dump(2) << '\n';
}

bool is_dataset_csv(const CsvTable& t) {
    const char* needed[] = {"step", "u1", "u2", "y1", "ytilde1"};
    for (const char* n : needed) {
        bool found = false;
        for (const auto& h : t.header)
            if (h == n) found = true;
        if (!found) return false;
    }
    return true;
}

struct LoadedInput {
    Series model;
    std::optional<Series> clean;
};

LoadedInput load_input(const std::string& data_path, const std::string& schema,
                       double train_fraction, double val_fraction) {
    CsvTable probe = read_csv(data_path);
    LoadedInput out;
    if (is_dataset_csv(probe)) {
        SimDataset ds = read_dataset_csv(data_path, train_fraction, val_fraction);
        out.model = std::move(ds.model_series);
        out.clean = std::move(ds.clean_series);
        return out;
    }
    if (schema.empty())
        throw IoError("input '" + data_path +
                      "' is not a quadtank dataset; a sidecar schema is required");
    out.model = load_external_series(data_path, schema, &out.clean);
    return out;
}

}  // namespace

Series load_external_series(const std::string& csv_path,
                            const std::string& schema_path,
                            std::optional<Series>* clean_out) {
    std::ifstream sf(schema_path);
    if (!sf) throw IoError("schema: cannot open '" + schema_path + "'");
    json schema;
    try {
        sf >> schema;
    } catch (const json::exception& e) {
        throw IoError("schema: parse error: " + std::string(e.what()));
    }
    check_keys(schema, {"step_column", "columns"}, "schema");
    if (!schema.contains("columns") || !schema["columns"].is_array())
        throw ContractError("schema: 'columns' array required");

    CsvTable table = read_csv(csv_path);
    if (table.rows.empty()) throw IoError("external csv: no data rows");

    struct Col {
        std::string name;
        std::string role;
        std::string of;
        std::size_t index = 0;
    };
    std::vector<Col> cols;
    for (const auto& jc : schema["columns"]) {
        check_keys(jc, {"name", "role", "of"}, "schema column");
        Col c;
        c.name = jc.at("name").get<std::string>();
        c.role = jc.at("role").get<std::string>();
        c.of = get_or<std::string>(jc, "of", "");
        if (c.role != "input" && c.role != "measurement" && c.role != "clean" &&
            c.role != "ignore")
            throw ContractError("schema: unknown role '" + c.role + "'");
        c.index = table.column_index(c.name);
        cols.push_back(std::move(c));
    }

    // uniform sampling check
    if (schema.contains("step_column")) {
        const std::size_t si =
            table.column_index(schema["step_column"].get<std::string>());
        std::optional<double> delta;
        for (std::size_t r = 1; r < table.rows.size(); ++r) {
            const auto& a = table.rows[r - 1][si];
            const auto& b = table.rows[r][si];
            if (!a || !b) throw IoError("external csv: missing step value");
            const double d = *b - *a;
            if (d <= 0.0) throw IoError("external csv: non-increasing steps");
            if (!delta) delta = d;
            else if (std::fabs(d - *delta) > 1e-9 * std::max(1.0, std::fabs(*delta)))
                throw IoError("external csv: sampling gap at row " +
                              std::to_string(r) + " (no silent interpolation)");
        }
    }

    Series model;
    std::vector<const Col*> model_cols;
    for (const auto& c : cols) {
        if (c.role != "input" && c.role != "measurement") continue;
        model.channels.push_back(c.name);
        model.is_input.push_back(c.role == "input" ? 1 : 0);
        model_cols.push_back(&c);
    }
    if (model.channels.empty())
        throw ContractError("schema: no input or measurement columns");
    model.data.reserve(table.rows.size() * model.channels.size());
    for (const auto& row : table.rows)
        for (const Col* c : model_cols) {
            if (!row[c->index])
                throw IoError("external csv: empty cell in column '" + c->name + "'");
            model.data.push_back(*row[c->index]);
        }

    if (clean_out) {
        // clean series mirrors the model layout when every measurement has a ref
        std::vector<std::optional<std::size_t>> clean_idx(model_cols.size());
        bool complete = true;
        for (std::size_t i = 0; i < model_cols.size(); ++i) {
            if (model.is_input[i]) {
                clean_idx[i] = model_cols[i]->index;  // inputs are already clean
                continue;
            }
            bool found = false;
            for (const auto& c : cols)
                if (c.role == "clean" && c.of == model_cols[i]->name) {
                    clean_idx[i] = c.index;
                    found = true;
                }
            if (!found) complete = false;
        }
        if (complete) {
            Series clean;
            clean.channels = model.channels;
            clean.is_input = model.is_input;
            clean.data.reserve(model.data.size());
            for (const auto& row : table.rows)
                for (const auto& idx : clean_idx) {
                    if (!row[*idx]) throw IoError("external csv: empty clean cell");
                    clean.data.push_back(*row[*idx]);
                }
            *clean_out = std::move(clean);
        } else {
            clean_out->reset();
        }
    }
    return model;
}

// --- simulate -----------------------------------------------------------------

int cmd_simulate(const std::string& config_path, const CliOverrides& o) {
    json root = load_config(config_path);
    json sec = section(root, "simulate");
    check_keys(sec,
               {"out_dir", "sigma", "tank", "excitation", "duration",
                "sample_period", "substeps", "impulse_prob", "train_fraction",
                "val_fraction"},
               "simulate");
    const std::uint64_t seed = resolve_seed(root, o);

    json sim_json = sec;
    sim_json.erase("out_dir");
    sim_json.erase("sigma");
    SimConfig sim = parse_sim(sim_json);
    sim.seed = seed;

    std::vector<double> sigmas =
        o.sigmas.empty()
            ? get_or<std::vector<double>>(sec, "sigma",
                                          {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0})
            : o.sigmas;
    const std::string out_dir =
        o.out_dir ? *o.out_dir : get_or<std::string>(sec, "out_dir", "data");

    std::filesystem::create_directories(out_dir);
    auto datasets = generate_dataset(sim, sigmas);
    for (const auto& ds : datasets) {
        const std::string path =
            out_dir + "/quadtank_sigma_" + format_double(ds.sigma) + ".csv";
        write_dataset_csv(path, ds);
        std::printf("wrote %s (%zu samples)\n", path.c_str(),
                    ds.model_series.length());
    }

    json body = sim_to_json(sim);
    body["out_dir"] = out_dir;
    body["sigma"] = sigmas;
    write_effective_config(out_dir + "/simulate.effective.json", "simulate", seed,
                           body);
    return 0;
}

// --- train --------------------------------------------------------------------

int cmd_train(const std::string& config_path, const CliOverrides& o) {
    json root = load_config(config_path);
    json sec = section(root, "train");
    check_keys(sec,
               {"data", "schema", "out", "log", "variant", "resume",
                "train_fraction", "val_fraction", "window", "batch",
                "seq_members", "rand_members", "hidden", "proj_inner", "proj_dim",
                "beta", "l1_beta", "k_d", "c_d", "epochs", "learning_rate",
                "grad_clip", "epoch_budget", "validation_fraction"},
               "train");
    const std::uint64_t seed = resolve_seed(root, o);

    json params_json = sec;
    for (const char* k :
         {"data", "schema", "out", "log", "variant", "resume", "train_fraction",
          "val_fraction"})
        params_json.erase(k);
    TrainConfig cfg = parse_train_params(params_json, "train");
    cfg.seed = seed;
    if (o.epochs) cfg.epochs = *o.epochs;

    const std::string data_path =
        o.data ? *o.data : get_or<std::string>(sec, "data", "");
    if (data_path.empty()) throw ContractError("train: no input data configured");
    const std::string schema = get_or<std::string>(sec, "schema", "");
    const std::string out_path =
        o.out ? *o.out : get_or<std::string>(sec, "out", "model.ckpt");
    const std::string log_path =
        get_or<std::string>(sec, "log", out_path + ".log.csv");
    const std::string variant_name =
        o.variant ? *o.variant : get_or<std::string>(sec, "variant", "cbdae");
    const Variant variant = variant_from_string(variant_name);
    const std::string resume = get_or<std::string>(sec, "resume", "");
    const double train_fraction = get_or(sec, "train_fraction", 0.8);
    const double val_fraction = get_or(sec, "val_fraction", 0.1);

    LoadedInput input = load_input(data_path, schema, train_fraction, val_fraction);
    const auto len = input.model.length();
    const auto train_end =
        static_cast<std::size_t>(static_cast<double>(len) * train_fraction);
    const auto val_end = static_cast<std::size_t>(
        static_cast<double>(len) * (train_fraction + val_fraction));
    TrainData data;
    data.train = input.model.slice(0, train_end);
    data.validation = input.model.slice(train_end, val_end);
    if (input.clean) data.clean_validation = input.clean->slice(train_end, val_end);

    std::optional<CbdaeModel> resumed;
    if (!resume.empty()) {
        resumed = CbdaeModel::load(resume);
        std::printf("resuming from %s at epoch %u\n", resume.c_str(),
                    resumed->epochs_trained);
    }

    try {
        auto result = train_variant(data, cfg, variant,
                                    resumed ? &*resumed : nullptr);
        result.model.save(out_path);
        result.log.write_csv(log_path);
        const auto& last = result.log.epochs.back();
        std::printf("trained %s for %zu epochs: l_total %.6f (epoch %zu..%zu)\n",
                    variant_name.c_str(), cfg.epochs, last.l_total,
                    result.log.epochs.front().epoch, last.epoch);
    } catch (const TrainAbort& e) {
        e.partial_log.write_csv(log_path);
        std::fprintf(stderr, "train: aborted: %s (partial log at %s)\n", e.what(),
                     log_path.c_str());
        return 3;
    }

    json body = train_params_to_json(cfg);
    body["data"] = data_path;
    body["schema"] = schema;
    body["out"] = out_path;
    body["log"] = log_path;
    body["variant"] = variant_name;
    body["resume"] = resume;
    body["train_fraction"] = train_fraction;
    body["val_fraction"] = val_fraction;
    write_effective_config(out_path + ".effective.json", "train", seed, body);
    return 0;
}

// --- denoise ------------------------------------------------------------------

int cmd_denoise(const std::string& config_path, const CliOverrides& o) {
    json root = load_config(config_path);
    json sec = section(root, "denoise");
    check_keys(sec, {"input", "schema", "checkpoint", "out"}, "denoise");
    const std::uint64_t seed = resolve_seed(root, o);

    const std::string input_path =
        o.input ? *o.input : get_or<std::string>(sec, "input", "");
    const std::string checkpoint_path =
        o.checkpoint ? *o.checkpoint : get_or<std::string>(sec, "checkpoint", "");
    const std::string out_path =
        o.out ? *o.out : get_or<std::string>(sec, "out", "denoised.csv");
    const std::string schema = get_or<std::string>(sec, "schema", "");
    if (input_path.empty() || checkpoint_path.empty())
        throw ContractError("denoise: input and checkpoint are required");

    CbdaeModel model = CbdaeModel::load(checkpoint_path);
    LoadedInput input = load_input(input_path, schema, 0.8, 0.1);
    if (input.model.channels != model.channels)
        throw ContractError(
            "denoise: input channels do not match the checkpoint schema");

    DenoiserState state(model);
    std::string text = "step";
    for (const auto& ch : model.channels) text += "," + ch + "_hat";
    text += '\n';
    for (std::size_t t = 0; t < input.model.length(); ++t) {
        auto est = state.step(input.model.row(t));
        text += std::to_string(t);
        if (est) {
            for (double v : *est) text += "," + format_double(v);
        } else {
            for (std::size_t c = 0; c < model.channels.size(); ++c) text += ",";
        }
        text += '\n';
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoError("denoise: cannot open '" + out_path + "'");
    out << text;
    if (!out) throw IoError("denoise: write failed");
    std::printf("denoised %zu rows -> %s\n", input.model.length(),
                out_path.c_str());

    json body = {{"input", input_path},
                 {"schema", schema},
                 {"checkpoint", checkpoint_path},
                 {"out", out_path}};
    write_effective_config(out_path + ".effective.json", "denoise", seed, body);
    return 0;
}

// --- bench --------------------------------------------------------------------

int cmd_bench(const std::string& config_path, const CliOverrides& o) {
    json root = load_config(config_path);
    json sec = section(root, "bench");
    check_keys(sec,
               {"out_dir", "sigma", "methods", "sim", "train", "window_scan",
                "sg_order", "ema_alpha", "kf_q", "particles", "jobs"},
               "bench");
    const std::uint64_t seed = resolve_seed(root, o);

    BenchConfig cfg;
    cfg.seed = seed;
    if (sec.contains("sim")) cfg.sim = parse_sim(sec["sim"]);
    if (sec.contains("train"))
        cfg.train = parse_train_params(sec["train"], "bench.train");
    cfg.sigmas = o.sigmas.empty()
                     ? get_or<std::vector<double>>(sec, "sigma", cfg.sigmas)
                     : o.sigmas;
    cfg.methods = get_or<std::vector<std::string>>(sec, "methods", {});
    cfg.window_scan =
        get_or<std::vector<std::size_t>>(sec, "window_scan", cfg.window_scan);
    cfg.sg_order = get_or<std::size_t>(sec, "sg_order", cfg.sg_order);
    cfg.ema_alpha = get_or(sec, "ema_alpha", cfg.ema_alpha);
    cfg.kf_q = get_or(sec, "kf_q", cfg.kf_q);
    cfg.particle.n_particles =
        get_or<std::size_t>(sec, "particles", cfg.particle.n_particles);
    cfg.jobs = o.jobs ? *o.jobs : get_or<std::size_t>(sec, "jobs", 1);
    const std::string out_dir =
        o.out_dir ? *o.out_dir : get_or<std::string>(sec, "out_dir", "bench");

    std::filesystem::create_directories(out_dir);
    BenchReport report = run_benchmark(cfg);
    report.write_csv(out_dir + "/report.csv");

    std::printf("%-12s %8s %10s %10s %10s\n", "method", "sigma", "rmse", "paper",
                "runtime_s");
    for (const auto& c : report.cells) {
        if (!c.available) {
            std::printf("%-12s %8.3g %10s %10s %10.2f  (%s)\n", c.method.c_str(),
                        c.sigma, "absent", "-", c.runtime_s, c.note.c_str());
            continue;
        }
        std::printf("%-12s %8.3g %10.4f %10s %10.2f%s\n", c.method.c_str(),
                    c.sigma, c.rmse,
                    c.paper_reference
                        ? format_double(*c.paper_reference).substr(0, 6).c_str()
                        : "-",
                    c.runtime_s,
                    c.chosen_window
                        ? ("  (w=" + std::to_string(*c.chosen_window) + ")").c_str()
                        : "");
    }

    json body;
    body["out_dir"] = out_dir;
    body["sigma"] = cfg.sigmas;
    body["methods"] = cfg.methods;
    body["sim"] = sim_to_json(cfg.sim);
    body["train"] = train_params_to_json(cfg.train);
    body["window_scan"] = cfg.window_scan;
    body["sg_order"] = cfg.sg_order;
    body["ema_alpha"] = cfg.ema_alpha;
    body["kf_q"] = cfg.kf_q;
    body["particles"] = cfg.particle.n_particles;
    body["jobs"] = cfg.jobs;
    write_effective_config(out_dir + "/bench.effective.json", "bench", seed, body);
    return 0;
}

// --- latent -------------------------------------------------------------------

int cmd_latent(const std::string& config_path, const CliOverrides& o) {
    json root = load_config(config_path);
    json sec = section(root, "latent");
    check_keys(sec,
               {"out_dir", "sigma", "variants", "sim", "train",
                "trajectory_length", "perturbation"},
               "latent");
    const std::uint64_t seed = resolve_seed(root, o);

    LatentStudyConfig cfg;
    cfg.seed = seed;
    if (sec.contains("sim")) cfg.sim = parse_sim(sec["sim"]);
    if (sec.contains("train"))
        cfg.train = parse_train_params(sec["train"], "latent.train");
    if (!o.sigmas.empty())
        cfg.sigma = o.sigmas.front();
    else
        cfg.sigma = get_or(sec, "sigma", cfg.sigma);
    if (o.variant)
        cfg.variants = {*o.variant};
    else
        cfg.variants = get_or<std::vector<std::string>>(sec, "variants",
                                                        cfg.variants);
    cfg.trajectory_length =
        get_or<std::size_t>(sec, "trajectory_length", cfg.trajectory_length);
    cfg.perturbation = get_or(sec, "perturbation", cfg.perturbation);
    const std::string out_dir =
        o.out_dir ? *o.out_dir : get_or<std::string>(sec, "out_dir", "latent");

    std::filesystem::create_directories(out_dir);
    auto result = run_latent_study(cfg);

    std::string summary = "variant,smoothness_a,smoothness_b,separation\n";
    for (const auto& v : result.variants) {
        v.write_csv(out_dir + "/latent_" + v.variant + ".csv");
        summary += v.variant + "," + format_double(v.smoothness_a) + "," +
                   format_double(v.smoothness_b) + "," +
                   format_double(v.separation) + "\n";
        std::printf("%-12s smoothness %.4f / %.4f  separation %.4f\n",
                    v.variant.c_str(), v.smoothness_a, v.smoothness_b,
                    v.separation);
    }
    std::ofstream sf(out_dir + "/latent_summary.csv", std::ios::binary);
    if (!sf) throw IoError("latent: cannot write summary");
    sf << summary;

    json body;
    body["out_dir"] = out_dir;
    body["sigma"] = cfg.sigma;
    body["variants"] = cfg.variants;
    body["sim"] = sim_to_json(cfg.sim);
    body["train"] = train_params_to_json(cfg.train);
    body["trajectory_length"] = cfg.trajectory_length;
    body["perturbation"] = cfg.perturbation;
    write_effective_config(out_dir + "/latent.effective.json", "latent", seed,
                           body);
    return 0;
}

}  // namespace cbdae
