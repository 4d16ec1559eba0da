#include "cbdae/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cbdae/csv.hpp"

namespace cbdae {

Variant variant_from_string(const std::string& name) {
    if (name == "cbdae") return Variant::cbdae;
    if (name == "cbdae_h") return Variant::cbdae_h;
    if (name == "bdae_l1") return Variant::bdae_l1;
    if (name == "bdae_noreg") return Variant::bdae_noreg;
    throw ContractError("unknown variant '" + name + "'");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::cbdae: return "cbdae";
        case Variant::cbdae_h: return "cbdae_h";
        case Variant::bdae_l1: return "bdae_l1";
        case Variant::bdae_noreg: return "bdae_noreg";
    }
    throw ContractError("unknown variant value");
}

void TrainConfig::validate() const {
    if (seq_members + rand_members != batch)
        throw ContractError("train config: s + r must equal the batch size");
    if (seq_members < 3) throw ContractError("train config: s must be >= 3");
    if (window == 0 || hidden.empty() || epochs == 0)
        throw ContractError("train config: window, hidden and epochs must be positive");
    if (beta < 0.0 || k_d < 0.0 || c_d < 0.0)
        throw ContractError("train config: beta, k_d, c_d must be nonnegative");
    if (learning_rate <= 0.0)
        throw ContractError("train config: learning rate must be positive");
    if (validation_fraction < 0.0 || validation_fraction >= 1.0)
        throw ContractError("train config: validation fraction in [0, 1)");
}

TrainData TrainData::from_series(const Series& s, double validation_fraction,
                                 const Series* clean) {
    TrainData d;
    const auto len = s.length();
    const auto val_len = static_cast<std::size_t>(
        static_cast<double>(len) * validation_fraction);
    const std::size_t split = len - val_len;
    d.train = s.slice(0, split);
    d.validation = s.slice(split, len);
    if (clean) {
        if (clean->length() != len)
            throw DimensionError("train data: clean series length mismatch");
        d.clean_validation = clean->slice(split, len);
    }
    return d;
}

double scheduled_probability(std::size_t epoch, double k_d, double c_d) {
    if (k_d < 0.0 || c_d < 0.0)
        throw ContractError("scheduled_probability: k_d, c_d must be nonnegative");
    return std::min(1.0, k_d + c_d * static_cast<double>(epoch));
}

AdamState AdamState::for_params(std::span<Tensor* const> params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor* t : params) {
        s.m.emplace_back(t->size(), 0.0);
        s.v.emplace_back(t->size(), 0.0);
    }
    return s;
}

void adam_step(std::span<Tensor* const> params, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
    if (state.m.size() != params.size())
        throw DimensionError("adam_step: moment count mismatch");
    ++state.step;
    const auto t = static_cast<double>(state.step);
    const double corr1 = 1.0 - std::pow(beta1, t);
    const double corr2 = 1.0 - std::pow(beta2, t);
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto vals = params[p]->mutable_values();
        auto grad = params[p]->grad();
        auto& m = state.m[p];
        auto& v = state.v[p];
        if (grad.size() != vals.size())
            throw DimensionError("adam_step: gradient size mismatch");
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            const double m_hat = m[i] / corr1;
            const double v_hat = v[i] / corr2;
            vals[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

double clip_gradient_norm(std::span<Tensor* const> params, double max_norm) {
    double sq = 0.0;
    for (const Tensor* t : params)
        for (double g : t->grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double factor = max_norm / norm;
        for (Tensor* t : params) {
            auto node = t->node();
            for (double& g : node->grad) g *= factor;
        }
    }
    return norm;
}

std::vector<std::size_t> epoch_anchor_blocks(std::size_t num_windows,
                                             std::size_t seq_count,
                                             std::size_t budget,
                                             std::mt19937_64& rng) {
    if (seq_count == 0) throw ContractError("epoch_anchor_blocks: s must be positive");
    const std::size_t blocks = num_windows / seq_count;
    std::vector<std::size_t> order(blocks);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t take = blocks;
    if (budget > 0) take = std::min(blocks, (budget + seq_count - 1) / seq_count);
    std::vector<std::size_t> anchors;
    anchors.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
        anchors.push_back(order[i] * seq_count + seq_count - 1);
    return anchors;
}

void TrainLog::write_csv(const std::string& path) const {
    CsvTable table;
    table.header = {"epoch", "l_ae", "l_nce", "l_total", "p_d", "clean_rmse"};
    for (const auto& e : epochs) {
        std::vector<std::optional<double>> row = {
            static_cast<double>(e.epoch), e.l_ae, e.l_nce, e.l_total, e.p_d,
            e.clean_rmse ? std::optional<double>(*e.clean_rmse) : std::nullopt};
        table.rows.push_back(std::move(row));
    }
    cbdae::write_csv(path, table);
}

namespace {

struct ForwardOutput {
    Tensor loss;
    double l_ae = 0.0;
    double l_reg = 0.0;
};

// One Algorithm-1 inner iteration: encode every batch window, project,
// decode with per-step scheduled sampling, combine the losses.
ForwardOutput forward_batch(const CbdaeParams& params, Variant variant,
                            const std::vector<Tensor>& steps,
                            std::size_t seq_count, double beta, double l1_beta,
                            double p_d, std::mt19937_64* rng) {
    auto enc = encode_steps(params.encoder, steps);
    auto outs = decode_steps(params, enc.final_states, steps, p_d, rng);
    Tensor l_ae = ae_loss(outs, steps);

    ForwardOutput fo;
    fo.l_ae = l_ae.value();
    double eff_beta = 0.0;
    Tensor l_reg;
    switch (variant) {
        case Variant::cbdae:
            eff_beta = beta;
            if (eff_beta > 0.0)
                l_reg = nce_loss(project_latent(params, enc.final_states.back()),
                                 seq_count);
            break;
        case Variant::cbdae_h:
            eff_beta = beta;
            if (eff_beta > 0.0)
                l_reg = nce_loss(enc.final_states.back(), seq_count);
            break;
        case Variant::bdae_l1:
            eff_beta = l1_beta;
            if (eff_beta > 0.0) l_reg = mean(abs(enc.final_states.back()));
            break;
        case Variant::bdae_noreg:
            break;
    }
    if (eff_beta > 0.0) {
        fo.l_reg = l_reg.value();
        fo.loss = total_loss(l_ae, l_reg, eff_beta);
    } else {
        fo.loss = l_ae;
    }
    return fo;
}

std::vector<double> snapshot(std::span<Tensor* const> params) {
    std::vector<double> out;
    for (const Tensor* t : params) {
        auto v = t->values();
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

void restore(std::span<Tensor* const> params, const std::vector<double>& flat) {
    std::size_t pos = 0;
    for (Tensor* t : params) {
        auto v = t->mutable_values();
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                  flat.begin() + static_cast<std::ptrdiff_t>(pos + v.size()),
                  v.begin());
        pos += v.size();
    }
}

struct ValMetrics {
    bool available = false;
    double l_ae = 0.0;
    double l_nce = 0.0;
    double l_total = 0.0;
    std::optional<double> clean_rmse;
};

// Deterministic inference-mode (p_d = 1) pass over the validation split;
// the random batch members are redrawn identically each epoch.
ValMetrics validate(const CbdaeModel& model, Variant variant,
                    const TrainConfig& cfg, const TrainData& data) {
    ValMetrics out;
    const std::size_t T = cfg.window;
    const Series& val = data.validation;
    if (val.length() < T) return out;
    const std::size_t num_windows = val.length() - T + 1;
    const std::size_t s = cfg.seq_members, r = cfg.rand_members;
    const std::size_t blocks = num_windows / s;
    if (blocks == 0 || num_windows < r) return out;

    NoGradGuard no_grad;
    auto rng = make_rng(cfg.seed, "validation");
    double sum_ae = 0.0, sum_reg = 0.0;
    double clean_sq = 0.0;
    std::size_t clean_terms = 0;
    std::vector<std::uint8_t> measured;
    for (std::size_t c = 0; c < val.n_channels(); ++c)
        measured.push_back(val.is_input.empty() ? 1 : !val.is_input[c]);

    for (std::size_t b = 0; b < blocks; ++b) {
        TrainBatch batch =
            build_batch(num_windows, b * s + s - 1, s, r, rng);
        std::vector<std::size_t> anchors;
        anchors.reserve(batch.size());
        for (std::size_t w : batch.indices) anchors.push_back(w + T - 1);
        auto steps = batched_window_steps(val, model.norm, anchors, T);

        auto enc = encode_steps(model.params.encoder, steps);
        auto outs =
            decode_steps(model.params, enc.final_states, steps, 1.0, nullptr);
        sum_ae += ae_loss(outs, steps).value();
        switch (variant) {
            case Variant::cbdae:
                sum_reg += nce_loss(project_latent(model.params,
                                                   enc.final_states.back()),
                                    s)
                               .value();
                break;
            case Variant::cbdae_h:
                sum_reg += nce_loss(enc.final_states.back(), s).value();
                break;
            case Variant::bdae_l1:
                sum_reg += mean(abs(enc.final_states.back())).value();
                break;
            case Variant::bdae_noreg:
                break;
        }

        if (data.clean_validation) {
            // final reconstruction column per sequential member vs clean data
            const Tensor& last = outs.back();
            for (std::size_t m = 0; m < s; ++m) {
                const std::size_t t = anchors[m];
                for (std::size_t c = 0; c < val.n_channels(); ++c) {
                    if (!measured[c]) continue;
                    const double est = model.norm.invert(c, last.at(c, m));
                    const double clean = data.clean_validation->at(t, c);
                    clean_sq += (est - clean) * (est - clean);
                    ++clean_terms;
                }
            }
        }
    }
    out.available = true;
    out.l_ae = sum_ae / static_cast<double>(blocks);
    out.l_nce = sum_reg / static_cast<double>(blocks);
    const double eff_beta = variant == Variant::bdae_l1
                                ? cfg.l1_beta
                                : (variant == Variant::bdae_noreg ? 0.0 : cfg.beta);
    out.l_total = out.l_ae + eff_beta * out.l_nce;
    if (clean_terms > 0)
        out.clean_rmse = std::sqrt(clean_sq / static_cast<double>(clean_terms));
    return out;
}

}  // namespace

TrainResult train(const TrainData& data, const TrainConfig& cfg) {
    return train_variant(data, cfg, Variant::cbdae);
}

TrainResult train_variant(const TrainData& data, const TrainConfig& cfg,
                          Variant variant, const CbdaeModel* resume) {
    cfg.validate();
    const std::size_t T = cfg.window;
    const Series& train_series = data.train;
    if (train_series.length() < T + cfg.seq_members - 1)
        throw RangeError("train: not enough data for one sequential batch");
    const std::size_t num_windows = train_series.length() - T + 1;

    CbdaeModel model;
    if (resume) {
        model = *resume;
        // reload weights as fresh leaves so old graphs cannot alias them
        for (Tensor* t : model.params.all()) *t = t->detached_copy();
    } else {
        model.arch.channels = train_series.n_channels();
        model.arch.window = T;
        model.arch.hidden = cfg.hidden;
        model.arch.proj_dim = cfg.proj_dim;
        model.arch.proj_inner =
            cfg.proj_inner == 0 ? cfg.hidden.back() : cfg.proj_inner;
        model.arch.has_projection = variant == Variant::cbdae;
        model.variant = to_string(variant);
        model.params = init_params(model.arch, cfg.seed);
        model.norm = Normalizer::fit(train_series);
        model.channels = train_series.channels;
        model.is_input = train_series.is_input;
    }

    auto params = model.params.all();
    AdamState adam = AdamState::for_params(params);
    adam.step = model.adam_step;
    auto train_rng = make_rng(cfg.seed, "train");

    TrainLog log;
    std::vector<double> best_params;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    const std::size_t first_epoch = model.epochs_trained;

    for (std::size_t e = first_epoch; e < first_epoch + cfg.epochs; ++e) {
        const double p_d = scheduled_probability(e, cfg.k_d, cfg.c_d);
        auto anchors =
            epoch_anchor_blocks(num_windows, cfg.seq_members,
                                cfg.epoch_budget, train_rng);
        if (anchors.empty())
            throw RangeError("train: epoch schedule is empty");

        double sum_ae = 0.0, sum_reg = 0.0, sum_total = 0.0;
        for (std::size_t anchor_window : anchors) {
            TrainBatch batch = build_batch(num_windows, anchor_window,
                                           cfg.seq_members, cfg.rand_members,
                                           train_rng);
            std::vector<std::size_t> batch_anchors;
            batch_anchors.reserve(batch.size());
            for (std::size_t w : batch.indices) batch_anchors.push_back(w + T - 1);
            auto steps =
                batched_window_steps(train_series, model.norm, batch_anchors, T);
            auto fo = forward_batch(model.params, variant, steps,
                                    cfg.seq_members, cfg.beta, cfg.l1_beta, p_d,
                                    &train_rng);
            const double loss_value = fo.loss.value();
            if (!std::isfinite(loss_value)) {
                release_graph(fo.loss);
                throw TrainAbort("train: non-finite loss at epoch " +
                                     std::to_string(e),
                                 log);
            }
            model.params.zero_grad();
            backward(fo.loss);
            release_graph(fo.loss);
            clip_gradient_norm(params, cfg.grad_clip);
            adam_step(params, adam, cfg.learning_rate);
            sum_ae += fo.l_ae;
            sum_reg += fo.l_reg;
            sum_total += loss_value;
        }

        const auto n_iters = static_cast<double>(anchors.size());
        EpochStats stats;
        stats.epoch = e;
        stats.l_ae = sum_ae / n_iters;
        stats.l_nce = sum_reg / n_iters;
        stats.l_total = sum_total / n_iters;
        stats.p_d = p_d;

        ValMetrics vm = validate(model, variant, cfg, data);
        if (vm.available) {
            stats.has_validation = true;
            stats.val_l_ae = vm.l_ae;
            stats.val_l_nce = vm.l_nce;
            stats.val_l_total = vm.l_total;
            stats.clean_rmse = vm.clean_rmse;
            if (vm.l_total < best_val) {
                best_val = vm.l_total;
                best_epoch = e;
                best_params = snapshot(params);
            }
        }
        log.epochs.push_back(stats);
    }

    TrainResult result;
    result.selected_epoch = first_epoch + cfg.epochs - 1;
    if (!best_params.empty()) {
        restore(params, best_params);
        result.selected_epoch = best_epoch;
    }
    model.epochs_trained = static_cast<std::uint32_t>(first_epoch + cfg.epochs);
    model.adam_step = adam.step;
    result.model = std::move(model);
    result.log = std::move(log);
    return result;
}

}  // namespace cbdae
