#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbdae/contrastive.hpp"
#include "cbdae/model.hpp"
#include "cbdae/series.hpp"

namespace cbdae {

enum class Variant { cbdae, cbdae_h, bdae_l1, bdae_noreg };

Variant variant_from_string(const std::string& name);
std::string to_string(Variant v);

struct TrainConfig {
    std::size_t window = 60;        // T
    std::size_t batch = 64;         // B = s + r
    std::size_t seq_members = 32;   // s
    std::size_t rand_members = 32;  // r
    std::vector<std::size_t> hidden = {80, 80};
    std::size_t proj_inner = 0;     // G1; 0 means top hidden size
    std::size_t proj_dim = 20;      // G
    double beta = 1.5;
    double l1_beta = 1e-6;          // BDAE_L1 trade-off
    double k_d = 0.0;
    double c_d = 0.02;
    std::size_t epochs = 30;
    double learning_rate = 1e-3;
    double grad_clip = 5.0;         // global norm; 0 disables
    std::uint64_t seed = 1;
    std::size_t epoch_budget = 0;   // windows consumed per epoch; 0 = full pass
    double validation_fraction = 0.1;  // used when data has no explicit split

    void validate() const;
};

struct TrainData {
    Series train;
    Series validation;
    // Noise-free counterpart of `validation`, when the source provides one;
    // enables the clean-signal RMSE diagnostic.
    std::optional<Series> clean_validation;

    // Chronological split of a single series per the config's fraction.
    static TrainData from_series(const Series& s, double validation_fraction,
                                 const Series* clean = nullptr);
};

struct EpochStats {
    std::size_t epoch = 0;
    double l_ae = 0.0;
    double l_nce = 0.0;
    double l_total = 0.0;
    double p_d = 0.0;
    double val_l_ae = 0.0;
    double val_l_nce = 0.0;
    double val_l_total = 0.0;
    bool has_validation = false;
    std::optional<double> clean_rmse;
};

struct TrainLog {
    std::vector<EpochStats> epochs;
    void write_csv(const std::string& path) const;
};

// Raised when the loss leaves the reals; carries what was logged so far.
class TrainAbort : public NumericError {
public:
    TrainAbort(const std::string& msg, TrainLog log)
        : NumericError(msg), partial_log(std::move(log)) {}
    TrainLog partial_log;
};

struct TrainResult {
    CbdaeModel model;
    TrainLog log;
    std::size_t selected_epoch = 0;  // the checkpoint validation picked
};

// p_d = min(1, k_d + c_d * e)
double scheduled_probability(std::size_t epoch, double k_d, double c_d);

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;

    static AdamState for_params(std::span<Tensor* const> params);
};

// Bias-corrected Adam update from the gradients currently held by `params`.
void adam_step(std::span<Tensor* const> params, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Scales all gradients so their global norm is at most max_norm; returns the
// pre-clip norm.
double clip_gradient_norm(std::span<Tensor* const> params, double max_norm);

// Epoch schedule: the train windows are partitioned into disjoint blocks of
// s consecutive windows; each epoch visits the blocks in a fresh shuffled
// order, so every window anchors a sequential batch at most once per epoch.
// Returns the anchor window index of each visited block.
std::vector<std::size_t> epoch_anchor_blocks(std::size_t num_windows,
                                             std::size_t seq_count,
                                             std::size_t budget,
                                             std::mt19937_64& rng);

TrainResult train(const TrainData& data, const TrainConfig& cfg);
TrainResult train_variant(const TrainData& data, const TrainConfig& cfg,
                          Variant variant,
                          const CbdaeModel* resume = nullptr);

}  // namespace cbdae
