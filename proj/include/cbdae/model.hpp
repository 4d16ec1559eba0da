#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbdae/gru.hpp"
#include "cbdae/series.hpp"
#include "cbdae/tensor.hpp"

namespace cbdae {

struct CbdaeArch {
    std::size_t channels = 6;                 // N
    std::size_t window = 60;                  // T
    std::vector<std::size_t> hidden = {80, 80};
    std::size_t proj_inner = 80;              // G1
    std::size_t proj_dim = 20;                // G
    bool has_projection = true;

    std::size_t depth() const { return hidden.size(); }
    std::size_t top_hidden() const { return hidden.back(); }
    void validate() const;
};

// Every trainable weight of the network. Decoder layer widths mirror the
// encoder's so the state handoff d^i(0) = h^i(T) typechecks.
struct CbdaeParams {
    GruStack encoder;
    GruStack decoder;
    Tensor w_g1, w_g2;   // projection head; undefined when the variant skips g
    Tensor w_out, b_out;

    std::vector<Tensor*> all();
    void zero_grad();
};

// Weight init is keyed per tensor group so variants that drop the head draw
// identical encoder/decoder weights for the same seed.
CbdaeParams init_params(const CbdaeArch& arch, std::uint64_t seed);

// z(T) = W_g2 relu(W_g1 h(T)); accepts [Q] or [Q x B].
Tensor project_latent(const CbdaeParams& params, const Tensor& h_top);

// Runs the decoder over T steps. step_targets are the window columns used
// for teacher forcing ([N] or [N x B] each); the step-1 input is a zero
// start token, afterwards each step feeds the previous estimate with
// probability p_d (drawn per step and batch member) or the delayed target.
// Returns the T reconstruction columns.
std::vector<Tensor> decode_steps(const CbdaeParams& params,
                                 const std::vector<Tensor>& encoder_finals,
                                 std::span<const Tensor> step_targets,
                                 double p_d, std::mt19937_64* rng);

// Single-window convenience wrapper; returns the [N x T] reconstruction.
Tensor decode(const CbdaeParams& params, const std::vector<Tensor>& encoder_finals,
              const Tensor& targets_window, double p_d, std::mt19937_64* rng);

// Per-channel affine scaling fitted on training data.
struct Normalizer {
    std::vector<double> mean;
    std::vector<double> stddev;

    static Normalizer fit(const Series& s);
    double apply(std::size_t c, double v) const { return (v - mean[c]) / stddev[c]; }
    double invert(std::size_t c, double v) const { return v * stddev[c] + mean[c]; }
    Series normalize(const Series& s) const;
};

// Normalized window matrix [N x T] whose last column is sample `anchor`.
Tensor window_tensor(const Series& s, const Normalizer& norm, std::size_t anchor,
                     std::size_t window);

// Batched step inputs for a set of windows: entry j holds column j of every
// window side by side ([N x B]).
std::vector<Tensor> batched_window_steps(const Series& s, const Normalizer& norm,
                                         std::span<const std::size_t> anchors,
                                         std::size_t window);

struct CbdaeModel {
    CbdaeArch arch;
    std::string variant = "cbdae";
    CbdaeParams params;
    Normalizer norm;
    std::vector<std::string> channels;
    std::vector<std::uint8_t> is_input;
    std::uint32_t epochs_trained = 0;
    std::uint64_t adam_step = 0;

    void save(const std::string& path) const;
    static CbdaeModel load(const std::string& path);
};

// One denoised measurement vector from one raw window (rows [t-T+1 .. t]).
std::vector<double> denoise_window(const CbdaeModel& model,
                                   std::span<const double> window_rows);

// Encoder latent h(T) for one raw window.
std::vector<double> latent_of_window(const CbdaeModel& model,
                                     std::span<const double> window_rows);

// Offline sweep over a series; entries before the buffer fills are empty.
std::vector<std::optional<std::vector<double>>> denoise_series(
    const CbdaeModel& model, const Series& s);

std::vector<std::vector<double>> latent_series(const CbdaeModel& model,
                                               const Series& s);

// Streaming wrapper around the same window pipeline: buffers the last T
// measurement vectors and emits estimates once full.
class DenoiserState {
public:
    explicit DenoiserState(const CbdaeModel& model);

    std::optional<std::vector<double>> step(std::span<const double> y_tilde);
    void reset();
    std::size_t buffered() const { return filled_; }

private:
    const CbdaeModel* model_;
    std::vector<double> ring_;  // [T][N]
    std::size_t head_ = 0;
    std::size_t filled_ = 0;
};

}  // namespace cbdae
