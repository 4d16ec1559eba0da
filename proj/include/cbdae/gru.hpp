#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "cbdae/tensor.hpp"

namespace cbdae {

// One GRU layer: gate weights on the layer input (w_*), on the recurrent
// state (u_*), and gate biases. Shapes [Q x P], [Q x Q], [Q].
struct GruLayerParams {
    Tensor w_z, w_r, w_n;
    Tensor u_z, u_r, u_n;
    Tensor b_z, b_r, b_n;

    std::size_t hidden_size() const { return w_z.rows(); }
    std::size_t input_size() const { return w_z.cols(); }

    // Uniform init in [-1/sqrt(Q), +1/sqrt(Q)], one rng stream per layer.
    static GruLayerParams init(std::size_t input, std::size_t hidden,
                               std::mt19937_64& rng);
    static GruLayerParams zeros(std::size_t input, std::size_t hidden);

    void collect(std::vector<Tensor*>& out);
    void validate() const;
};

struct GruStack {
    std::vector<GruLayerParams> layers;

    std::size_t depth() const { return layers.size(); }
    std::vector<std::size_t> hidden_sizes() const;
    void collect(std::vector<Tensor*>& out);
    void validate() const;

    static GruStack init(std::size_t input, std::span<const std::size_t> hidden,
                         std::mt19937_64& rng);
};

// One recurrent update:
//   z = sigma(W_z p + U_z h + b_z)
//   r = sigma(W_r p + U_r h + b_r)
//   n = tanh(W_n p + r o (U_n h + b_n))
//   h' = (1 - z) o n + z o h
// Accepts a [P] vector with [Q] state, or a [P x B] matrix with [Q x B]
// state for a whole batch at once.
Tensor gru_cell_step(const GruLayerParams& layer, const Tensor& input,
                     const Tensor& h_prev);

struct EncodeResult {
    std::vector<Tensor> final_states;  // h^l(T) per layer
    std::vector<Tensor> top_sequence;  // h^L(j), j = 1..T
};

// Runs the stack over a window [N x T], one column per step; layer 1 sees
// the column, layer l > 1 the current state of layer l-1. h0 defaults to
// zero states.
EncodeResult encode(const GruStack& stack, const Tensor& window,
                    const std::vector<Tensor>* h0 = nullptr);

// Same recursion driven by pre-built step inputs ([N] or [N x B] each),
// used by the trainer to push a whole batch through in one pass.
EncodeResult encode_steps(const GruStack& stack, std::span<const Tensor> inputs,
                          const std::vector<Tensor>* h0 = nullptr);

}  // namespace cbdae
