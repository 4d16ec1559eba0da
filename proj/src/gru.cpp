#include "cbdae/gru.hpp"

#include <cmath>
#include <string>

namespace cbdae {

GruLayerParams GruLayerParams::init(std::size_t input, std::size_t hidden,
                                    std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    auto w = [&](std::size_t r, std::size_t c) {
        return Tensor::uniform({r, c}, -bound, bound, rng, true);
    };
    auto b = [&](std::size_t n) {
        return Tensor::uniform({n}, -bound, bound, rng, true);
    };
    GruLayerParams p;
    p.w_z = w(hidden, input);
    p.w_r = w(hidden, input);
    p.w_n = w(hidden, input);
    p.u_z = w(hidden, hidden);
    p.u_r = w(hidden, hidden);
    p.u_n = w(hidden, hidden);
    p.b_z = b(hidden);
    p.b_r = b(hidden);
    p.b_n = b(hidden);
    return p;
}

GruLayerParams GruLayerParams::zeros(std::size_t input, std::size_t hidden) {
    GruLayerParams p;
    p.w_z = Tensor::zeros({hidden, input}, true);
    p.w_r = Tensor::zeros({hidden, input}, true);
    p.w_n = Tensor::zeros({hidden, input}, true);
    p.u_z = Tensor::zeros({hidden, hidden}, true);
    p.u_r = Tensor::zeros({hidden, hidden}, true);
    p.u_n = Tensor::zeros({hidden, hidden}, true);
    p.b_z = Tensor::zeros({hidden}, true);
    p.b_r = Tensor::zeros({hidden}, true);
    p.b_n = Tensor::zeros({hidden}, true);
    return p;
}

void GruLayerParams::collect(std::vector<Tensor*>& out) {
    for (Tensor* t : {&w_z, &w_r, &w_n, &u_z, &u_r, &u_n, &b_z, &b_r, &b_n})
        out.push_back(t);
}

void GruLayerParams::validate() const {
    const std::size_t q = w_z.rows(), p = w_z.cols();
    auto check = [&](const Tensor& t, std::size_t r, std::size_t c,
                     const char* name) {
        if (t.shape() != Shape{r, c})
            throw DimensionError(std::string("gru layer: bad shape for ") + name);
    };
    check(w_r, q, p, "w_r");
    check(w_n, q, p, "w_n");
    check(u_z, q, q, "u_z");
    check(u_r, q, q, "u_r");
    check(u_n, q, q, "u_n");
    for (const Tensor* b : {&b_z, &b_r, &b_n})
        if (b->shape() != Shape{q})
            throw DimensionError("gru layer: bias shape mismatch");
}

std::vector<std::size_t> GruStack::hidden_sizes() const {
    std::vector<std::size_t> out;
    out.reserve(layers.size());
    for (const auto& l : layers) out.push_back(l.hidden_size());
    return out;
}

void GruStack::collect(std::vector<Tensor*>& out) {
    for (auto& l : layers) l.collect(out);
}

void GruStack::validate() const {
    if (layers.empty()) throw ContractError("gru stack: no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].validate();
        if (l > 0 && layers[l].input_size() != layers[l - 1].hidden_size())
            throw DimensionError("gru stack: layer " + std::to_string(l) +
                                 " input size does not chain");
    }
}

GruStack GruStack::init(std::size_t input, std::span<const std::size_t> hidden,
                        std::mt19937_64& rng) {
    if (hidden.empty()) throw ContractError("gru stack: need at least one layer");
    GruStack s;
    std::size_t in = input;
    for (std::size_t q : hidden) {
        s.layers.push_back(GruLayerParams::init(in, q, rng));
        in = q;
    }
    return s;
}

namespace {

// bias add that works for vector and batched-matrix activations alike
Tensor with_bias(const Tensor& pre, const Tensor& bias) {
    if (pre.shape().size() == 1) return add(pre, bias);
    return add_bias(pre, bias);
}

Tensor one_minus(const Tensor& x) { return shift(scale(x, -1.0), 1.0); }

}  // namespace

Tensor gru_cell_step(const GruLayerParams& layer, const Tensor& input,
                     const Tensor& h_prev) {
    const std::size_t p = layer.input_size(), q = layer.hidden_size();
    const auto& in_shape = input.shape();
    const auto& h_shape = h_prev.shape();
    if (in_shape.empty() || in_shape[0] != p || h_shape.empty() || h_shape[0] != q ||
        in_shape.size() != h_shape.size() ||
        (in_shape.size() == 2 && in_shape[1] != h_shape[1]))
        throw DimensionError("gru_cell_step: input/state shapes do not match layer");

    Tensor z = sigmoid(with_bias(add(matmul(layer.w_z, input),
                                     matmul(layer.u_z, h_prev)),
                                 layer.b_z));
    Tensor r = sigmoid(with_bias(add(matmul(layer.w_r, input),
                                     matmul(layer.u_r, h_prev)),
                                 layer.b_r));
    Tensor n = tanh(add(matmul(layer.w_n, input),
                        hadamard(r, with_bias(matmul(layer.u_n, h_prev),
                                              layer.b_n))));
    return add(hadamard(one_minus(z), n), hadamard(z, h_prev));
}

EncodeResult encode_steps(const GruStack& stack, std::span<const Tensor> inputs,
                          const std::vector<Tensor>* h0) {
    if (stack.layers.empty()) throw ContractError("encode: empty stack");
    if (inputs.empty()) throw ContractError("encode: empty window");
    const std::size_t batch =
        inputs[0].shape().size() == 2 ? inputs[0].cols() : 0;

    std::vector<Tensor> state;
    state.reserve(stack.depth());
    if (h0) {
        if (h0->size() != stack.depth())
            throw DimensionError("encode: h0 layer count mismatch");
        state = *h0;
    } else {
        for (const auto& layer : stack.layers) {
            const std::size_t q = layer.hidden_size();
            state.push_back(batch ? Tensor::zeros({q, batch})
                                  : Tensor::zeros({q}));
        }
    }

    EncodeResult res;
    res.top_sequence.reserve(inputs.size());
    for (const Tensor& step_input : inputs) {
        Tensor feed = step_input;
        for (std::size_t l = 0; l < stack.depth(); ++l) {
            state[l] = gru_cell_step(stack.layers[l], feed, state[l]);
            feed = state[l];
        }
        res.top_sequence.push_back(state.back());
    }
    res.final_states = std::move(state);
    return res;
}

EncodeResult encode(const GruStack& stack, const Tensor& window,
                    const std::vector<Tensor>* h0) {
    if (!window.defined() || window.shape().size() != 2 || window.cols() == 0)
        throw ContractError("encode: window must be a non-empty N x T matrix");
    std::vector<Tensor> steps;
    steps.reserve(window.cols());
    for (std::size_t j = 0; j < window.cols(); ++j)
        steps.push_back(column(window, j));
    return encode_steps(stack, steps, h0);
}

}  // namespace cbdae
