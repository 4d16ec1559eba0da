#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cbdae/gru.hpp"
#include "support/test_helpers.hpp"

using namespace cbdae;
using testhelp::finite_diff;
using testhelp::rel_err;

namespace {

// Independent scalar-loop oracle for one GRU update; no tensor machinery.
std::vector<double> cell_oracle(const GruLayerParams& layer,
                                std::span<const double> input,
                                std::span<const double> h_prev) {
    const std::size_t q = layer.hidden_size();
    const std::size_t p = layer.input_size();
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    auto w = [&](const Tensor& m, std::size_t i, std::size_t j) {
        return m.at(i, j);
    };
    std::vector<double> out(q);
    for (std::size_t i = 0; i < q; ++i) {
        double az = layer.b_z.at(i), ar = layer.b_r.at(i);
        for (std::size_t j = 0; j < p; ++j) {
            az += w(layer.w_z, i, j) * input[j];
            ar += w(layer.w_r, i, j) * input[j];
        }
        for (std::size_t j = 0; j < q; ++j) {
            az += w(layer.u_z, i, j) * h_prev[j];
            ar += w(layer.u_r, i, j) * h_prev[j];
        }
        const double z = sig(az);
        const double r = sig(ar);
        double an = 0.0, rec = layer.b_n.at(i);
        for (std::size_t j = 0; j < p; ++j) an += w(layer.w_n, i, j) * input[j];
        for (std::size_t j = 0; j < q; ++j) rec += w(layer.u_n, i, j) * h_prev[j];
        const double n = std::tanh(an + r * rec);
        out[i] = (1.0 - z) * n + z * h_prev[i];
    }
    return out;
}

GruLayerParams random_layer(std::size_t p, std::size_t q, std::uint64_t seed) {
    auto rng = std::mt19937_64(seed);
    return GruLayerParams::init(p, q, rng);
}

}  // namespace

TEST_CASE("zero weights force h_new = 0.5 h_prev") {
    auto layer = GruLayerParams::zeros(2, 3);
    Tensor input = Tensor::from_values({2}, {0.7, -0.4});
    Tensor h = Tensor::from_values({3}, {0.2, -0.6, 1.0});
    Tensor out = gru_cell_step(layer, input, h);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(out.at(i) == doctest::Approx(0.5 * h.at(i)).epsilon(1e-16));
}

TEST_CASE("zero state and zero weights stay at the fixed point") {
    auto layer = GruLayerParams::zeros(2, 3);
    Tensor input = Tensor::from_values({2}, {5.0, -3.0});
    Tensor h = Tensor::zeros({3});
    Tensor out = gru_cell_step(layer, input, h);
    for (std::size_t i = 0; i < 3; ++i) CHECK(out.at(i) == 0.0);
}

TEST_CASE("random cell matches the scalar-loop oracle") {
    auto layer = random_layer(4, 3, 99);
    std::mt19937_64 rng(100);
    for (int trial = 0; trial < 10; ++trial) {
        auto iv = testhelp::random_values(4, rng);
        auto hv = testhelp::random_values(3, rng, -0.9, 0.9);
        Tensor out = gru_cell_step(layer, Tensor::from_values({4}, iv),
                                   Tensor::from_values({3}, hv));
        auto expect = cell_oracle(layer, iv, hv);
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(std::fabs(out.at(i) - expect[i]) < 1e-12);
    }
}

TEST_CASE("cell shape mismatch raises a dimension error") {
    auto layer = GruLayerParams::zeros(2, 3);
    CHECK_THROWS_AS((void)gru_cell_step(layer, Tensor::zeros({5}),
                                        Tensor::zeros({3})),
                    DimensionError);
}

TEST_CASE("encode with T=1 is one cell step per layer") {
    GruStack stack;
    stack.layers.push_back(random_layer(2, 3, 7));
    stack.layers.push_back(random_layer(3, 3, 8));
    Tensor window = Tensor::from_values({2, 1}, {0.3, -0.8});
    auto res = encode(stack, window);
    REQUIRE(res.top_sequence.size() == 1);

    Tensor h1 = gru_cell_step(stack.layers[0], Tensor::from_values({2}, {0.3, -0.8}),
                              Tensor::zeros({3}));
    Tensor h2 = gru_cell_step(stack.layers[1], h1, Tensor::zeros({3}));
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(res.final_states[0].at(i) == h1.at(i));
        CHECK(res.final_states[1].at(i) == h2.at(i));
    }
}

TEST_CASE("zero weights and zero initial state ignore any input") {
    GruStack stack;
    stack.layers.push_back(GruLayerParams::zeros(2, 3));
    stack.layers.push_back(GruLayerParams::zeros(3, 2));
    std::mt19937_64 rng(3);
    Tensor window =
        Tensor::from_values({2, 5}, testhelp::random_values(10, rng, -40, 40));
    auto res = encode(stack, window);
    for (const Tensor& h : res.final_states)
        for (double v : h.values()) CHECK(v == 0.0);
}

TEST_CASE("stacked encode matches the unrolled oracle exactly") {
    GruStack stack;
    stack.layers.push_back(random_layer(2, 3, 41));
    stack.layers.push_back(random_layer(3, 3, 42));
    std::mt19937_64 rng(43);
    const std::size_t T = 5;
    auto wvals = testhelp::random_values(2 * T, rng);
    Tensor window = Tensor::from_values({2, T}, wvals);

    auto res = encode(stack, window);

    // manual unroll with gru_cell_step
    Tensor h0 = Tensor::zeros({3}), h1 = Tensor::zeros({3});
    std::vector<Tensor> top;
    for (std::size_t j = 0; j < T; ++j) {
        std::vector<double> col = {wvals[j], wvals[T + j]};
        h0 = gru_cell_step(stack.layers[0], Tensor::from_values({2}, col), h0);
        h1 = gru_cell_step(stack.layers[1], h0, h1);
        top.push_back(h1);
    }
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(res.final_states[0].at(i) == h0.at(i));
        CHECK(res.final_states[1].at(i) == h1.at(i));
    }
    for (std::size_t j = 0; j < T; ++j)
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(res.top_sequence[j].at(i) == top[j].at(i));
}

TEST_CASE("encode rejects an empty window") {
    GruStack stack;
    stack.layers.push_back(GruLayerParams::zeros(2, 3));
    CHECK_THROWS_AS((void)encode_steps(stack, {}), ContractError);
}

TEST_CASE("hidden states stay inside the convex-hull bound") {
    auto layer = random_layer(3, 4, 55);
    std::mt19937_64 rng(56);
    for (int trial = 0; trial < 50; ++trial) {
        auto iv = testhelp::random_values(3, rng, -10, 10);
        auto hv = testhelp::random_values(4, rng, -1.5, 1.5);
        Tensor out = gru_cell_step(layer, Tensor::from_values({3}, iv),
                                   Tensor::from_values({4}, hv));
        for (std::size_t i = 0; i < 4; ++i) {
            const double bound = std::max(std::fabs(hv[i]), 1.0);
            CHECK(std::fabs(out.at(i)) <= bound + 1e-12);
        }
    }
}

TEST_CASE("batched encode equals per-window encode for every member") {
    GruStack stack;
    stack.layers.push_back(random_layer(2, 3, 61));
    stack.layers.push_back(random_layer(3, 3, 62));
    std::mt19937_64 rng(63);
    const std::size_t T = 4, B = 3;

    std::vector<std::vector<double>> windows;
    for (std::size_t b = 0; b < B; ++b)
        windows.push_back(testhelp::random_values(2 * T, rng));

    // batched: step j holds column j of every window
    std::vector<Tensor> steps;
    for (std::size_t j = 0; j < T; ++j) {
        std::vector<double> v(2 * B);
        for (std::size_t b = 0; b < B; ++b) {
            v[0 * B + b] = windows[b][j];
            v[1 * B + b] = windows[b][T + j];
        }
        steps.push_back(Tensor::from_values({2, B}, v));
    }
    auto batched = encode_steps(stack, steps);

    for (std::size_t b = 0; b < B; ++b) {
        Tensor win = Tensor::from_values({2, T}, windows[b]);
        auto single = encode(stack, win);
        for (std::size_t l = 0; l < 2; ++l)
            for (std::size_t i = 0; i < 3; ++i)
                CHECK(single.final_states[l].at(i) ==
                      batched.final_states[l].at(i, b));
    }
}

TEST_CASE("permuting batch members leaves each encoding unchanged") {
    GruStack stack;
    stack.layers.push_back(random_layer(2, 3, 71));
    std::mt19937_64 rng(72);
    const std::size_t T = 3, B = 4;
    std::vector<double> step_data[T];
    for (std::size_t j = 0; j < T; ++j)
        step_data[j] = testhelp::random_values(2 * B, rng);

    auto run = [&](const std::vector<std::size_t>& perm) {
        std::vector<Tensor> steps;
        for (std::size_t j = 0; j < T; ++j) {
            std::vector<double> v(2 * B);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < 2; ++c)
                    v[c * B + b] = step_data[j][c * B + perm[b]];
            steps.push_back(Tensor::from_values({2, B}, v));
        }
        return encode_steps(stack, steps);
    };
    auto forward_order = run({0, 1, 2, 3});
    auto permuted = run({2, 0, 3, 1});
    const std::size_t inverse[] = {1, 3, 0, 2};  // where each member went
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(forward_order.final_states[0].at(i, b) ==
                  permuted.final_states[0].at(i, inverse[b]));
}

TEST_CASE("BPTT gradients through a T=4 unroll match finite differences") {
    GruStack stack;
    stack.layers.push_back(random_layer(2, 3, 81));
    std::mt19937_64 rng(82);
    Tensor window = Tensor::from_values({2, 4}, testhelp::random_values(8, rng));

    auto forward = [&]() {
        auto res = encode(stack, window);
        return dot(res.final_states[0], res.final_states[0]).value();
    };
    auto& layer = stack.layers[0];
    std::vector<Tensor*> params;
    layer.collect(params);
    for (Tensor* t : params) t->zero_grad();
    auto res = encode(stack, window);
    backward(dot(res.final_states[0], res.final_states[0]));
    for (Tensor* t : params) {
        auto fd = finite_diff(*t, forward);
        for (std::size_t i = 0; i < fd.size(); ++i)
            CHECK(rel_err(t->grad_at(i), fd[i], 1e-5) < 1e-3);
    }
}
