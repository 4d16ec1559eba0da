#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "cbdae/tensor.hpp"

namespace cbdae {

// Training batch indices: the first seq_count entries are consecutive
// windows ending at the anchor, the rest are random draws from the whole
// dataset (overlap with the sequential block is allowed).
struct TrainBatch {
    std::vector<std::size_t> indices;
    std::size_t seq_count = 0;
    std::size_t rand_count = 0;

    std::size_t size() const { return indices.size(); }
};

// B = B_s (+) B_r: s consecutive windows ending at `anchor`, then r windows
// sampled uniformly without replacement from [0, num_windows).
TrainBatch build_batch(std::size_t num_windows, std::size_t anchor,
                       std::size_t seq_count, std::size_t rand_count,
                       std::mt19937_64& rng);

// dot(a,b) / (|a||b|); 0 when either norm is below 1e-12.
Tensor cosine_sim(const Tensor& a, const Tensor& b);

// -log( exp(sim(Z_i, Z_j)) / sum_{k != i, k != excl} exp(sim(Z_i, Z_k)) )
// over the columns of Z; the positive pair stays in the denominator sum.
// Stable log-sum-exp form. Indices are 0-based columns.
Tensor nce_term(const Tensor& z, std::size_t i, std::size_t j,
                std::optional<std::size_t> excl);

// Pairs (k, k+1) and (k+1, k) over the sequential block, each with its
// temporal-neighbour exclusion, averaged with D = 2s - 1. An exclusion is
// honoured only when it names a sequential column (temporal neighbours all
// live in Z_s); out-of-range ones exclude nothing.
Tensor nce_loss(const Tensor& z, std::size_t seq_count);

// Mean absolute error over every element of the batch (Eq-18 style L1).
Tensor ae_loss(std::span<const Tensor> predictions,
               std::span<const Tensor> targets);

// L = L_AE + beta * L_NCE.
Tensor total_loss(const Tensor& l_ae, const Tensor& l_nce, double beta);

}  // namespace cbdae
