#include "cbdae/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace cbdae {

TrainBatch build_batch(std::size_t num_windows, std::size_t anchor,
                       std::size_t seq_count, std::size_t rand_count,
                       std::mt19937_64& rng) {
    if (seq_count < 3)
        throw ContractError("build_batch: s must be at least 3");
    if (anchor >= num_windows)
        throw RangeError("build_batch: anchor beyond dataset");
    if (anchor + 1 < seq_count)
        throw RangeError("build_batch: not enough history before anchor");
    if (rand_count > num_windows)
        throw RangeError("build_batch: r exceeds dataset size");

    TrainBatch batch;
    batch.seq_count = seq_count;
    batch.rand_count = rand_count;
    batch.indices.reserve(seq_count + rand_count);
    for (std::size_t i = 0; i < seq_count; ++i)
        batch.indices.push_back(anchor + 1 - seq_count + i);

    // sparse Fisher-Yates: uniform draw without replacement in O(r)
    std::unordered_map<std::size_t, std::size_t> moved;
    for (std::size_t i = 0; i < rand_count; ++i) {
        std::uniform_int_distribution<std::size_t> dist(i, num_windows - 1);
        const std::size_t j = dist(rng);
        auto it_j = moved.find(j);
        const std::size_t value = it_j == moved.end() ? j : it_j->second;
        auto it_i = moved.find(i);
        const std::size_t displaced = it_i == moved.end() ? i : it_i->second;
        moved[j] = displaced;
        batch.indices.push_back(value);
    }
    return batch;
}

Tensor cosine_sim(const Tensor& a, const Tensor& b) {
    Tensor na = l2norm(a);
    Tensor nb = l2norm(b);
    if (na.value() < 1e-12 || nb.value() < 1e-12) return Tensor::scalar(0.0);
    return div(dot(a, b), hadamard(na, nb));
}

Tensor nce_term(const Tensor& z, std::size_t i, std::size_t j,
                std::optional<std::size_t> excl) {
    if (!z.defined() || z.shape().size() != 2)
        throw DimensionError("nce_term: Z must be a G x B matrix");
    const std::size_t b = z.cols();
    if (i >= b || j >= b) throw RangeError("nce_term: column out of range");
    if (i == j) throw ContractError("nce_term: i and j must differ");

    Tensor anchor = column(z, i);
    Tensor positive_sim;
    std::vector<Tensor> negatives;
    negatives.reserve(b - 1);
    for (std::size_t k = 0; k < b; ++k) {
        if (k == i || (excl && k == *excl)) continue;
        Tensor s = cosine_sim(anchor, column(z, k));
        if (k == j) positive_sim = s;
        negatives.push_back(s);
    }
    if (!positive_sim.defined())
        throw ContractError("nce_term: excl must not remove the positive pair");

    // log-sum-exp with a detached max shift
    double max_sim = -std::numeric_limits<double>::infinity();
    for (const Tensor& s : negatives) max_sim = std::max(max_sim, s.value());
    std::vector<Tensor> shifted;
    shifted.reserve(negatives.size());
    for (const Tensor& s : negatives) shifted.push_back(exp(shift(s, -max_sim)));
    Tensor lse = shift(log(sum(stack_scalars(shifted))), max_sim);
    return sub(lse, positive_sim);
}

Tensor nce_loss(const Tensor& z, std::size_t seq_count) {
    if (!z.defined() || z.shape().size() != 2)
        throw DimensionError("nce_loss: Z must be a G x B matrix");
    if (seq_count < 3) throw ContractError("nce_loss: s must be at least 3");
    if (seq_count > z.cols())
        throw RangeError("nce_loss: s exceeds the batch width");

    std::vector<Tensor> terms;
    terms.reserve(2 * (seq_count - 1));
    for (std::size_t k = 0; k + 1 < seq_count; ++k) {
        std::optional<std::size_t> left_excl;
        if (k >= 1) left_excl = k - 1;
        terms.push_back(nce_term(z, k, k + 1, left_excl));

        std::optional<std::size_t> right_excl;
        if (k + 2 < seq_count) right_excl = k + 2;
        terms.push_back(nce_term(z, k + 1, k, right_excl));
    }
    const double d = 2.0 * static_cast<double>(seq_count) - 1.0;
    return scale(sum(stack_scalars(terms)), 1.0 / d);
}

Tensor ae_loss(std::span<const Tensor> predictions,
               std::span<const Tensor> targets) {
    if (predictions.empty() || predictions.size() != targets.size())
        throw DimensionError("ae_loss: prediction/target batch mismatch");
    std::size_t total = 0;
    std::vector<Tensor> sums;
    sums.reserve(predictions.size());
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i].shape() != targets[i].shape())
            throw DimensionError("ae_loss: shape mismatch at element " +
                                 std::to_string(i));
        sums.push_back(sum(abs(sub(predictions[i], targets[i]))));
        total += predictions[i].size();
    }
    return scale(sum(stack_scalars(sums)), 1.0 / static_cast<double>(total));
}

Tensor total_loss(const Tensor& l_ae, const Tensor& l_nce, double beta) {
    if (beta < 0.0) throw ContractError("total_loss: beta must be nonnegative");
    if (beta == 0.0) return l_ae;
    return add(l_ae, scale(l_nce, beta));
}

}  // namespace cbdae
