#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "cbdae/common.hpp"

namespace cbdae {

using Shape = std::vector<std::size_t>;

class Tensor;

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // allocated on first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backprop;  // pulls this node's grad into parents

    std::size_t size() const { return values.size(); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

bool grad_enabled();
Tensor wrap_node(std::shared_ptr<TensorNode> n);

}  // namespace detail

// RAII switch: while alive, ops compute values only and record no graph.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Handle to a node of the dynamically built computation graph. Copies share
// the underlying node; the graph is rebuilt on every forward pass.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, double fill, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::vector<double> values,
                              bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor uniform(Shape shape, double lo, double hi,
                          std::mt19937_64& rng, bool requires_grad = true);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t rows() const;  // 2-D only
    std::size_t cols() const;  // 2-D only
    bool is_scalar() const { return size() == 1; }

    double value() const;  // scalar tensors only
    double at(std::size_t i) const;
    double at(std::size_t i, std::size_t j) const;
    std::span<const double> values() const;
    std::span<double> mutable_values();  // in-place updates (optimizer)

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    std::span<const double> grad() const;  // zeros if never touched
    double grad_at(std::size_t i) const;
    void zero_grad();

    // Deep copy of values only (fresh leaf, no graph history).
    Tensor detached_copy() const;

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node)
        : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;

    friend Tensor detail::wrap_node(std::shared_ptr<detail::TensorNode> n);
};

// --- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

Tensor scale(const Tensor& x, double c);
Tensor shift(const Tensor& x, double c);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor l2norm(const Tensor& x);

// Adds a length-r bias vector to every column of an r x c matrix.
Tensor add_bias(const Tensor& m, const Tensor& bias);
// Extracts column j of a 2-D tensor as a vector.
Tensor column(const Tensor& m, std::size_t j);
// Packs scalar tensors into one vector.
Tensor stack_scalars(std::span<const Tensor> xs);
// Joins equal-height vectors/matrices side by side.
Tensor concat_columns(std::span<const Tensor> xs);

// Reverse-mode sweep from a scalar loss. Accumulates into every
// requires-grad tensor reachable from it; repeated calls accumulate.
void backward(const Tensor& loss);

// Drops parent links and closures so deep graphs free iteratively.
void release_graph(const Tensor& root);

}  // namespace cbdae
