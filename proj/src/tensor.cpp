#include "cbdae/tensor.hpp"

#include <array>
#include <cmath>
#include <unordered_set>
#include <utility>

namespace cbdae {

namespace detail {

namespace {
thread_local int g_no_grad_depth = 0;
}

bool grad_enabled() { return g_no_grad_depth == 0; }

}  // namespace detail

NoGradGuard::NoGradGuard() { ++detail::g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --detail::g_no_grad_depth; }

namespace {

std::size_t shape_product(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

const detail::TensorNode& deref(const Tensor& t, const char* op) {
    if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
    return *t.node();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " +
                             shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

namespace detail {
Tensor wrap_node(std::shared_ptr<TensorNode> n) {
    return Tensor(std::move(n));
}
}  // namespace detail

// --- Tensor basics ----------------------------------------------------------

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
    node_ = std::make_shared<detail::TensorNode>();
    node_->shape = std::move(shape);
    node_->values.assign(shape_product(node_->shape), fill);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return Tensor(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
    if (values.size() != shape_product(shape))
        throw DimensionError("from_values: " + std::to_string(values.size()) +
                             " values for shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_values({1}, {v}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, std::mt19937_64& rng,
                       bool requires_grad) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_product(shape));
    for (double& x : v) x = dist(rng);
    return from_values(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const { return deref(*this, "shape").shape; }
std::size_t Tensor::size() const { return deref(*this, "size").values.size(); }

std::size_t Tensor::rows() const {
    const auto& s = shape();
    if (s.size() != 2) throw DimensionError("rows: tensor is not 2-D");
    return s[0];
}

std::size_t Tensor::cols() const {
    const auto& s = shape();
    if (s.size() != 2) throw DimensionError("cols: tensor is not 2-D");
    return s[1];
}

double Tensor::value() const {
    const auto& n = deref(*this, "value");
    if (n.values.size() != 1)
        throw ContractError("value: tensor is not scalar");
    return n.values[0];
}

double Tensor::at(std::size_t i) const {
    const auto& n = deref(*this, "at");
    if (i >= n.values.size()) throw RangeError("at: index out of range");
    return n.values[i];
}

double Tensor::at(std::size_t i, std::size_t j) const {
    const auto& n = deref(*this, "at");
    if (n.shape.size() != 2) throw DimensionError("at(i,j): tensor is not 2-D");
    if (i >= n.shape[0] || j >= n.shape[1])
        throw RangeError("at(i,j): index out of range");
    return n.values[i * n.shape[1] + j];
}

std::span<const double> Tensor::values() const {
    return deref(*this, "values").values;
}

std::span<double> Tensor::mutable_values() {
    return deref(*this, "mutable_values").values.empty()
               ? std::span<double>{}
               : std::span<double>(node_->values);
}

bool Tensor::requires_grad() const {
    return deref(*this, "requires_grad").requires_grad;
}

void Tensor::set_requires_grad(bool flag) {
    deref(*this, "set_requires_grad");
    node_->requires_grad = flag;
}

std::span<const double> Tensor::grad() const {
    auto& n = const_cast<detail::TensorNode&>(deref(*this, "grad"));
    n.ensure_grad();
    return n.grad;
}

double Tensor::grad_at(std::size_t i) const {
    auto g = grad();
    if (i >= g.size()) throw RangeError("grad_at: index out of range");
    return g[i];
}

void Tensor::zero_grad() {
    deref(*this, "zero_grad");
    node_->grad.assign(node_->values.size(), 0.0);
}

Tensor Tensor::detached_copy() const {
    const auto& n = deref(*this, "detached_copy");
    return from_values(n.shape, n.values, n.requires_grad);
}

// --- op helpers --------------------------------------------------------------

namespace {

// Shared scaffolding: allocate output, decide tracking, register parents.
std::shared_ptr<detail::TensorNode> new_node(Shape shape, const char* op,
                                             std::span<const Tensor> inputs,
                                             bool& track) {
    auto out = std::make_shared<detail::TensorNode>();
    out->shape = std::move(shape);
    out->values.assign(shape_product(out->shape), 0.0);
    out->op = op;
    track = false;
    if (detail::grad_enabled()) {
        for (const Tensor& t : inputs)
            if (t.node()->requires_grad) track = true;
    }
    if (track) {
        out->requires_grad = true;
        for (const Tensor& t : inputs) out->parents.push_back(t.node());
    }
    return out;
}

using NodePtr = std::shared_ptr<detail::TensorNode>;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& an = deref(a, "matmul");
    const auto& bn = deref(b, "matmul");
    if (an.shape.size() != 2)
        throw DimensionError("matmul: left operand must be 2-D");
    const std::size_t m = an.shape[0], k = an.shape[1];
    if (bn.shape.empty() || bn.shape.size() > 2)
        throw DimensionError("matmul: right operand must be 1-D or 2-D");
    const bool vec = bn.shape.size() == 1;
    const std::size_t bk = bn.shape[0];
    const std::size_t n = vec ? 1 : bn.shape[1];
    if (k != bk)
        throw DimensionError("matmul: inner dimensions disagree, " +
                             shape_str(an.shape) + " vs " + shape_str(bn.shape));

    bool track;
    std::array<Tensor, 2> ins{a, b};
    auto out = new_node(vec ? Shape{m} : Shape{m, n}, "matmul", ins, track);

    const double* A = an.values.data();
    const double* B = bn.values.data();
    double* C = out->values.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = C + i * n;
        const double* arow = A + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = B + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }

    if (track) {
        auto ap = a.node(), bp = b.node();
        auto op = out.get();
        out->backprop = [ap, bp, op, m, k, n]() {
            const double* dC = op->grad.data();
            if (ap->requires_grad) {
                ap->ensure_grad();
                double* dA = ap->grad.data();
                const double* B = bp->values.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double* brow = B + kk * n;
                        const double* drow = dC + i * n;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += drow[j] * brow[j];
                        dA[i * k + kk] += acc;
                    }
            }
            if (bp->requires_grad) {
                bp->ensure_grad();
                double* dB = bp->grad.data();
                const double* A = ap->values.data();
                for (std::size_t i = 0; i < m; ++i) {
                    const double* drow = dC + i * n;
                    const double* arow = A + i * k;
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double av = arow[kk];
                        double* brow = dB + kk * n;
                        for (std::size_t j = 0; j < n; ++j) brow[j] += av * drow[j];
                    }
                }
            }
        };
    }
    return detail::wrap_node(out);
}

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                          Fwd fwd, Bwd bwd) {
    deref(a, name);
    deref(b, name);
    require_same_shape(a, b, name);
    bool track;
    std::array<Tensor, 2> ins{a, b};
    auto out = new_node(a.shape(), name, ins, track);
    const auto& av = a.node()->values;
    const auto& bv = b.node()->values;
    for (std::size_t i = 0; i < av.size(); ++i)
        out->values[i] = fwd(av[i], bv[i]);
    if (track) {
        auto ap = a.node(), bp = b.node();
        auto op = out.get();
        out->backprop = [ap, bp, op, bwd]() {
            const bool ga = ap->requires_grad, gb = bp->requires_grad;
            if (ga) ap->ensure_grad();
            if (gb) bp->ensure_grad();
            for (std::size_t i = 0; i < op->grad.size(); ++i) {
                auto [da, db] = bwd(ap->values[i], bp->values[i], op->values[i]);
                if (ga) ap->grad[i] += da * op->grad[i];
                if (gb) bp->grad[i] += db * op->grad[i];
            }
        };
    }
    return detail::wrap_node(out);
}

template <typename Fwd, typename Bwd>
Tensor unary_elementwise(const Tensor& x, const char* name, Fwd fwd, Bwd bwd) {
    deref(x, name);
    bool track;
    std::array<Tensor, 1> ins{x};
    auto out = new_node(x.shape(), name, ins, track);
    const auto& xv = x.node()->values;
    for (std::size_t i = 0; i < xv.size(); ++i) out->values[i] = fwd(xv[i]);
    if (track) {
        auto xp = x.node();
        auto op = out.get();
        out->backprop = [xp, op, bwd]() {
            xp->ensure_grad();
            for (std::size_t i = 0; i < op->grad.size(); ++i)
                xp->grad[i] += bwd(xp->values[i], op->values[i]) * op->grad[i];
        };
    }
    return detail::wrap_node(out);
}

struct Pair {
    double first, second;
};

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double, double) { return Pair{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double, double) { return Pair{1.0, -1.0}; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "hadamard", [](double x, double y) { return x * y; },
        [](double x, double y, double) { return Pair{y, x}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "div", [](double x, double y) { return x / y; },
        [](double x, double y, double) {
            return Pair{1.0 / y, -x / (y * y)};
        });
}

Tensor sigmoid(const Tensor& x) {
    return unary_elementwise(
        x, "sigmoid",
        [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
    return unary_elementwise(
        x, "tanh", [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
    // relu'(0) := 0 (subgradient convention)
    return unary_elementwise(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& x) {
    // abs'(0) := 0 (subgradient convention)
    return unary_elementwise(
        x, "abs", [](double v) { return std::fabs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor exp(const Tensor& x) {
    return unary_elementwise(
        x, "exp", [](double v) { return std::exp(v); },
        [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    return unary_elementwise(
        x, "log", [](double v) { return std::log(v); },
        [](double v, double) { return 1.0 / v; });
}

Tensor scale(const Tensor& x, double c) {
    return unary_elementwise(
        x, "scale", [c](double v) { return c * v; },
        [c](double, double) { return c; });
}

Tensor shift(const Tensor& x, double c) {
    return unary_elementwise(
        x, "shift", [c](double v) { return v + c; },
        [](double, double) { return 1.0; });
}

// --- reductions ---------------------------------------------------------------

Tensor sum(const Tensor& x) {
    const auto& xn = deref(x, "sum");
    if (xn.values.empty()) throw ContractError("sum: empty tensor");
    bool track;
    std::array<Tensor, 1> ins{x};
    auto out = new_node({1}, "sum", ins, track);
    double acc = 0.0;
    for (double v : xn.values) acc += v;
    out->values[0] = acc;
    if (track) {
        auto xp = x.node();
        auto op = out.get();
        out->backprop = [xp, op]() {
            xp->ensure_grad();
            const double d = op->grad[0];
            for (double& g : xp->grad) g += d;
        };
    }
    return detail::wrap_node(out);
}

Tensor mean(const Tensor& x) {
    const auto& xn = deref(x, "mean");
    if (xn.values.empty()) throw ContractError("mean: empty tensor");
    bool track;
    std::array<Tensor, 1> ins{x};
    auto out = new_node({1}, "mean", ins, track);
    double acc = 0.0;
    for (double v : xn.values) acc += v;
    const double inv_n = 1.0 / static_cast<double>(xn.values.size());
    out->values[0] = acc * inv_n;
    if (track) {
        auto xp = x.node();
        auto op = out.get();
        out->backprop = [xp, op, inv_n]() {
            xp->ensure_grad();
            const double d = op->grad[0] * inv_n;
            for (double& g : xp->grad) g += d;
        };
    }
    return detail::wrap_node(out);
}

Tensor dot(const Tensor& a, const Tensor& b) {
    const auto& an = deref(a, "dot");
    const auto& bn = deref(b, "dot");
    if (an.values.size() != bn.values.size())
        throw DimensionError("dot: length mismatch " +
                             std::to_string(an.values.size()) + " vs " +
                             std::to_string(bn.values.size()));
    if (an.values.empty()) throw ContractError("dot: empty operands");
    bool track;
    std::array<Tensor, 2> ins{a, b};
    auto out = new_node({1}, "dot", ins, track);
    double acc = 0.0;
    for (std::size_t i = 0; i < an.values.size(); ++i)
        acc += an.values[i] * bn.values[i];
    out->values[0] = acc;
    if (track) {
        auto ap = a.node(), bp = b.node();
        auto op = out.get();
        out->backprop = [ap, bp, op]() {
            const double d = op->grad[0];
            if (ap->requires_grad) {
                ap->ensure_grad();
                for (std::size_t i = 0; i < ap->grad.size(); ++i)
                    ap->grad[i] += d * bp->values[i];
            }
            if (bp->requires_grad) {
                bp->ensure_grad();
                for (std::size_t i = 0; i < bp->grad.size(); ++i)
                    bp->grad[i] += d * ap->values[i];
            }
        };
    }
    return detail::wrap_node(out);
}

Tensor l2norm(const Tensor& x) {
    const auto& xn = deref(x, "l2norm");
    if (xn.values.empty()) throw ContractError("l2norm: empty tensor");
    bool track;
    std::array<Tensor, 1> ins{x};
    auto out = new_node({1}, "l2norm", ins, track);
    double acc = 0.0;
    for (double v : xn.values) acc += v * v;
    out->values[0] = std::sqrt(acc);
    if (track) {
        auto xp = x.node();
        auto op = out.get();
        // gradient at the zero vector defined as zero (subgradient choice)
        out->backprop = [xp, op]() {
            const double norm = op->values[0];
            if (norm == 0.0) return;
            xp->ensure_grad();
            const double d = op->grad[0] / norm;
            for (std::size_t i = 0; i < xp->grad.size(); ++i)
                xp->grad[i] += d * xp->values[i];
        };
    }
    return detail::wrap_node(out);
}

// --- structural ops ------------------------------------------------------------

Tensor add_bias(const Tensor& m, const Tensor& bias) {
    const auto& mn = deref(m, "add_bias");
    const auto& bn = deref(bias, "add_bias");
    if (mn.shape.size() != 2 || bn.shape.size() != 1 || bn.shape[0] != mn.shape[0])
        throw DimensionError("add_bias: need [r x c] matrix and [r] vector, got " +
                             shape_str(mn.shape) + " and " + shape_str(bn.shape));
    const std::size_t r = mn.shape[0], c = mn.shape[1];
    bool track;
    std::array<Tensor, 2> ins{m, bias};
    auto out = new_node({r, c}, "add_bias", ins, track);
    for (std::size_t i = 0; i < r; ++i) {
        const double bv = bn.values[i];
        for (std::size_t j = 0; j < c; ++j)
            out->values[i * c + j] = mn.values[i * c + j] + bv;
    }
    if (track) {
        auto mp = m.node(), bp = bias.node();
        auto op = out.get();
        out->backprop = [mp, bp, op, r, c]() {
            if (mp->requires_grad) {
                mp->ensure_grad();
                for (std::size_t i = 0; i < r * c; ++i) mp->grad[i] += op->grad[i];
            }
            if (bp->requires_grad) {
                bp->ensure_grad();
                for (std::size_t i = 0; i < r; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c; ++j) acc += op->grad[i * c + j];
                    bp->grad[i] += acc;
                }
            }
        };
    }
    return detail::wrap_node(out);
}

Tensor column(const Tensor& m, std::size_t j) {
    const auto& mn = deref(m, "column");
    if (mn.shape.size() != 2) throw DimensionError("column: tensor is not 2-D");
    const std::size_t r = mn.shape[0], c = mn.shape[1];
    if (j >= c) throw RangeError("column: index out of range");
    bool track;
    std::array<Tensor, 1> ins{m};
    auto out = new_node({r}, "column", ins, track);
    for (std::size_t i = 0; i < r; ++i) out->values[i] = mn.values[i * c + j];
    if (track) {
        auto mp = m.node();
        auto op = out.get();
        out->backprop = [mp, op, r, c, j]() {
            mp->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                mp->grad[i * c + j] += op->grad[i];
        };
    }
    return detail::wrap_node(out);
}

Tensor stack_scalars(std::span<const Tensor> xs) {
    if (xs.empty()) throw ContractError("stack_scalars: empty input");
    for (const Tensor& t : xs)
        if (deref(t, "stack_scalars").values.size() != 1)
            throw DimensionError("stack_scalars: all inputs must be scalar");
    bool track;
    auto out = new_node({xs.size()}, "stack_scalars", xs, track);
    for (std::size_t i = 0; i < xs.size(); ++i)
        out->values[i] = xs[i].node()->values[0];
    if (track) {
        std::vector<NodePtr> parents;
        parents.reserve(xs.size());
        for (const Tensor& t : xs) parents.push_back(t.node());
        auto op = out.get();
        out->backprop = [parents, op]() {
            for (std::size_t i = 0; i < parents.size(); ++i) {
                if (!parents[i]->requires_grad) continue;
                parents[i]->ensure_grad();
                parents[i]->grad[0] += op->grad[i];
            }
        };
    }
    return detail::wrap_node(out);
}

Tensor concat_columns(std::span<const Tensor> xs) {
    if (xs.empty()) throw ContractError("concat_columns: empty input");
    std::size_t r = 0, total = 0;
    std::vector<std::size_t> widths(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto& n = deref(xs[i], "concat_columns");
        const std::size_t ri = n.shape.size() == 1 ? n.shape[0] : n.shape[0];
        const std::size_t ci = n.shape.size() == 1 ? 1 : n.shape[1];
        if (n.shape.size() > 2)
            throw DimensionError("concat_columns: inputs must be 1-D or 2-D");
        if (i == 0)
            r = ri;
        else if (ri != r)
            throw DimensionError("concat_columns: row counts differ");
        widths[i] = ci;
        total += ci;
    }
    bool track;
    auto out = new_node({r, total}, "concat_columns", xs, track);
    std::size_t col0 = 0;
    for (std::size_t b = 0; b < xs.size(); ++b) {
        const auto& v = xs[b].node()->values;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < widths[b]; ++j)
                out->values[i * total + col0 + j] = v[i * widths[b] + j];
        col0 += widths[b];
    }
    if (track) {
        std::vector<NodePtr> parents;
        parents.reserve(xs.size());
        for (const Tensor& t : xs) parents.push_back(t.node());
        auto op = out.get();
        out->backprop = [parents, op, widths, r, total]() {
            std::size_t col0 = 0;
            for (std::size_t b = 0; b < parents.size(); ++b) {
                if (parents[b]->requires_grad) {
                    parents[b]->ensure_grad();
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < widths[b]; ++j)
                            parents[b]->grad[i * widths[b] + j] +=
                                op->grad[i * total + col0 + j];
                }
                col0 += widths[b];
            }
        };
    }
    return detail::wrap_node(out);
}

// --- backward -------------------------------------------------------------------

namespace {

// Reverse post-order from the root; each node appears after everything it
// feeds, so one sweep accumulates every contribution before moving on.
std::vector<detail::TensorNode*> topo_order(detail::TensorNode* root) {
    std::vector<detail::TensorNode*> order;
    std::unordered_set<detail::TensorNode*> visited;
    std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
    visited.insert(root);
    stack.emplace_back(root, 0);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::TensorNode* child = node->parents[next].get();
            ++next;
            if (child && visited.insert(child).second)
                stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace

void backward(const Tensor& loss) {
    const auto& root = deref(loss, "backward");
    if (root.values.size() != 1)
        throw ContractError("backward: root must be scalar, got shape " +
                            shape_str(root.shape));
    auto* r = loss.node().get();
    auto order = topo_order(r);
    // interior grads are per-sweep scratch; only leaves accumulate across
    // repeated calls
    for (auto* n : order)
        if (n->backprop) n->grad.assign(n->values.size(), 0.0);
    r->ensure_grad();
    r->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop();
}

void release_graph(const Tensor& root) {
    if (!root.defined()) return;
    auto order = topo_order(root.node().get());
    for (auto* n : order) {
        n->backprop = nullptr;
        n->parents.clear();
    }
}

}  // namespace cbdae
