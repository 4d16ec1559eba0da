#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "cbdae/tensor.hpp"

namespace testhelp {

inline double rel_err(double a, double b, double floor = 1e-6) {
    const double denom = std::max({std::fabs(a), std::fabs(b), floor});
    return std::fabs(a - b) / denom;
}

// Central finite differences of a re-evaluated forward pass with respect to
// every element of `leaf`. The callable must rebuild the graph from current
// leaf values.
inline std::vector<double> finite_diff(cbdae::Tensor leaf,
                                       const std::function<double()>& forward,
                                       double step = 1e-5) {
    auto vals = leaf.mutable_values();
    std::vector<double> grad(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double orig = vals[i];
        vals[i] = orig + step;
        const double fp = forward();
        vals[i] = orig - step;
        const double fm = forward();
        vals[i] = orig;
        grad[i] = (fp - fm) / (2.0 * step);
    }
    return grad;
}

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng,
                                         double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

}  // namespace testhelp
