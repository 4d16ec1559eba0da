#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cbdae/common.hpp"

namespace cbdae {

// Dense row-major matrix for the small fixed-size systems the filters and
// PCA work with.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const {
        return data[i * cols + j];
    }
};

Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& m);
Mat add(const Mat& a, const Mat& b);
Mat sub(const Mat& a, const Mat& b);
Mat scale(const Mat& m, double c);
std::vector<double> matvec(const Mat& m, std::span<const double> v);

// Solves A X = B by Gaussian elimination with partial pivoting.
Mat solve(const Mat& a, const Mat& b);

// Truncated series for exp(A), adequate for the well-conditioned
// discretizations used here.
Mat expm_taylor(const Mat& a, int order = 8);

}  // namespace cbdae
