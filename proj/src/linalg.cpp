#include "cbdae/linalg.hpp"

#include <cmath>

namespace cbdae {

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) throw DimensionError("mat: inner dimensions disagree");
    Mat c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double av = a(i, k);
            for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += av * b(k, j);
        }
    return c;
}

Mat transpose(const Mat& m) {
    Mat t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
    return t;
}

Mat add(const Mat& a, const Mat& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw DimensionError("mat add: shape mismatch");
    Mat c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
    return c;
}

Mat sub(const Mat& a, const Mat& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw DimensionError("mat sub: shape mismatch");
    Mat c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
    return c;
}

Mat scale(const Mat& m, double c) {
    Mat out = m;
    for (double& v : out.data) v *= c;
    return out;
}

std::vector<double> matvec(const Mat& m, std::span<const double> v) {
    if (m.cols != v.size()) throw DimensionError("matvec: size mismatch");
    std::vector<double> out(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) out[i] += m(i, j) * v[j];
    return out;
}

Mat solve(const Mat& a, const Mat& b) {
    if (a.rows != a.cols || a.rows != b.rows)
        throw DimensionError("solve: need square A matching B");
    const std::size_t n = a.rows, m = b.cols;
    Mat lu = a, x = b;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        double best = std::fabs(lu(col, col));
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(lu(r, col)) > best) {
                best = std::fabs(lu(r, col));
                pivot = r;
            }
        if (best < 1e-300) throw NumericError("solve: singular matrix");
        if (pivot != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu(col, j), lu(pivot, j));
            for (std::size_t j = 0; j < m; ++j) std::swap(x(col, j), x(pivot, j));
        }
        const double inv = 1.0 / lu(col, col);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = lu(r, col) * inv;
            if (f == 0.0) continue;
            for (std::size_t j = col; j < n; ++j) lu(r, j) -= f * lu(col, j);
            for (std::size_t j = 0; j < m; ++j) x(r, j) -= f * x(col, j);
        }
    }
    for (std::size_t col = n; col-- > 0;) {
        const double inv = 1.0 / lu(col, col);
        for (std::size_t j = 0; j < m; ++j) {
            double acc = x(col, j);
            for (std::size_t k = col + 1; k < n; ++k) acc -= lu(col, k) * x(k, j);
            x(col, j) = acc * inv;
        }
    }
    return x;
}

Mat expm_taylor(const Mat& a, int order) {
    if (a.rows != a.cols) throw DimensionError("expm: matrix must be square");
    Mat result = Mat::identity(a.rows);
    Mat term = Mat::identity(a.rows);
    for (int k = 1; k <= order; ++k) {
        term = scale(matmul(term, a), 1.0 / static_cast<double>(k));
        result = add(result, term);
    }
    return result;
}

}  // namespace cbdae
