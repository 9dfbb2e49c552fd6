#pragma once

// Dense kernels shared by the tape and by the eager (inference) path. Both
// paths must call exactly these functions so batched and single-row results
// agree bit for bit: every output row depends only on its own input row and
// accumulates in a fixed order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "inode/errors.hpp"
#include "inode/numerics/matrix.hpp"

namespace inode::kernels {

namespace detail {

// out[r, :] += a[r, :] * b   (row-major, i-k-j order). Columns are processed
// in register tiles; each output still accumulates over k in ascending order,
// so results do not depend on the number of rows.
inline void gemm_acc(const double* __restrict a, const double* __restrict b, double* __restrict out,
                     std::size_t m, std::size_t k, std::size_t n) {
    constexpr std::size_t tile = 32;
    const std::size_t tiled = n - n % tile;
    for (std::size_t i = 0; i < m; ++i) {
        double* __restrict orow = out + i * n;
        const double* __restrict arow = a + i * k;
        for (std::size_t j0 = 0; j0 < tiled; j0 += tile) {
            double acc[tile];
            for (std::size_t t = 0; t < tile; ++t) acc[t] = orow[j0 + t];
            for (std::size_t p = 0; p < k; ++p) {
                const double av = arow[p];
                const double* __restrict brow = b + p * n + j0;
                for (std::size_t t = 0; t < tile; ++t) acc[t] += av * brow[t];
            }
            for (std::size_t t = 0; t < tile; ++t) orow[j0 + t] = acc[t];
        }
        if (tiled == n) continue;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* __restrict brow = b + p * n;
            for (std::size_t j = tiled; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + a.shape_str() + " x " + b.shape_str());
    }
    Matrix out(a.rows(), b.cols());
    detail::gemm_acc(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
    return out;
}

// out += a^T * b
inline void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
        throw ShapeError("matmul_tn: " + a.shape_str() + "^T x " + b.shape_str() + " -> " + out.shape_str());
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    for (std::size_t r = 0; r < m; ++r) {
        const double* __restrict arow = a.data() + r * k;
        const double* __restrict brow = b.data() + r * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* __restrict orow = out.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: " + a.shape_str() + " x " + b.shape_str() + "^T");
    }
    const Matrix bt = transpose(b);
    Matrix out(a.rows(), b.rows());
    detail::gemm_acc(a.data(), bt.data(), out.data(), a.rows(), a.cols(), b.rows());
    return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

inline void add_inplace(Matrix& out, const Matrix& a) {
    require_same_shape(out, a, "add_inplace");
    for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
}

// x[r, :] + bias[0, :]
inline Matrix add_bias(const Matrix& x, const Matrix& bias) {
    if (bias.rows() != 1 || bias.cols() != x.cols()) {
        throw ShapeError("add_bias: " + x.shape_str() + " + " + bias.shape_str());
    }
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto xr = x.row(r);
        auto orow = out.row(r);
        for (std::size_t j = 0; j < x.cols(); ++j) orow[j] = xr[j] + bias[j];
    }
    return out;
}

// Sum over rows, giving 1 x cols.
inline Matrix column_sums(const Matrix& x) {
    Matrix out(1, x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto xr = x.row(r);
        for (std::size_t j = 0; j < x.cols(); ++j) out[j] += xr[j];
    }
    return out;
}

inline void tanh_row(const double* in, double* out, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) out[j] = std::tanh(in[j]);
}

inline Matrix tanh_forward(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) tanh_row(x.data() + r * x.cols(), out.data() + r * x.cols(), x.cols());
    return out;
}

inline double sigmoid(double v) noexcept {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

inline Matrix sigmoid_forward(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
    return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

inline Matrix concat_cols(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("concat_cols: " + a.shape_str() + " | " + b.shape_str());
    }
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto orow = out.row(r);
        std::copy(a.row(r).begin(), a.row(r).end(), orow.begin());
        std::copy(b.row(r).begin(), b.row(r).end(), orow.begin() + static_cast<std::ptrdiff_t>(a.cols()));
    }
    return out;
}

inline Matrix slice_cols(const Matrix& x, std::size_t begin, std::size_t count) {
    if (begin + count > x.cols()) {
        throw ShapeError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") of " +
                         x.shape_str());
    }
    Matrix out(x.rows(), count);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto xr = x.row(r).subspan(begin, count);
        std::copy(xr.begin(), xr.end(), out.row(r).begin());
    }
    return out;
}

// x[r, :] * s[r, 0]
inline Matrix scale_rows(const Matrix& x, const Matrix& s) {
    if (s.cols() != 1 || s.rows() != x.rows()) {
        throw ShapeError("scale_rows: " + x.shape_str() + " by " + s.shape_str());
    }
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double f = s[r];
        const auto xr = x.row(r);
        auto orow = out.row(r);
        for (std::size_t j = 0; j < x.cols(); ++j) orow[j] = xr[j] * f;
    }
    return out;
}

inline Matrix scale(const Matrix& x, double c) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * c;
    return out;
}

inline double sum(const Matrix& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    return s;
}

inline Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto lr = logits.row(r);
        auto orow = out.row(r);
        const double mx = *std::max_element(lr.begin(), lr.end());
        double z = 0.0;
        for (std::size_t j = 0; j < lr.size(); ++j) {
            orow[j] = std::exp(lr[j] - mx);
            z += orow[j];
        }
        for (double& v : orow) v /= z;
    }
    return out;
}

struct CrossEntropy {
    double loss = 0.0;  // mean over rows
    Matrix probs;
};

inline void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
    if (labels.size() != rows) {
        throw ShapeError("cross entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
    }
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= classes) {
            throw InputError("cross entropy: label " + std::to_string(l) + " outside [0, " +
                             std::to_string(classes) + ")");
        }
    }
}

// Log-sum-exp form so saturated logits give loss ~0 rather than log(0).
inline CrossEntropy softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
    check_labels(labels, logits.rows(), logits.cols());
    CrossEntropy ce{0.0, softmax_rows(logits)};
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto lr = logits.row(r);
        const double mx = *std::max_element(lr.begin(), lr.end());
        double z = 0.0;
        for (double v : lr) z += std::exp(v - mx);
        ce.loss += (mx + std::log(z)) - lr[static_cast<std::size_t>(labels[r])];
    }
    if (logits.rows() > 0) ce.loss /= static_cast<double>(logits.rows());
    return ce;
}

// Lowest index wins ties.
inline std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < v.size(); ++j) {
        if (v[j] > v[best]) best = j;
    }
    return best;
}

}  // namespace inode::kernels
