#include "prunekit/linalg.hpp"

#include <cmath>
#include <vector>

namespace prunekit {

void gemm_nn(const float* a, i64 m, i64 k, const float* b, i64 n, float* c) {
    // i-k-j order: the j loop updates independent accumulators, so the
    // compiler may vectorize it without changing the per-element k order.
    std::vector<double> acc(static_cast<size_t>(n));
    for (i64 i = 0; i < m; ++i) {
        for (i64 j = 0; j < n; ++j) acc[j] = 0.0;
        const float* arow = a + i * k;
        for (i64 p = 0; p < k; ++p) {
            const double av = static_cast<double>(arow[p]);
            const float* brow = b + p * n;
            for (i64 j = 0; j < n; ++j) {
                acc[j] += av * static_cast<double>(brow[j]);
            }
        }
        float* crow = c + i * n;
        for (i64 j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
    }
}

MatF matmul(const MatF& a, const MatF& b) {
    if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions differ");
    MatF c(a.rows, b.cols);
    gemm_nn(a.v.data(), a.rows, a.cols, b.v.data(), b.cols, c.v.data());
    return c;
}

MatF matmul_nt(const MatF& a, const MatF& b) {
    if (a.cols != b.cols) throw ShapeError("matmul_nt: inner dimensions differ");
    // Materialize B^T once; gemm_nn then streams both operands.
    MatF bt(b.cols, b.rows);
    for (i64 r = 0; r < b.rows; ++r)
        for (i64 c = 0; c < b.cols; ++c) bt(c, r) = b(r, c);
    return matmul(a, bt);
}

MatD gram(const MatF& x) {
    const i64 k = x.cols;
    MatD g(k, k);
    // Rank-1 updates over rows; upper triangle, mirrored at the end.
    for (i64 r = 0; r < x.rows; ++r) {
        const float* row = x.row(r);
        for (i64 i = 0; i < k; ++i) {
            const double xi = static_cast<double>(row[i]);
            if (xi == 0.0) continue;
            double* grow = g.row(i);
            for (i64 j = i; j < k; ++j) {
                grow[j] += xi * static_cast<double>(row[j]);
            }
        }
    }
    for (i64 i = 0; i < k; ++i)
        for (i64 j = 0; j < i; ++j) g(i, j) = g(j, i);
    return g;
}

MatD at_b(const MatF& x, const MatF& y) {
    if (x.rows != y.rows) throw ShapeError("at_b: row counts differ");
    MatD c(x.cols, y.cols);
    for (i64 r = 0; r < x.rows; ++r) {
        const float* xrow = x.row(r);
        const float* yrow = y.row(r);
        for (i64 i = 0; i < x.cols; ++i) {
            const double xi = static_cast<double>(xrow[i]);
            if (xi == 0.0) continue;
            double* crow = c.row(i);
            for (i64 j = 0; j < y.cols; ++j) {
                crow[j] += xi * static_cast<double>(yrow[j]);
            }
        }
    }
    return c;
}

double dot_f64(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    const size_t n = a.size();
    for (size_t i = 0; i < n; ++i) {
        s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return s;
}

double frob_sq(std::span<const float> a) {
    double s = 0.0;
    for (float v : a) s += static_cast<double>(v) * static_cast<double>(v);
    return s;
}

bool cholesky(MatD& a, double pivot_floor) {
    const i64 n = a.rows;
    if (a.cols != n) throw ShapeError("cholesky: matrix not square");
    for (i64 j = 0; j < n; ++j) {
        double d = a(j, j);
        for (i64 p = 0; p < j; ++p) d -= a(j, p) * a(j, p);
        if (!(d > pivot_floor)) return false;
        const double ljj = std::sqrt(d);
        a(j, j) = ljj;
        for (i64 i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (i64 p = 0; p < j; ++p) s -= a(i, p) * a(j, p);
            a(i, j) = s / ljj;
        }
    }
    return true;
}

void cholesky_solve(const MatD& l, MatD& b) {
    const i64 n = l.rows;
    if (b.rows != n) throw ShapeError("cholesky_solve: rhs rows mismatch");
    const i64 m = b.cols;
    // Forward substitution L z = b.
    for (i64 i = 0; i < n; ++i) {
        for (i64 c = 0; c < m; ++c) {
            double s = b(i, c);
            for (i64 p = 0; p < i; ++p) s -= l(i, p) * b(p, c);
            b(i, c) = s / l(i, i);
        }
    }
    // Back substitution L^T x = z.
    for (i64 i = n - 1; i >= 0; --i) {
        for (i64 c = 0; c < m; ++c) {
            double s = b(i, c);
            for (i64 p = i + 1; p < n; ++p) s -= l(p, i) * b(p, c);
            b(i, c) = s / l(i, i);
        }
    }
}

} // namespace prunekit
