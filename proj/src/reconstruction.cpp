#include "prunekit/reconstruction.hpp"

#include <algorithm>
#include <cmath>

#include "prunekit/linalg.hpp"

namespace prunekit {

static constexpr double kFallbackRidge = 1e-8;

ReconstructedWeights reconstruct(const SampleSet& samples, std::span<const double> beta,
                                 std::span<const i64> active, double ridge) {
    const i64 c = samples.c, n = samples.n, kk = samples.kh * samples.kw;
    const MatF& x = samples.X;
    const MatF& y = samples.Y;
    if (x.cols != c * kk) throw ShapeError("reconstruct: X width mismatch");
    if (y.cols != n || y.rows != x.rows) throw ShapeError("reconstruct: Y dims mismatch");
    if (static_cast<i64>(beta.size()) != c) {
        throw ArgumentError("reconstruct: beta length mismatch");
    }
    if (ridge < 0.0) throw ArgumentError("reconstruct: ridge must be >= 0");
    for (i64 i : active) {
        if (i < 0 || i >= c) throw ArgumentError("reconstruct: active index out of range");
        if (beta[static_cast<size_t>(i)] == 0.0) {
            throw ArgumentError("reconstruct: active channel with zero beta");
        }
    }

    ReconstructedWeights out;
    out.w_prime = MatF(n, c * kk);
    out.ridge_used = ridge;
    const double ynorm = frob_sq(y.v);
    if (active.empty()) {
        out.residual_rel = ynorm > 0.0 ? 1.0 : 0.0;
        return out;
    }

    // Gather the beta-scaled active column blocks.
    const i64 k = static_cast<i64>(active.size()) * kk;
    MatF xs(x.rows, k);
    for (i64 r = 0; r < x.rows; ++r) {
        const float* src = x.row(r);
        float* dst = xs.row(r);
        for (size_t a = 0; a < active.size(); ++a) {
            const i64 i = active[a];
            const double bi = beta[static_cast<size_t>(i)];
            for (i64 p = 0; p < kk; ++p) {
                dst[a * kk + p] = static_cast<float>(bi * static_cast<double>(src[i * kk + p]));
            }
        }
    }

    MatD g = gram(xs);
    double trace = 0.0;
    for (i64 i = 0; i < k; ++i) trace += g(i, i);
    auto damped = [&](double r) {
        MatD d = g;
        const double add = r * trace / static_cast<double>(k);
        for (i64 i = 0; i < k; ++i) d(i, i) += add;
        return d;
    };

    // Pivot floor relative to the diagonal scale; a Gram that loses all
    // its pivot mass to cancellation is rank deficient in f64.
    const double floor = 1e-10 * trace / static_cast<double>(k);
    MatD factor = damped(ridge);
    if (!cholesky(factor, floor)) {
        out.ridge_used = std::max(ridge, kFallbackRidge);
        factor = damped(out.ridge_used);
        if (!cholesky(factor, 0.0)) {
            throw NumericError("reconstruct: Gram not positive definite even with ridge");
        }
    }
    MatD rhs = at_b(xs, y); // k x n
    cholesky_solve(factor, rhs);

    // Scatter the solution into the active blocks of w_prime.
    for (i64 j = 0; j < n; ++j) {
        float* wrow = out.w_prime.row(j);
        for (size_t a = 0; a < active.size(); ++a) {
            for (i64 p = 0; p < kk; ++p) {
                wrow[active[a] * kk + p] = static_cast<float>(rhs(a * kk + p, j));
            }
        }
    }

    // Residual with the f32-rounded solution actually returned.
    double res = 0.0;
    std::vector<double> pred(static_cast<size_t>(n));
    for (i64 r = 0; r < x.rows; ++r) {
        const float* xrow = xs.row(r);
        std::fill(pred.begin(), pred.end(), 0.0);
        for (size_t a = 0; a < active.size(); ++a) {
            for (i64 p = 0; p < kk; ++p) {
                const double xv = static_cast<double>(xrow[a * kk + p]);
                if (xv == 0.0) continue;
                const i64 col = active[a] * kk + p;
                for (i64 j = 0; j < n; ++j) {
                    pred[static_cast<size_t>(j)] +=
                        xv * static_cast<double>(out.w_prime(j, col));
                }
            }
        }
        const float* yrow = y.row(r);
        for (i64 j = 0; j < n; ++j) {
            const double d = static_cast<double>(yrow[j]) - pred[static_cast<size_t>(j)];
            res += d * d;
        }
    }
    out.residual_rel = ynorm > 0.0 ? res / ynorm : 0.0;
    if (!std::isfinite(out.residual_rel)) {
        throw NumericError("reconstruct: non-finite residual");
    }
    return out;
}

void renormalize(std::vector<double>& beta, Tensor4& weights) {
    const i64 c = weights.dims[1];
    if (static_cast<i64>(beta.size()) != c) {
        throw ArgumentError("renormalize: beta length mismatch");
    }
    const i64 n = weights.dims[0], kk = weights.dims[2] * weights.dims[3];
    for (i64 i = 0; i < c; ++i) {
        double sq = 0.0;
        for (i64 j = 0; j < n; ++j) {
            const float* w = weights.data.data() + (j * c + i) * kk;
            for (i64 p = 0; p < kk; ++p) sq += static_cast<double>(w[p]) * static_cast<double>(w[p]);
        }
        if (sq > 0.0) {
            const double norm = std::sqrt(sq);
            beta[static_cast<size_t>(i)] *= norm;
            for (i64 j = 0; j < n; ++j) {
                float* w = weights.data.data() + (j * c + i) * kk;
                for (i64 p = 0; p < kk; ++p) {
                    w[p] = static_cast<float>(static_cast<double>(w[p]) / norm);
                }
            }
        } else {
            beta[static_cast<size_t>(i)] = 0.0;
        }
    }
}

std::pair<Tensor4, std::vector<i64>> fold_final_weights(std::span<const double> beta,
                                                        const Tensor4& weights) {
    const i64 n = weights.dims[0], c = weights.dims[1];
    const i64 kh = weights.dims[2], kw = weights.dims[3];
    if (static_cast<i64>(beta.size()) != c) {
        throw ArgumentError("fold_final_weights: beta length mismatch");
    }
    std::vector<i64> retained;
    for (i64 i = 0; i < c; ++i) {
        if (beta[static_cast<size_t>(i)] != 0.0) retained.push_back(i);
    }
    Tensor4 out(n, static_cast<i64>(retained.size()), kh, kw);
    const i64 kk = kh * kw;
    for (i64 j = 0; j < n; ++j) {
        for (size_t a = 0; a < retained.size(); ++a) {
            const i64 i = retained[a];
            const double bi = beta[static_cast<size_t>(i)];
            const float* src = weights.data.data() + (j * c + i) * kk;
            float* dst = out.data.data() + (j * static_cast<i64>(retained.size()) +
                                            static_cast<i64>(a)) * kk;
            for (i64 p = 0; p < kk; ++p) {
                dst[p] = static_cast<float>(bi * static_cast<double>(src[p]));
            }
        }
    }
    return {std::move(out), std::move(retained)};
}

Tensor4 weights_from_matrix(const MatF& w, i64 c, i64 kh, i64 kw) {
    if (w.cols != c * kh * kw) throw ShapeError("weights_from_matrix: width mismatch");
    Tensor4 t(w.rows, c, kh, kw);
    t.data = w.v;
    return t;
}

} // namespace prunekit
