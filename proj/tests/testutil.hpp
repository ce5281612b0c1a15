// Shared test helpers: independent reference implementations (oracles)
// and random instance generators. Everything here deliberately avoids the
// library's compute paths: convolution is a plain nested loop, least
// squares goes through Householder QR, and the LASSO reference is a
// proximal-gradient iteration.

#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "prunekit/graph.hpp"
#include "prunekit/lasso.hpp"
#include "prunekit/linalg.hpp"
#include "prunekit/presets.hpp"
#include "prunekit/rng.hpp"
#include "prunekit/sampler.hpp"
#include "prunekit/tensor.hpp"

namespace testutil {

using namespace prunekit;

inline Tensor4 random_tensor(i64 d0, i64 d1, i64 d2, i64 d3, u64 seed, double scale = 1.0) {
    Tensor4 t(d0, d1, d2, d3);
    auto rng = make_rng(seed);
    std::normal_distribution<double> dist(0.0, scale);
    for (float& v : t.data) v = static_cast<float>(dist(rng));
    return t;
}

inline MatF random_matrix(i64 rows, i64 cols, u64 seed, double scale = 1.0) {
    MatF m(rows, cols);
    auto rng = make_rng(seed);
    std::normal_distribution<double> dist(0.0, scale);
    for (float& v : m.v) v = static_cast<float>(dist(rng));
    return m;
}

// ---- direct convolution oracle (6 nested loops, f64 accumulation) ----

inline Tensor4 conv_reference(const Node& conv, const Tensor4& in) {
    const i64 n_out = conv.weights.dims[0], c = conv.weights.dims[1];
    const i64 kh = conv.weights.dims[2], kw = conv.weights.dims[3];
    const i64 batch = in.dims[0], h = in.dims[2], w = in.dims[3];
    const i64 ho = (h + 2 * conv.ph - kh) / conv.sh + 1;
    const i64 wo = (w + 2 * conv.pw - kw) / conv.sw + 1;
    Tensor4 out(batch, n_out, ho, wo);
    for (i64 img = 0; img < batch; ++img) {
        for (i64 j = 0; j < n_out; ++j) {
            for (i64 oy = 0; oy < ho; ++oy) {
                for (i64 ox = 0; ox < wo; ++ox) {
                    double acc = conv.has_bias ? conv.bias[static_cast<size_t>(j)] : 0.0;
                    for (i64 ch = 0; ch < c; ++ch) {
                        for (i64 u = 0; u < kh; ++u) {
                            for (i64 v = 0; v < kw; ++v) {
                                const i64 y = oy * conv.sh - conv.ph + u;
                                const i64 x = ox * conv.sw - conv.pw + v;
                                if (y < 0 || y >= h || x < 0 || x >= w) continue;
                                acc += static_cast<double>(in.at(img, ch, y, x)) *
                                       static_cast<double>(conv.weights.at(j, ch, u, v));
                            }
                        }
                    }
                    out.at(img, j, oy, ox) = static_cast<float>(acc);
                }
            }
        }
    }
    return out;
}

// Single patch row extracted with explicit loops, channel-major order.
inline std::vector<float> im2col_row_reference(const Tensor4& in, i64 img, i64 oy, i64 ox,
                                               i64 kh, i64 kw, i64 sh, i64 sw, i64 ph,
                                               i64 pw) {
    const i64 c = in.dims[1], h = in.dims[2], w = in.dims[3];
    std::vector<float> row;
    row.reserve(static_cast<size_t>(c * kh * kw));
    for (i64 ch = 0; ch < c; ++ch) {
        for (i64 u = 0; u < kh; ++u) {
            for (i64 v = 0; v < kw; ++v) {
                const i64 y = oy * sh - ph + u;
                const i64 x = ox * sw - pw + v;
                row.push_back((y >= 0 && y < h && x >= 0 && x < w) ? in.at(img, ch, y, x)
                                                                   : 0.0f);
            }
        }
    }
    return row;
}

// ---- Householder QR least-squares oracle ----------------------------

// Minimizes ||A x - b||_2 for every column of B; A is m x n with m >= n
// and full column rank. Independent of the library's Cholesky route.
inline MatD qr_least_squares(const MatD& a_in, const MatD& b_in) {
    MatD a = a_in;
    MatD b = b_in;
    const i64 m = a.rows, n = a.cols, k = b.cols;
    std::vector<double> v(static_cast<size_t>(m));
    for (i64 col = 0; col < n; ++col) {
        double norm = 0.0;
        for (i64 r = col; r < m; ++r) norm += a(r, col) * a(r, col);
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        const double alpha = (a(col, col) > 0.0) ? -norm : norm;
        double vnorm_sq = 0.0;
        for (i64 r = col; r < m; ++r) {
            v[static_cast<size_t>(r)] = a(r, col);
            if (r == col) v[static_cast<size_t>(r)] -= alpha;
            vnorm_sq += v[static_cast<size_t>(r)] * v[static_cast<size_t>(r)];
        }
        if (vnorm_sq == 0.0) continue;
        for (i64 c2 = col; c2 < n; ++c2) {
            double dot = 0.0;
            for (i64 r = col; r < m; ++r) dot += v[static_cast<size_t>(r)] * a(r, c2);
            const double f = 2.0 * dot / vnorm_sq;
            for (i64 r = col; r < m; ++r) a(r, c2) -= f * v[static_cast<size_t>(r)];
        }
        for (i64 c2 = 0; c2 < k; ++c2) {
            double dot = 0.0;
            for (i64 r = col; r < m; ++r) dot += v[static_cast<size_t>(r)] * b(r, c2);
            const double f = 2.0 * dot / vnorm_sq;
            for (i64 r = col; r < m; ++r) b(r, c2) -= f * v[static_cast<size_t>(r)];
        }
    }
    MatD x(n, k);
    for (i64 c2 = 0; c2 < k; ++c2) {
        for (i64 r = n - 1; r >= 0; --r) {
            double s = b(r, c2);
            for (i64 p = r + 1; p < n; ++p) s -= a(r, p) * x(p, c2);
            x(r, c2) = (a(r, r) != 0.0) ? s / a(r, r) : 0.0;
        }
    }
    return x;
}

// ---- proximal-gradient LASSO reference -------------------------------

// High-precision reference for min (1/2N)||y - Z b||^2 + lambda ||b||_1
// over the flattened responses. Step size from a power-iteration bound on
// the Gram spectral norm; run long enough to certify objectives to 1e-8.
inline std::vector<double> lasso_reference(const ChannelResponses& resp, double lambda,
                                           i64 iters = 200000) {
    const i64 c = resp.c();
    const i64 nn = resp.Y.rows * resp.Y.cols;
    const double n = static_cast<double>(resp.Y.rows);
    MatD g(c, c);
    std::vector<double> q(static_cast<size_t>(c), 0.0);
    for (i64 i = 0; i < c; ++i) {
        for (i64 j = i; j < c; ++j) {
            double s = 0.0;
            for (i64 p = 0; p < nn; ++p) {
                s += static_cast<double>(resp.Z[static_cast<size_t>(i)].v[static_cast<size_t>(p)]) *
                     static_cast<double>(resp.Z[static_cast<size_t>(j)].v[static_cast<size_t>(p)]);
            }
            g(i, j) = s;
            g(j, i) = s;
        }
        double s = 0.0;
        for (i64 p = 0; p < nn; ++p) {
            s += static_cast<double>(resp.Z[static_cast<size_t>(i)].v[static_cast<size_t>(p)]) *
                 static_cast<double>(resp.Y.v[static_cast<size_t>(p)]);
        }
        q[static_cast<size_t>(i)] = s;
    }
    // Spectral norm bound by power iteration.
    std::vector<double> u(static_cast<size_t>(c), 1.0), gu(static_cast<size_t>(c));
    double lip = 0.0;
    for (int it = 0; it < 200; ++it) {
        for (i64 i = 0; i < c; ++i) {
            double s = 0.0;
            for (i64 j = 0; j < c; ++j) s += g(i, j) * u[static_cast<size_t>(j)];
            gu[static_cast<size_t>(i)] = s;
        }
        double norm = 0.0;
        for (double x : gu) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) break;
        lip = norm;
        for (i64 i = 0; i < c; ++i) u[static_cast<size_t>(i)] = gu[static_cast<size_t>(i)] / norm;
    }
    if (lip == 0.0) return std::vector<double>(static_cast<size_t>(c), 0.0);
    const double step = 1.0 / (1.05 * lip / n);

    std::vector<double> b(static_cast<size_t>(c), 0.0);
    for (i64 it = 0; it < iters; ++it) {
        double max_move = 0.0;
        for (i64 i = 0; i < c; ++i) {
            double grad = -q[static_cast<size_t>(i)];
            for (i64 j = 0; j < c; ++j) grad += g(i, j) * b[static_cast<size_t>(j)];
            grad /= n;
            double z = b[static_cast<size_t>(i)] - step * grad;
            const double t = step * lambda;
            const double nb = (z > t) ? z - t : (z < -t ? z + t : 0.0);
            max_move = std::max(max_move, std::abs(nb - b[static_cast<size_t>(i)]));
            b[static_cast<size_t>(i)] = nb;
        }
        if (max_move < 1e-15) break;
    }
    return b;
}

inline double lasso_objective(const ChannelResponses& resp, const std::vector<double>& b,
                              double lambda) {
    const i64 nn = resp.Y.rows * resp.Y.cols;
    double sq = 0.0;
    for (i64 p = 0; p < nn; ++p) {
        double r = resp.Y.v[static_cast<size_t>(p)];
        for (i64 i = 0; i < resp.c(); ++i) {
            if (b[static_cast<size_t>(i)] == 0.0) continue;
            r -= b[static_cast<size_t>(i)] *
                 static_cast<double>(resp.Z[static_cast<size_t>(i)].v[static_cast<size_t>(p)]);
        }
        sq += r * r;
    }
    double l1 = 0.0;
    for (double x : b) l1 += std::abs(x);
    return sq / (2.0 * static_cast<double>(resp.Y.rows)) + lambda * l1;
}

// ---- random problem generators ---------------------------------------

// Sample set with correlated channels: latent signals mixed into c
// channels with uneven energies plus noise, the shape feature maps tend
// to have. Y is the exact response of the planted weights, which are
// returned through w_out so selectors see the layer that produced Y.
inline SampleSet correlated_instance(i64 rows, i64 c, i64 n, i64 kh, i64 kw, u64 seed,
                                     Tensor4* w_out = nullptr, i64 latent = 0,
                                     double noise = 0.25) {
    auto rng = make_rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::uniform_real_distribution<double> scale_dist(0.4, 2.0);
    const i64 kk = kh * kw;
    if (latent <= 0) latent = std::max<i64>(2, c / 2);

    SampleSet s;
    s.c = c;
    s.n = n;
    s.kh = kh;
    s.kw = kw;
    s.X = MatF(rows, c * kk);
    MatF base(rows, latent * kk);
    for (float& v : base.v) v = static_cast<float>(dist(rng));
    std::vector<double> mix(static_cast<size_t>(c * latent), 0.0);
    std::uniform_int_distribution<i64> pick(0, latent - 1);
    for (i64 i = 0; i < c; ++i) {
        const double energy = scale_dist(rng);
        // Each channel loads on a couple of latent signals.
        for (int t = 0; t < 2; ++t) {
            mix[static_cast<size_t>(i * latent + pick(rng))] += energy * dist(rng);
        }
    }
    for (i64 r = 0; r < rows; ++r) {
        for (i64 i = 0; i < c; ++i) {
            for (i64 p = 0; p < kk; ++p) {
                double v = noise * dist(rng);
                for (i64 l = 0; l < latent; ++l) {
                    const double m = mix[static_cast<size_t>(i * latent + l)];
                    if (m == 0.0) continue;
                    v += m * static_cast<double>(base(r, l * kk + p));
                }
                s.X(r, i * kk + p) = static_cast<float>(v);
            }
        }
    }
    const Tensor4 w0 =
        random_tensor(n, c, kh, kw, seed ^ 0xabcdef, 1.0 / std::sqrt(double(c * kk)));
    MatF w0m(n, c * kk);
    w0m.v.assign(w0.data.begin(), w0.data.end());
    s.Y = matmul_nt(s.X, w0m);
    for (i64 r = 0; r < rows; ++r) {
        s.positions.push_back({r, 0, 0});
    }
    if (w_out) *w_out = w0;
    return s;
}

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(1e-300, std::abs(want));
}

inline double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return m;
}

} // namespace testutil
