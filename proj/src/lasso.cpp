#include "prunekit/lasso.hpp"

#include <algorithm>
#include <cmath>

#include "prunekit/linalg.hpp"

namespace prunekit {

ChannelResponses build_responses(const SampleSet& s, const Tensor4& weights) {
    const i64 c = s.c, n = s.n, kk = s.kh * s.kw;
    if (weights.dims[0] != n || weights.dims[1] != c || weights.dims[2] != s.kh ||
        weights.dims[3] != s.kw) {
        throw ShapeError("build_responses: weight dims do not match sample set");
    }
    if (s.X.cols != c * kk) throw ShapeError("build_responses: X width mismatch");
    s.X.check_finite("build_responses X");
    s.Y.check_finite("build_responses Y");
    weights.check_finite("build_responses weights");

    ChannelResponses resp;
    resp.Y = s.Y;
    resp.Z.reserve(static_cast<size_t>(c));
    MatF xi(s.X.rows, kk);
    MatF wi(n, kk);
    for (i64 i = 0; i < c; ++i) {
        for (i64 r = 0; r < s.X.rows; ++r) {
            const float* src = s.X.row(r) + i * kk;
            std::copy(src, src + kk, xi.row(r));
        }
        for (i64 j = 0; j < n; ++j) {
            const float* src = weights.data.data() + (j * c + i) * kk;
            std::copy(src, src + kk, wi.row(j));
        }
        resp.Z.push_back(matmul_nt(xi, wi));
    }
    return resp;
}

namespace {

double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

std::vector<i64> support(const std::vector<double>& beta) {
    std::vector<i64> s;
    for (i64 i = 0; i < static_cast<i64>(beta.size()); ++i) {
        if (beta[i] != 0.0) s.push_back(i);
    }
    return s;
}

i64 nnz(const std::vector<double>& beta) {
    return static_cast<i64>(support(beta).size());
}

// Precomputed quadratic form of the LASSO objective. The matrix-valued
// responses are flattened, so the problem is a plain c-variable LASSO
// with Gram G_ij = <Z_i, Z_j> and correlations q_i = <Z_i, Y>.
class LassoProblem {
public:
    explicit LassoProblem(const ChannelResponses& resp) : c_(resp.c()) {
        if (c_ == 0) throw ArgumentError("lasso: no channels");
        const i64 rows = resp.Y.rows, cols = resp.Y.cols;
        n_samples_ = rows;
        for (const MatF& z : resp.Z) {
            if (z.rows != rows || z.cols != cols) {
                throw ShapeError("lasso: Z_i dims do not match Y");
            }
            z.check_finite("lasso Z");
        }
        resp.Y.check_finite("lasso Y");

        // Flatten the c response matrices into the columns of one tall
        // matrix so the Gram falls out of one vectorizable kernel.
        const i64 nn = rows * cols;
        MatF zmat(nn, c_);
        for (i64 i = 0; i < c_; ++i) {
            const std::vector<float>& src = resp.Z[static_cast<size_t>(i)].v;
            for (i64 r = 0; r < nn; ++r) zmat(r, i) = src[static_cast<size_t>(r)];
        }
        MatF yflat(nn, 1);
        yflat.v = resp.Y.v;
        g_ = gram(zmat);
        const MatD qm = at_b(zmat, yflat);
        q_.resize(static_cast<size_t>(c_));
        for (i64 i = 0; i < c_; ++i) q_[static_cast<size_t>(i)] = qm(i, 0);

        dead_.assign(static_cast<size_t>(c_), false);
        for (i64 i = 0; i < c_; ++i) dead_[static_cast<size_t>(i)] = !(g_(i, i) > 0.0);
    }

    i64 c() const { return c_; }
    double n_samples() const { return static_cast<double>(n_samples_); }

    double lambda_max() const {
        double m = 0.0;
        for (i64 i = 0; i < c_; ++i) {
            if (dead_[static_cast<size_t>(i)]) continue;
            m = std::max(m, std::abs(q_[static_cast<size_t>(i)]) / n_samples());
        }
        return m;
    }

    /// Cyclic coordinate descent; beta is updated in place. Coordinates
    /// in `retired` are pinned to zero (channels dropped earlier on the
    /// ramp never re-enter). Returns the number of passes.
    i64 solve(double lambda, std::vector<double>& beta, double tol, i64 max_passes,
              const std::vector<bool>* retired = nullptr) {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
            throw ArgumentError("lasso: lambda must be finite and >= 0");
        }
        beta.resize(static_cast<size_t>(c_), 0.0);
        auto skip = [&](i64 i) {
            return dead_[static_cast<size_t>(i)] ||
                   (retired && (*retired)[static_cast<size_t>(i)]);
        };
        for (i64 i = 0; i < c_; ++i) {
            if (skip(i)) beta[static_cast<size_t>(i)] = 0.0;
        }
        // s = G * beta, maintained incrementally.
        std::vector<double> s(static_cast<size_t>(c_), 0.0);
        for (i64 i = 0; i < c_; ++i) {
            const double bi = beta[static_cast<size_t>(i)];
            if (bi == 0.0) continue;
            for (i64 j = 0; j < c_; ++j) s[static_cast<size_t>(j)] += g_(j, i) * bi;
        }
        const double thr = lambda * n_samples();
        i64 pass = 0;
        for (; pass < max_passes; ++pass) {
            double max_delta = 0.0, max_beta = 0.0;
            for (i64 i = 0; i < c_; ++i) {
                if (skip(i)) continue;
                const double gii = g_(i, i);
                const double bi = beta[static_cast<size_t>(i)];
                const double rho = q_[static_cast<size_t>(i)] - s[static_cast<size_t>(i)] + gii * bi;
                const double bnew = soft_threshold(rho, thr) / gii;
                const double delta = bnew - bi;
                if (delta != 0.0) {
                    beta[static_cast<size_t>(i)] = bnew;
                    for (i64 j = 0; j < c_; ++j) s[static_cast<size_t>(j)] += g_(j, i) * delta;
                }
                max_delta = std::max(max_delta, std::abs(delta));
                max_beta = std::max(max_beta, std::abs(bnew));
            }
            if (max_delta <= tol * (1.0 + max_beta)) {
                // Exact stationarity sweep; rounding in the incremental s
                // is the only slack left.
                if (kkt_from_gram(beta, s, lambda, retired) <= 0.25e-5 * (1.0 + lambda)) break;
            }
        }
        return pass + 1;
    }

    double kkt_from_gram(const std::vector<double>& beta, const std::vector<double>& s,
                         double lambda, const std::vector<bool>* retired = nullptr) const {
        double worst = 0.0;
        for (i64 i = 0; i < c_; ++i) {
            if (dead_[static_cast<size_t>(i)]) continue;
            if (retired && (*retired)[static_cast<size_t>(i)]) continue;
            const double corr = (q_[static_cast<size_t>(i)] - s[static_cast<size_t>(i)]) / n_samples();
            const double bi = beta[static_cast<size_t>(i)];
            const double v = (bi == 0.0) ? std::max(0.0, std::abs(corr) - lambda)
                                         : std::abs(corr - lambda * (bi > 0 ? 1.0 : -1.0));
            worst = std::max(worst, v);
        }
        return worst;
    }

private:
    i64 c_ = 0;
    i64 n_samples_ = 0;
    MatD g_;
    std::vector<double> q_;
    std::vector<bool> dead_;
};

// Residual-based objective: one explicit pass over the data, so the
// stored objective matches a from-scratch recomputation to f64 rounding.
double exact_objective(const ChannelResponses& resp, const std::vector<double>& beta,
                       double lambda) {
    const i64 nn = resp.Y.rows * resp.Y.cols;
    double sq = 0.0;
    std::vector<double> r(static_cast<size_t>(nn));
    for (i64 p = 0; p < nn; ++p) r[static_cast<size_t>(p)] = resp.Y.v[static_cast<size_t>(p)];
    for (i64 i = 0; i < resp.c(); ++i) {
        const double bi = beta[static_cast<size_t>(i)];
        if (bi == 0.0) continue;
        const std::vector<float>& z = resp.Z[static_cast<size_t>(i)].v;
        for (i64 p = 0; p < nn; ++p) r[static_cast<size_t>(p)] -= bi * static_cast<double>(z[static_cast<size_t>(p)]);
    }
    for (i64 p = 0; p < nn; ++p) sq += r[static_cast<size_t>(p)] * r[static_cast<size_t>(p)];
    double l1 = 0.0;
    for (double b : beta) l1 += std::abs(b);
    return sq / (2.0 * static_cast<double>(resp.Y.rows)) + lambda * l1;
}

SelectionResult finalize(const ChannelResponses& resp, std::vector<double> beta,
                         double lambda, i64 iterations,
                         std::vector<std::pair<double, i64>> trace) {
    SelectionResult r;
    r.active = support(beta);
    r.beta = std::move(beta);
    r.lambda = lambda;
    r.objective = exact_objective(resp, r.beta, lambda);
    r.iterations = iterations;
    r.lambda_trace = std::move(trace);
    return r;
}

} // namespace

SelectionResult lasso_solve(const ChannelResponses& resp, double lambda,
                            const std::vector<double>* warm_start, double tol,
                            i64 max_passes) {
    LassoProblem p(resp);
    std::vector<double> beta = warm_start ? *warm_start : std::vector<double>();
    if (warm_start && static_cast<i64>(beta.size()) != resp.c()) {
        throw ArgumentError("lasso_solve: warm start length mismatch");
    }
    const i64 passes = p.solve(lambda, beta, tol, max_passes);
    return finalize(resp, std::move(beta), lambda, passes, {});
}

double lambda_max(const ChannelResponses& resp) {
    return LassoProblem(resp).lambda_max();
}

SelectionResult select_for_sparsity(const ChannelResponses& resp, i64 c_prime,
                                    const LassoSchedule& schedule, double tol) {
    const i64 c = resp.c();
    if (c_prime < 0 || c_prime > c) {
        throw ArgumentError("select_for_sparsity: c' must be in [0, c]");
    }
    LassoProblem p(resp);
    const double lmax = p.lambda_max();
    i64 iters = 0;
    std::vector<std::pair<double, i64>> trace;

    if (c_prime == 0 || lmax == 0.0) {
        std::vector<double> zero(static_cast<size_t>(c), 0.0);
        if (c_prime > 0) {
            // Y is orthogonal to every response; the unpenalized solution
            // is beta = 0 already.
            iters += p.solve(0.0, zero, tol, 1);
            trace.emplace_back(0.0, nnz(zero));
            return finalize(resp, std::move(zero), 0.0, iters, std::move(trace));
        }
        return finalize(resp, std::move(zero), lmax, 0, {});
    }

    // No-penalty solve; "in the beginning lambda = 0 and ||beta||_0 = c".
    std::vector<double> beta;
    iters += p.solve(0.0, beta, tol, 2000);
    trace.emplace_back(0.0, nnz(beta));
    if (nnz(beta) <= c_prime) {
        return finalize(resp, std::move(beta), 0.0, iters, std::move(trace));
    }

    // Geometric ramp until the sparsity bound is met. A channel zeroed at
    // some lambda is retired for the rest of the search (the alternating
    // algorithm zeroes its weights, so it could never return anyway);
    // this also makes the ramp's support sizes nonincreasing.
    std::vector<bool> retired(static_cast<size_t>(c), false);
    auto retire_zeros = [&](const std::vector<double>& b) {
        for (i64 i = 0; i < c; ++i) {
            if (b[static_cast<size_t>(i)] == 0.0) retired[static_cast<size_t>(i)] = true;
        }
    };
    retire_zeros(beta);

    double lam_lo = 0.0, lam_hi = -1.0;
    std::vector<double> beta_hi;
    std::vector<bool> retired_lo = retired;
    double lam = 1e-4 * lmax;
    for (i64 step = 0; step < schedule.max_steps; ++step) {
        retired_lo = retired;
        iters += p.solve(lam, beta, tol, 2000, &retired);
        trace.emplace_back(lam, nnz(beta));
        if (nnz(beta) <= c_prime) {
            lam_hi = lam;
            beta_hi = beta;
            break;
        }
        retire_zeros(beta);
        lam_lo = lam;
        lam = (lam >= lmax) ? lam * schedule.factor
                            : std::min(lam * schedule.factor, lmax * 1.0001);
    }
    if (lam_hi < 0.0) {
        // Ramp exhausted. At lambda >= lambda_max beta = 0 <= c'.
        lam_hi = lmax * 1.0001;
        beta_hi.assign(static_cast<size_t>(c), 0.0);
    }

    // Bisect for the largest support still within the bound, with the
    // retirement state frozen at the dense end of the bracket.
    std::vector<double> best_beta = beta_hi;
    double best_lam = lam_hi;
    i64 best_nnz = nnz(beta_hi);
    for (i64 t = 0; t < schedule.bisect_steps; ++t) {
        const double mid = 0.5 * (lam_lo + lam_hi);
        iters += p.solve(mid, beta, tol, 2000, &retired_lo);
        const i64 k = nnz(beta);
        if (k <= c_prime) {
            lam_hi = mid;
            if (k > best_nnz || (k == best_nnz && mid < best_lam)) {
                best_beta = beta;
                best_lam = mid;
                best_nnz = k;
            }
        } else {
            lam_lo = mid;
        }
    }
    return finalize(resp, std::move(best_beta), best_lam, iters, std::move(trace));
}

SelectionResult select_exactly(const ChannelResponses& resp, i64 c_prime,
                               const LassoSchedule& schedule, double tol) {
    SelectionResult r = select_for_sparsity(resp, c_prime, schedule, tol);
    if (static_cast<i64>(r.active.size()) == c_prime || c_prime == 0) return r;

    // The path jumped past c'. Complete the support from the densest
    // solution available: the unpenalized solve.
    const SelectionResult dense = lasso_solve(resp, 0.0, nullptr, tol);
    std::vector<std::pair<double, i64>> ranked; // (-|beta|, index)
    for (i64 i : dense.active) {
        if (r.beta[static_cast<size_t>(i)] == 0.0) {
            ranked.emplace_back(-std::abs(dense.beta[static_cast<size_t>(i)]), i);
        }
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<double> beta = r.beta;
    for (const auto& [negmag, i] : ranked) {
        if (nnz(beta) >= c_prime) break;
        beta[static_cast<size_t>(i)] = dense.beta[static_cast<size_t>(i)];
    }
    SelectionResult out = finalize(resp, std::move(beta), r.lambda, r.iterations,
                                   r.lambda_trace);
    return out;
}

double masked_rel_mse(const ChannelResponses& resp, std::span<const double> beta) {
    const i64 nn = resp.Y.rows * resp.Y.cols;
    double res = 0.0;
    std::vector<double> r(static_cast<size_t>(nn));
    for (i64 p = 0; p < nn; ++p) r[static_cast<size_t>(p)] = resp.Y.v[static_cast<size_t>(p)];
    for (i64 i = 0; i < resp.c(); ++i) {
        const double bi = beta[static_cast<size_t>(i)];
        if (bi == 0.0) continue;
        const std::vector<float>& z = resp.Z[static_cast<size_t>(i)].v;
        for (i64 p = 0; p < nn; ++p) r[static_cast<size_t>(p)] -= bi * static_cast<double>(z[static_cast<size_t>(p)]);
    }
    for (i64 p = 0; p < nn; ++p) res += r[static_cast<size_t>(p)] * r[static_cast<size_t>(p)];
    const double ynorm = frob_sq(resp.Y.v);
    return ynorm > 0.0 ? res / ynorm : 0.0;
}

double max_kkt_violation(const ChannelResponses& resp, std::span<const double> beta,
                         double lambda) {
    const i64 nn = resp.Y.rows * resp.Y.cols;
    std::vector<double> r(static_cast<size_t>(nn));
    for (i64 p = 0; p < nn; ++p) r[static_cast<size_t>(p)] = resp.Y.v[static_cast<size_t>(p)];
    for (i64 i = 0; i < resp.c(); ++i) {
        const double bi = beta[static_cast<size_t>(i)];
        if (bi == 0.0) continue;
        const std::vector<float>& z = resp.Z[static_cast<size_t>(i)].v;
        for (i64 p = 0; p < nn; ++p) r[static_cast<size_t>(p)] -= bi * static_cast<double>(z[static_cast<size_t>(p)]);
    }
    const double n = static_cast<double>(resp.Y.rows);
    double worst = 0.0;
    for (i64 i = 0; i < resp.c(); ++i) {
        const std::vector<float>& z = resp.Z[static_cast<size_t>(i)].v;
        double corr = 0.0;
        bool live = false;
        for (i64 p = 0; p < nn; ++p) {
            const double zv = static_cast<double>(z[static_cast<size_t>(p)]);
            corr += zv * r[static_cast<size_t>(p)];
            live = live || zv != 0.0;
        }
        if (!live) continue;
        corr /= n;
        const double bi = beta[static_cast<size_t>(i)];
        const double v = (bi == 0.0) ? std::max(0.0, std::abs(corr) - lambda)
                                     : std::abs(corr - lambda * (bi > 0 ? 1.0 : -1.0));
        worst = std::max(worst, v);
    }
    return worst;
}

} // namespace prunekit
