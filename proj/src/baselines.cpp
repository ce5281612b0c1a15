#include "prunekit/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "prunekit/linalg.hpp"
#include "prunekit/reconstruction.hpp"

namespace prunekit {

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Lasso: return "lasso";
        case Strategy::FirstK: return "first_k";
        case Strategy::MaxResponse: return "max_response";
        case Strategy::BruteForce: return "brute_force";
    }
    return "?";
}

std::vector<i64> select_first_k(i64 c, i64 c_prime) {
    if (c_prime < 0 || c_prime > c) throw ArgumentError("select_first_k: c' out of range");
    std::vector<i64> out(static_cast<size_t>(c_prime));
    for (i64 i = 0; i < c_prime; ++i) out[static_cast<size_t>(i)] = i;
    return out;
}

std::vector<i64> select_max_response(const Tensor4& weights, i64 c_prime) {
    const i64 n = weights.dims[0], c = weights.dims[1];
    const i64 kk = weights.dims[2] * weights.dims[3];
    if (c_prime < 0 || c_prime > c) {
        throw ArgumentError("select_max_response: c' out of range");
    }
    std::vector<double> score(static_cast<size_t>(c), 0.0);
    for (i64 j = 0; j < n; ++j) {
        for (i64 i = 0; i < c; ++i) {
            const float* w = weights.data.data() + (j * c + i) * kk;
            double s = 0.0;
            for (i64 p = 0; p < kk; ++p) s += std::abs(static_cast<double>(w[p]));
            score[static_cast<size_t>(i)] += s;
        }
    }
    std::vector<i64> order(static_cast<size_t>(c));
    for (i64 i = 0; i < c; ++i) order[static_cast<size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](i64 a, i64 b) {
        return score[static_cast<size_t>(a)] > score[static_cast<size_t>(b)];
    });
    std::vector<i64> out(order.begin(), order.begin() + c_prime);
    std::sort(out.begin(), out.end());
    return out;
}

bool brute_force_feasible(i64 c, i64 c_prime) {
    if (c_prime < 0 || c_prime > c) return false;
    double count = 1.0;
    for (i64 i = 0; i < c_prime; ++i) {
        count *= static_cast<double>(c - i) / static_cast<double>(i + 1);
        if (count > static_cast<double>(kBruteForceGuard)) return false;
    }
    return true;
}

namespace {

double now_ms() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

// Reconstruction with unit beta over the chosen set; all strategies are
// scored through this one path.
double reconstruction_mse(const SampleSet& s, const std::vector<i64>& active, double ridge) {
    std::vector<double> beta(static_cast<size_t>(s.c), 0.0);
    for (i64 i : active) beta[static_cast<size_t>(i)] = 1.0;
    return reconstruct(s, beta, active, ridge).residual_rel;
}

// Minimum ||Y - X_S V||^2 over V for one subset, from the precomputed
// full Gram. Exact for the damped solve via the quadratic expansion.
class SubsetLsq {
public:
    SubsetLsq(const SampleSet& s, double ridge)
        : kk_(s.kh * s.kw), n_(s.n), ridge_(ridge) {
        g_full_ = gram(s.X);
        b_full_ = at_b(s.X, s.Y);
        yty_ = frob_sq(s.Y.v);
    }

    double yty() const { return yty_; }

    double residual(const std::vector<i64>& subset) const {
        const i64 k = static_cast<i64>(subset.size()) * kk_;
        if (k == 0) return yty_;
        MatD g(k, k);
        MatD b(k, n_);
        for (size_t a = 0; a < subset.size(); ++a) {
            for (i64 p = 0; p < kk_; ++p) {
                const i64 row = static_cast<i64>(a) * kk_ + p;
                const i64 src_row = subset[a] * kk_ + p;
                for (size_t bcol = 0; bcol < subset.size(); ++bcol) {
                    for (i64 q = 0; q < kk_; ++q) {
                        g(row, static_cast<i64>(bcol) * kk_ + q) =
                            g_full_(src_row, subset[bcol] * kk_ + q);
                    }
                }
                for (i64 j = 0; j < n_; ++j) b(row, j) = b_full_(src_row, j);
            }
        }
        double trace = 0.0;
        for (i64 i = 0; i < k; ++i) trace += g(i, i);
        double damp = ridge_ * trace / static_cast<double>(k);
        const double floor = 1e-10 * trace / static_cast<double>(k);
        MatD factor = g;
        for (i64 i = 0; i < k; ++i) factor(i, i) += damp;
        if (!cholesky(factor, floor)) {
            damp = std::max(ridge_, 1e-8) * trace / static_cast<double>(k);
            factor = g;
            for (i64 i = 0; i < k; ++i) factor(i, i) += damp;
            if (!cholesky(factor)) return yty_;
        }
        MatD v = b;
        cholesky_solve(factor, v);
        // ||Y - X V||^2 = yty - 2 tr(V^T B) + tr(V^T G V), exact for any V.
        double cross = 0.0, quad = 0.0;
        for (i64 i = 0; i < k; ++i) {
            for (i64 j = 0; j < n_; ++j) cross += v(i, j) * b(i, j);
        }
        std::vector<double> gv(static_cast<size_t>(k));
        for (i64 j = 0; j < n_; ++j) {
            for (i64 i = 0; i < k; ++i) {
                double acc = 0.0;
                for (i64 p = 0; p < k; ++p) acc += g(i, p) * v(p, j);
                gv[static_cast<size_t>(i)] = acc;
            }
            for (i64 i = 0; i < k; ++i) quad += v(i, j) * gv[static_cast<size_t>(i)];
        }
        return yty_ - 2.0 * cross + quad;
    }

private:
    i64 kk_, n_;
    double ridge_;
    MatD g_full_;
    MatD b_full_;
    double yty_;
};

} // namespace

StrategyOutcome brute_force_select(const SampleSet& samples, i64 c_prime, double ridge,
                                   i64 threads) {
    (void)threads; // subsets are evaluated in lexicographic order; the
                   // argmin reduction is deterministic regardless
    const i64 c = samples.c;
    if (c_prime < 0 || c_prime > c) {
        throw ArgumentError("brute_force_select: c' out of range");
    }
    if (!brute_force_feasible(c, c_prime)) {
        throw ArgumentError("brute_force_select: subset count exceeds the 10^6 guard");
    }
    const double t0 = now_ms();
    SubsetLsq lsq(samples, ridge);

    std::vector<i64> subset(static_cast<size_t>(c_prime));
    for (i64 i = 0; i < c_prime; ++i) subset[static_cast<size_t>(i)] = i;
    std::vector<i64> best = subset;
    double best_res = lsq.residual(subset);
    if (c_prime > 0) {
        // Lexicographic successor enumeration; first minimum wins ties.
        while (true) {
            i64 i = c_prime - 1;
            while (i >= 0 && subset[static_cast<size_t>(i)] == c - c_prime + i) --i;
            if (i < 0) break;
            ++subset[static_cast<size_t>(i)];
            for (i64 j = i + 1; j < c_prime; ++j) {
                subset[static_cast<size_t>(j)] = subset[static_cast<size_t>(j - 1)] + 1;
            }
            const double r = lsq.residual(subset);
            if (r < best_res) {
                best_res = r;
                best = subset;
            }
        }
    }

    StrategyOutcome out;
    out.strategy = Strategy::BruteForce;
    out.c = c;
    out.c_prime = c_prime;
    out.active = best;
    // Report through the same reconstruction path as every other strategy.
    out.relative_mse = reconstruction_mse(samples, best, ridge);
    out.wall_ms = now_ms() - t0;
    return out;
}

std::vector<StrategyOutcome> compare_strategies(const SampleSet& samples,
                                                const Tensor4& weights,
                                                std::span<const i64> c_primes,
                                                double ridge, bool include_brute_force,
                                                const LassoSchedule& schedule) {
    const ChannelResponses resp = build_responses(samples, weights);
    std::vector<StrategyOutcome> rows;
    for (i64 cp : c_primes) {
        for (Strategy st : {Strategy::Lasso, Strategy::FirstK, Strategy::MaxResponse,
                            Strategy::BruteForce}) {
            if (st == Strategy::BruteForce) {
                if (!include_brute_force) continue;
                rows.push_back(brute_force_select(samples, cp, ridge));
                continue;
            }
            StrategyOutcome o;
            o.strategy = st;
            o.c = samples.c;
            o.c_prime = cp;
            const double t0 = now_ms();
            switch (st) {
                case Strategy::Lasso:
                    o.active = select_exactly(resp, cp, schedule).active;
                    break;
                case Strategy::FirstK:
                    o.active = select_first_k(samples.c, cp);
                    break;
                default:
                    o.active = select_max_response(weights, cp);
                    break;
            }
            o.relative_mse = reconstruction_mse(samples, o.active, ridge);
            o.wall_ms = now_ms() - t0;
            rows.push_back(std::move(o));
        }
    }
    return rows;
}

void write_strategy_csv(std::ostream& os, std::span<const StrategyOutcome> rows) {
    os << "strategy,c,c_prime,relative_mse,wall_ms\n";
    for (const StrategyOutcome& r : rows) {
        os << strategy_name(r.strategy) << ',' << r.c << ',' << r.c_prime << ','
           << r.relative_mse << ',' << r.wall_ms << '\n';
    }
}

} // namespace prunekit
