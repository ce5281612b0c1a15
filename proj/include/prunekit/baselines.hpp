#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "prunekit/lasso.hpp"
#include "prunekit/sampler.hpp"

namespace prunekit {

enum class Strategy { Lasso, FirstK, MaxResponse, BruteForce };
const char* strategy_name(Strategy s);

struct StrategyOutcome {
    Strategy strategy = Strategy::Lasso;
    i64 c = 0;
    i64 c_prime = 0;
    std::vector<i64> active;
    double relative_mse = 0.0; // after the shared LSQ reconstruction
    double wall_ms = 0.0;
};

/// {0, ..., c'-1}.
std::vector<i64> select_first_k(i64 c, i64 c_prime);

/// The c' channels with the largest absolute weight sum over their filter
/// slices; ties go to the lower index.
std::vector<i64> select_max_response(const Tensor4& weights, i64 c_prime);

/// Exhaustive oracle: exact least squares on every C(c, c') subset,
/// global minimizer returned (lexicographically first on ties). Refuses
/// when the subset count exceeds 10^6.
StrategyOutcome brute_force_select(const SampleSet& samples, i64 c_prime,
                                   double ridge = 0.0, i64 threads = 1);

/// Number of subsets the brute-force guard allows.
inline constexpr i64 kBruteForceGuard = 1000000;
bool brute_force_feasible(i64 c, i64 c_prime);

/// Runs every strategy at every c' and reconstructs each selection the
/// same way, so rows differ only through the index set. Rows are grouped
/// by c' in the order given, strategies in enum order.
std::vector<StrategyOutcome> compare_strategies(const SampleSet& samples,
                                                const Tensor4& weights,
                                                std::span<const i64> c_primes,
                                                double ridge = 0.0,
                                                bool include_brute_force = true,
                                                const LassoSchedule& schedule = {});

/// CSV with header strategy,c,c_prime,relative_mse,wall_ms.
void write_strategy_csv(std::ostream& os, std::span<const StrategyOutcome> rows);

} // namespace prunekit
