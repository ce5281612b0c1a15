#pragma once

#include <span>
#include <utility>
#include <vector>

#include "prunekit/sampler.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

/// Per-channel response matrices Z_i = X_i W_i^T (each N_s x n) and the
/// shared target Y. The beta subproblem is a c-variable LASSO over these.
struct ChannelResponses {
    std::vector<MatF> Z;
    MatF Y;

    i64 c() const { return static_cast<i64>(Z.size()); }
    i64 rows() const { return Y.rows; }
};

/// Z_i built from the sample set and the given filter weights.
ChannelResponses build_responses(const SampleSet& s, const Tensor4& weights);

struct SelectionResult {
    std::vector<double> beta;
    std::vector<i64> active;     // sorted indices with beta != 0
    double lambda = 0.0;
    double objective = 0.0;      // (1/2N)*||Y - sum beta_i Z_i||_F^2 + lambda*||beta||_1
    i64 iterations = 0;          // coordinate-descent passes across all solves
    /// (lambda, ||beta||_0) for each step of the geometric ramp.
    std::vector<std::pair<double, i64>> lambda_trace;
};

/// Geometric lambda ramp parameters for select_for_sparsity.
struct LassoSchedule {
    double factor = 1.3;
    i64 max_steps = 100;
    i64 bisect_steps = 20;
};

/// Cyclic coordinate descent on the vectorized LASSO
///   min (1/2N) ||Y - sum_i beta_i Z_i||_F^2 + lambda ||beta||_1
/// with Gram and correlation terms precomputed once. Converged when the
/// largest coordinate update in a pass is below tol.
SelectionResult lasso_solve(const ChannelResponses& resp, double lambda,
                            const std::vector<double>* warm_start = nullptr,
                            double tol = 1e-10, i64 max_passes = 2000);

/// Smallest lambda for which beta = 0 is optimal: max_i |<Z_i, Y>| / N.
double lambda_max(const ChannelResponses& resp);

/// Ramps lambda geometrically from 1e-4*lambda_max until ||beta||_0 <= c',
/// warm-starting each solve, then bisects the final bracket for the
/// largest active set not exceeding c'.
SelectionResult select_for_sparsity(const ChannelResponses& resp, i64 c_prime,
                                    const LassoSchedule& schedule = {},
                                    double tol = 1e-10);

/// Like select_for_sparsity but guarantees exactly c' active channels
/// (when c' <= number of live channels) by completing from the largest
/// |beta| of the bracketing denser solution if the path jumps past c'.
SelectionResult select_exactly(const ChannelResponses& resp, i64 c_prime,
                               const LassoSchedule& schedule = {}, double tol = 1e-10);

/// Largest KKT violation of beta for the given lambda, computed from an
/// explicitly formed residual. At an optimum this is ~0.
double max_kkt_violation(const ChannelResponses& resp, std::span<const double> beta,
                         double lambda);

/// ||Y - sum_i beta_i Z_i||_F^2 / ||Y||_F^2 (0 when Y = 0): the error of
/// beta-masked responses without any weight refit.
double masked_rel_mse(const ChannelResponses& resp, std::span<const double> beta);

} // namespace prunekit
