#pragma once

#include <span>
#include <utility>
#include <vector>

#include "prunekit/sampler.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

/// Least-squares refit of the layer weights over the selected channels.
/// w_prime is n x (c*kh*kw) in the beta-scaled basis of the solve, zero
/// outside the active column blocks.
struct ReconstructedWeights {
    MatF w_prime;
    double residual_rel = 0.0; // ||Y - X'W'^T||_F^2 / ||Y||_F^2, 0 when Y = 0
    double ridge_used = 0.0;
};

/// Minimizes ||Y - X'(W')^T||_F^2 with X' = [b_1 X_1 ... b_c X_c]
/// restricted to the active blocks, via Cholesky on the damped Gram
/// (damping ridge*tr(G)/k on the diagonal). A singular Gram at ridge 0
/// falls back to ridge 1e-8, reported in ridge_used.
ReconstructedWeights reconstruct(const SampleSet& samples, std::span<const double> beta,
                                 std::span<const i64> active, double ridge = 0.0);

/// beta_i <- beta_i * ||W_i||_F, W_i <- W_i / ||W_i||_F for every channel
/// with nonzero norm; zero-norm channels get beta_i = 0.
void renormalize(std::vector<double>& beta, Tensor4& weights);

/// Final weights beta_i * W_i with zero-beta channels dropped. Returns
/// the shrunk tensor (n x c' x kh x kw) and the retained channel indices.
std::pair<Tensor4, std::vector<i64>> fold_final_weights(std::span<const double> beta,
                                                        const Tensor4& weights);

/// Reshapes an n x (c*kh*kw) weight matrix back to n x c x kh x kw.
Tensor4 weights_from_matrix(const MatF& w, i64 c, i64 kh, i64 kw);

} // namespace prunekit
