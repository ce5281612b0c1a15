#pragma once

#include <span>

#include "prunekit/tensor.hpp"

namespace prunekit {

// All kernels here accumulate in f64 with a fixed reduction order, so
// results are bit-identical across runs regardless of vectorization.

/// C[M x N] = A[M x K] * B[K x N], f32 operands, f64 accumulation.
void gemm_nn(const float* a, i64 m, i64 k, const float* b, i64 n, float* c);

/// C = A * B for row-major MatF.
MatF matmul(const MatF& a, const MatF& b);

/// C = A * B^T. B is given row-major N x K.
MatF matmul_nt(const MatF& a, const MatF& b);

/// X^T X in f64 (symmetric, fully filled).
MatD gram(const MatF& x);

/// X^T Y in f64.
MatD at_b(const MatF& x, const MatF& y);

/// Sequential f64 dot product of two f32 spans.
double dot_f64(std::span<const float> a, std::span<const float> b);

/// Sum of squares in f64.
double frob_sq(std::span<const float> a);

/// In-place Cholesky A = L L^T, lower triangle written. Returns false if
/// a pivot falls to or below pivot_floor (matrix not positive definite
/// to working precision).
bool cholesky(MatD& a, double pivot_floor = 0.0);

/// Solves (L L^T) X = B in place given the factor from cholesky().
void cholesky_solve(const MatD& l, MatD& b);

} // namespace prunekit
