#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "prunekit/errors.hpp"

namespace prunekit {

using i64 = std::int64_t;
using u64 = std::uint64_t;

/// Dense 4-D array of f32 in row-major d0 x d1 x d2 x d3 layout.
/// Activations use N x C x H x W, conv weights n x c x kh x kw.
struct Tensor4 {
    std::array<i64, 4> dims{0, 0, 0, 0};
    std::vector<float> data;

    Tensor4() = default;
    Tensor4(i64 d0, i64 d1, i64 d2, i64 d3);

    i64 size() const { return dims[0] * dims[1] * dims[2] * dims[3]; }

    float& at(i64 a, i64 b, i64 c, i64 d) {
        return data[((a * dims[1] + b) * dims[2] + c) * dims[3] + d];
    }
    float at(i64 a, i64 b, i64 c, i64 d) const {
        return data[((a * dims[1] + b) * dims[2] + c) * dims[3] + d];
    }

    /// Pointer to the start of slice [a][b] (a dims[2] x dims[3] plane).
    float* plane(i64 a, i64 b) {
        return data.data() + (a * dims[1] + b) * dims[2] * dims[3];
    }
    const float* plane(i64 a, i64 b) const {
        return data.data() + (a * dims[1] + b) * dims[2] * dims[3];
    }

    bool same_dims(const Tensor4& o) const { return dims == o.dims; }

    /// Throws NumericError if any element is NaN or Inf.
    void check_finite(const char* what) const;
};

/// Row-major f32 matrix. Used for sample matrices X, Y and channel
/// responses Z_i; solver internals accumulate in f64 (see linalg.hpp).
struct MatF {
    i64 rows = 0, cols = 0;
    std::vector<float> v;

    MatF() = default;
    MatF(i64 r, i64 c) : rows(r), cols(c), v(static_cast<size_t>(r * c), 0.0f) {}

    float& operator()(i64 r, i64 c) { return v[r * cols + c]; }
    float operator()(i64 r, i64 c) const { return v[r * cols + c]; }
    float* row(i64 r) { return v.data() + r * cols; }
    const float* row(i64 r) const { return v.data() + r * cols; }

    void check_finite(const char* what) const;
};

/// Row-major f64 matrix for Gram matrices and normal-equation solves.
struct MatD {
    i64 rows = 0, cols = 0;
    std::vector<double> v;

    MatD() = default;
    MatD(i64 r, i64 c) : rows(r), cols(c), v(static_cast<size_t>(r * c), 0.0) {}

    double& operator()(i64 r, i64 c) { return v[r * cols + c]; }
    double operator()(i64 r, i64 c) const { return v[r * cols + c]; }
    double* row(i64 r) { return v.data() + r * cols; }
    const double* row(i64 r) const { return v.data() + r * cols; }
};

} // namespace prunekit
