#include "prunekit/tensor.hpp"

#include <cmath>
#include <string>

namespace prunekit {

Tensor4::Tensor4(i64 d0, i64 d1, i64 d2, i64 d3) : dims{d0, d1, d2, d3} {
    if (d0 < 0 || d1 < 0 || d2 < 0 || d3 < 0) {
        throw ShapeError("Tensor4: negative dimension");
    }
    data.assign(static_cast<size_t>(d0 * d1 * d2 * d3), 0.0f);
}

static void check_finite_span(const float* p, size_t n, const char* what) {
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(p[i])) {
            throw NumericError(std::string(what) + ": non-finite value at index " +
                               std::to_string(i));
        }
    }
}

void Tensor4::check_finite(const char* what) const {
    check_finite_span(data.data(), data.size(), what);
}

void MatF::check_finite(const char* what) const {
    check_finite_span(v.data(), v.size(), what);
}

} // namespace prunekit
