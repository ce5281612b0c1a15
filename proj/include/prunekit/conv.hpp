#pragma once

#include "prunekit/graph.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

struct ConvGeom {
    i64 ho = 0, wo = 0;
};

ConvGeom conv_output_geom(i64 h, i64 w, i64 kh, i64 kw, i64 sh, i64 sw, i64 ph, i64 pw);

/// Extracts input patches as matrix rows: one row per (image, output y,
/// output x), row length c*kh*kw. Columns are channel-major, then kernel
/// row, then kernel column, so channel i occupies the contiguous block
/// [i*kh*kw, (i+1)*kh*kw). Padded positions contribute zeros.
MatF im2col(const Tensor4& input, i64 kh, i64 kw, i64 sh, i64 sw, i64 ph, i64 pw);

/// Writes the single patch row for output position (oy, ox) of image img.
/// `row` must hold c*kh*kw floats.
void im2col_row(const Tensor4& input, i64 img, i64 oy, i64 ox, i64 kh, i64 kw,
                i64 sh, i64 sw, i64 ph, i64 pw, float* row);

/// GEMM convolution: im2col patches times reshaped weights, plus bias.
Tensor4 conv_forward(const Node& conv, const Tensor4& input);

} // namespace prunekit
