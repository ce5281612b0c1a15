#include "prunekit/conv.hpp"

#include <cstring>
#include <vector>

#include "prunekit/linalg.hpp"

namespace prunekit {

ConvGeom conv_output_geom(i64 h, i64 w, i64 kh, i64 kw, i64 sh, i64 sw, i64 ph, i64 pw) {
    if (kh <= 0 || kw <= 0 || sh <= 0 || sw <= 0 || ph < 0 || pw < 0) {
        throw ShapeError("conv geometry: bad kernel/stride/pad");
    }
    if (kh > h + 2 * ph || kw > w + 2 * pw) {
        throw ShapeError("conv geometry: kernel larger than padded input");
    }
    return {(h + 2 * ph - kh) / sh + 1, (w + 2 * pw - kw) / sw + 1};
}

void im2col_row(const Tensor4& input, i64 img, i64 oy, i64 ox, i64 kh, i64 kw,
                i64 sh, i64 sw, i64 ph, i64 pw, float* row) {
    const i64 c = input.dims[1], h = input.dims[2], w = input.dims[3];
    const i64 y0 = oy * sh - ph;
    const i64 x0 = ox * sw - pw;
    i64 k = 0;
    for (i64 ch = 0; ch < c; ++ch) {
        const float* plane = input.plane(img, ch);
        for (i64 u = 0; u < kh; ++u) {
            const i64 y = y0 + u;
            if (y < 0 || y >= h) {
                for (i64 v = 0; v < kw; ++v) row[k++] = 0.0f;
                continue;
            }
            const float* line = plane + y * w;
            for (i64 v = 0; v < kw; ++v) {
                const i64 x = x0 + v;
                row[k++] = (x >= 0 && x < w) ? line[x] : 0.0f;
            }
        }
    }
}

MatF im2col(const Tensor4& input, i64 kh, i64 kw, i64 sh, i64 sw, i64 ph, i64 pw) {
    const i64 n = input.dims[0], c = input.dims[1];
    const auto [ho, wo] = conv_output_geom(input.dims[2], input.dims[3], kh, kw, sh, sw, ph, pw);
    MatF out(n * ho * wo, c * kh * kw);
    i64 r = 0;
    for (i64 img = 0; img < n; ++img) {
        for (i64 oy = 0; oy < ho; ++oy) {
            for (i64 ox = 0; ox < wo; ++ox) {
                im2col_row(input, img, oy, ox, kh, kw, sh, sw, ph, pw, out.row(r++));
            }
        }
    }
    return out;
}

Tensor4 conv_forward(const Node& conv, const Tensor4& input) {
    const Tensor4& wt = conv.weights;
    const i64 n_out = wt.dims[0], c = wt.dims[1], kh = wt.dims[2], kw = wt.dims[3];
    if (input.dims[1] != c) {
        throw ShapeError("conv " + conv.name + ": input has " +
                         std::to_string(input.dims[1]) + " channels, expected " +
                         std::to_string(c));
    }
    const i64 batch = input.dims[0];
    const auto [ho, wo] =
        conv_output_geom(input.dims[2], input.dims[3], kh, kw, conv.sh, conv.sw, conv.ph, conv.pw);

    // Weights reshaped to n x (c*kh*kw) are already contiguous; transpose
    // once so the GEMM streams rows of both operands.
    const i64 kdim = c * kh * kw;
    MatF wt_t(kdim, n_out);
    for (i64 j = 0; j < n_out; ++j) {
        const float* wrow = wt.data.data() + j * kdim;
        for (i64 p = 0; p < kdim; ++p) wt_t(p, j) = wrow[p];
    }

    Tensor4 out(batch, n_out, ho, wo);
    MatF patches(ho * wo, kdim);
    std::vector<float> rowbuf(static_cast<size_t>(ho * wo * n_out));
    for (i64 img = 0; img < batch; ++img) {
        i64 r = 0;
        for (i64 oy = 0; oy < ho; ++oy)
            for (i64 ox = 0; ox < wo; ++ox)
                im2col_row(input, img, oy, ox, kh, kw, conv.sh, conv.sw, conv.ph, conv.pw,
                           patches.row(r++));
        gemm_nn(patches.v.data(), ho * wo, kdim, wt_t.v.data(), n_out, rowbuf.data());
        // rowbuf is (ho*wo) x n_out; scatter to NCHW and add bias.
        for (i64 j = 0; j < n_out; ++j) {
            float* dst = out.plane(img, j);
            const float b = conv.has_bias ? conv.bias[j] : 0.0f;
            for (i64 p = 0; p < ho * wo; ++p) {
                dst[p] = rowbuf[p * n_out + j] + b;
            }
        }
    }
    return out;
}

} // namespace prunekit
