#include "prunekit/forward.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "prunekit/conv.hpp"

namespace prunekit {

static Tensor4 relu(const Tensor4& x) {
    Tensor4 y = x;
    for (float& v : y.data) v = v > 0.0f ? v : 0.0f;
    return y;
}

static Tensor4 pool(const Node& n, const Tensor4& x) {
    const bool is_max = n.kind == NodeKind::MaxPool;
    const i64 batch = x.dims[0], c = x.dims[1], h = x.dims[2], w = x.dims[3];
    const auto [ho, wo] = conv_output_geom(h, w, n.kh, n.kw, n.sh, n.sw, n.ph, n.pw);
    Tensor4 y(batch, c, ho, wo);
    for (i64 img = 0; img < batch; ++img) {
        for (i64 ch = 0; ch < c; ++ch) {
            const float* src = x.plane(img, ch);
            float* dst = y.plane(img, ch);
            for (i64 oy = 0; oy < ho; ++oy) {
                for (i64 ox = 0; ox < wo; ++ox) {
                    const i64 y0 = oy * n.sh - n.ph, x0 = ox * n.sw - n.pw;
                    if (is_max) {
                        float m = -std::numeric_limits<float>::infinity();
                        for (i64 u = 0; u < n.kh; ++u) {
                            const i64 yy = y0 + u;
                            if (yy < 0 || yy >= h) continue;
                            for (i64 v = 0; v < n.kw; ++v) {
                                const i64 xx = x0 + v;
                                if (xx < 0 || xx >= w) continue;
                                m = std::max(m, src[yy * w + xx]);
                            }
                        }
                        // All-padding window: treat as zero.
                        dst[oy * wo + ox] = std::isfinite(m) ? m : 0.0f;
                    } else {
                        // Average over the full kernel area, zeros in padding.
                        double s = 0.0;
                        for (i64 u = 0; u < n.kh; ++u) {
                            const i64 yy = y0 + u;
                            if (yy < 0 || yy >= h) continue;
                            for (i64 v = 0; v < n.kw; ++v) {
                                const i64 xx = x0 + v;
                                if (xx < 0 || xx >= w) continue;
                                s += src[yy * w + xx];
                            }
                        }
                        dst[oy * wo + ox] =
                            static_cast<float>(s / static_cast<double>(n.kh * n.kw));
                    }
                }
            }
        }
    }
    return y;
}

static Tensor4 batchnorm(const Node& n, const Tensor4& x) {
    const i64 c = x.dims[1];
    if (static_cast<i64>(n.gamma.size()) != c) {
        throw ShapeError("batchnorm " + n.name + ": parameter length mismatch");
    }
    Tensor4 y = x;
    const i64 plane_sz = x.dims[2] * x.dims[3];
    for (i64 img = 0; img < x.dims[0]; ++img) {
        for (i64 ch = 0; ch < c; ++ch) {
            const double scale =
                static_cast<double>(n.gamma[ch]) /
                std::sqrt(static_cast<double>(n.var[ch]) + static_cast<double>(n.eps));
            const double shift =
                static_cast<double>(n.beta[ch]) - static_cast<double>(n.mean[ch]) * scale;
            float* p = y.plane(img, ch);
            for (i64 i = 0; i < plane_sz; ++i) {
                p[i] = static_cast<float>(static_cast<double>(p[i]) * scale + shift);
            }
        }
    }
    return y;
}

static Tensor4 sample_channels(const Node& n, const Tensor4& x) {
    Tensor4 y(x.dims[0], static_cast<i64>(n.indices.size()), x.dims[2], x.dims[3]);
    const size_t plane_bytes = static_cast<size_t>(x.dims[2] * x.dims[3]) * sizeof(float);
    for (i64 img = 0; img < x.dims[0]; ++img) {
        for (size_t k = 0; k < n.indices.size(); ++k) {
            std::memcpy(y.plane(img, static_cast<i64>(k)), x.plane(img, n.indices[k]),
                        plane_bytes);
        }
    }
    return y;
}

static void run(const ModelGraph& g, const Tensor4& input, std::span<const Tap> taps,
                std::span<Tensor4> tap_out, Tensor4* output) {
    if (input.dims[1] != g.input_shape.c || input.dims[2] != g.input_shape.h ||
        input.dims[3] != g.input_shape.w) {
        throw ShapeError("forward: input does not match model input shape");
    }
    size_t unresolved = taps.size();
    std::vector<bool> done(taps.size(), false);
    auto capture = [&](const std::string& name, bool at_input, const Tensor4& t) {
        for (size_t i = 0; i < taps.size(); ++i) {
            if (!done[i] && taps[i].node == name && taps[i].at_input == at_input) {
                tap_out[i] = t;
                done[i] = true;
                --unresolved;
            }
        }
    };

    Tensor4 cur = input;
    std::vector<Tensor4> shortcut;
    for (const Node& n : g.nodes) {
        if (!output && unresolved == 0) return;
        capture(n.name, true, cur);
        switch (n.kind) {
            case NodeKind::Conv: cur = conv_forward(n, cur); break;
            case NodeKind::Relu: cur = relu(cur); break;
            case NodeKind::MaxPool:
            case NodeKind::AvgPool: cur = pool(n, cur); break;
            case NodeKind::BatchNorm: cur = batchnorm(n, cur); break;
            case NodeKind::ChannelSampler: cur = sample_channels(n, cur); break;
            case NodeKind::ResidualBegin: shortcut.push_back(cur); break;
            case NodeKind::ResidualAdd: {
                if (shortcut.empty()) {
                    throw StructureError("residual add " + n.name + " without begin");
                }
                Tensor4 sc = std::move(shortcut.back());
                shortcut.pop_back();
                if (!sc.same_dims(cur)) {
                    throw ShapeError("residual add " + n.name + ": shape mismatch");
                }
                for (size_t i = 0; i < cur.data.size(); ++i) cur.data[i] += sc.data[i];
                break;
            }
        }
        capture(n.name, false, cur);
    }
    for (size_t i = 0; i < taps.size(); ++i) {
        if (!done[i]) throw LookupError("tap node not found: " + taps[i].node);
    }
    if (output) *output = std::move(cur);
}

Tensor4 forward(const ModelGraph& g, const Tensor4& input) {
    Tensor4 out;
    run(g, input, {}, {}, &out);
    out.check_finite("forward output");
    return out;
}

Tensor4 forward_tap(const ModelGraph& g, const Tensor4& input, const Tap& tap) {
    Tensor4 captured;
    run(g, input, std::span<const Tap>(&tap, 1), std::span<Tensor4>(&captured, 1), nullptr);
    return captured;
}

void forward_taps(const ModelGraph& g, const Tensor4& input, std::span<const Tap> taps,
                  std::span<Tensor4> out) {
    if (taps.size() != out.size()) throw ArgumentError("forward_taps: span size mismatch");
    run(g, input, taps, out, nullptr);
}

} // namespace prunekit
