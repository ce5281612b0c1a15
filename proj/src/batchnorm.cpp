#include "prunekit/batchnorm.hpp"

#include <cmath>

namespace prunekit {

ModelGraph merge_batchnorm(const ModelGraph& g) {
    ModelGraph out;
    out.input_shape = g.input_shape;
    for (const Node& n : g.nodes) {
        if (n.kind != NodeKind::BatchNorm) {
            out.nodes.push_back(n);
            continue;
        }
        if (out.nodes.empty() || out.nodes.back().kind != NodeKind::Conv) {
            throw StructureError("batchnorm " + n.name +
                                 " is not immediately preceded by a conv");
        }
        Node& conv = out.nodes.back();
        const i64 n_out = conv.out_channels();
        if (static_cast<i64>(n.gamma.size()) != n_out ||
            static_cast<i64>(n.beta.size()) != n_out ||
            static_cast<i64>(n.mean.size()) != n_out ||
            static_cast<i64>(n.var.size()) != n_out) {
            throw ShapeError("batchnorm " + n.name + ": parameter length mismatch");
        }
        if (!conv.has_bias) {
            conv.bias.assign(static_cast<size_t>(n_out), 0.0f);
            conv.has_bias = true;
        }
        const i64 fsz = conv.weights.dims[1] * conv.weights.dims[2] * conv.weights.dims[3];
        for (i64 j = 0; j < n_out; ++j) {
            const double scale =
                static_cast<double>(n.gamma[j]) /
                std::sqrt(static_cast<double>(n.var[j]) + static_cast<double>(n.eps));
            float* w = conv.weights.data.data() + j * fsz;
            for (i64 p = 0; p < fsz; ++p) {
                w[p] = static_cast<float>(static_cast<double>(w[p]) * scale);
            }
            conv.bias[j] = static_cast<float>(
                (static_cast<double>(conv.bias[j]) - static_cast<double>(n.mean[j])) * scale +
                static_cast<double>(n.beta[j]));
        }
    }
    return out;
}

} // namespace prunekit
