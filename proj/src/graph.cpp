#include "prunekit/graph.hpp"

#include <algorithm>

namespace prunekit {

const char* node_kind_name(NodeKind k) {
    switch (k) {
        case NodeKind::Conv: return "conv";
        case NodeKind::Relu: return "relu";
        case NodeKind::MaxPool: return "maxpool";
        case NodeKind::AvgPool: return "avgpool";
        case NodeKind::BatchNorm: return "batchnorm";
        case NodeKind::ChannelSampler: return "channel_sampler";
        case NodeKind::ResidualBegin: return "residual_begin";
        case NodeKind::ResidualAdd: return "residual_add";
    }
    return "?";
}

NodeKind node_kind_from_name(const std::string& s) {
    if (s == "conv") return NodeKind::Conv;
    if (s == "relu") return NodeKind::Relu;
    if (s == "maxpool") return NodeKind::MaxPool;
    if (s == "avgpool") return NodeKind::AvgPool;
    if (s == "batchnorm") return NodeKind::BatchNorm;
    if (s == "channel_sampler") return NodeKind::ChannelSampler;
    if (s == "residual_begin") return NodeKind::ResidualBegin;
    if (s == "residual_add") return NodeKind::ResidualAdd;
    throw ParseError("unknown node type: " + s);
}

i64 ModelGraph::find(const std::string& name) const {
    for (i64 i = 0; i < static_cast<i64>(nodes.size()); ++i) {
        if (nodes[i].name == name) return i;
    }
    throw LookupError("node not found: " + name);
}

bool ModelGraph::contains(const std::string& name) const {
    return std::any_of(nodes.begin(), nodes.end(),
                       [&](const Node& n) { return n.name == name; });
}

static i64 conv_out_extent(i64 in, i64 k, i64 stride, i64 pad) {
    return (in + 2 * pad - k) / stride + 1;
}

ShapeCHW node_output_shape(const Node& n, const ShapeCHW& in) {
    switch (n.kind) {
        case NodeKind::Conv: {
            if (n.in_channels() != in.c) {
                throw ShapeError("conv " + n.name + ": input has " +
                                 std::to_string(in.c) + " channels, weights expect " +
                                 std::to_string(n.in_channels()));
            }
            const i64 kh = n.weights.dims[2], kw = n.weights.dims[3];
            if (kh > in.h + 2 * n.ph || kw > in.w + 2 * n.pw) {
                throw ShapeError("conv " + n.name + ": kernel larger than padded input");
            }
            return {n.out_channels(), conv_out_extent(in.h, kh, n.sh, n.ph),
                    conv_out_extent(in.w, kw, n.sw, n.pw)};
        }
        case NodeKind::MaxPool:
        case NodeKind::AvgPool: {
            if (n.kh > in.h + 2 * n.ph || n.kw > in.w + 2 * n.pw) {
                throw ShapeError("pool " + n.name + ": kernel larger than padded input");
            }
            return {in.c, conv_out_extent(in.h, n.kh, n.sh, n.ph),
                    conv_out_extent(in.w, n.kw, n.sw, n.pw)};
        }
        case NodeKind::BatchNorm:
            if (static_cast<i64>(n.gamma.size()) != in.c) {
                throw ShapeError("batchnorm " + n.name + ": parameter length mismatch");
            }
            return in;
        case NodeKind::ChannelSampler:
            return {static_cast<i64>(n.indices.size()), in.h, in.w};
        case NodeKind::Relu:
        case NodeKind::ResidualBegin:
        case NodeKind::ResidualAdd:
            return in;
    }
    return in;
}

ShapeCHW ModelGraph::shape_before(i64 idx) const {
    ShapeCHW s = input_shape;
    for (i64 i = 0; i < idx; ++i) s = node_output_shape(nodes[i], s);
    return s;
}

void ModelGraph::validate() const {
    if (input_shape.c <= 0 || input_shape.h <= 0 || input_shape.w <= 0) {
        throw ShapeError("model input shape must be positive");
    }
    ShapeCHW s = input_shape;
    std::vector<std::pair<std::string, ShapeCHW>> shortcut; // begin name, shape
    for (const Node& n : nodes) {
        switch (n.kind) {
            case NodeKind::Conv: {
                if (n.weights.dims[0] <= 0 || n.weights.dims[1] <= 0 ||
                    n.weights.dims[2] <= 0 || n.weights.dims[3] <= 0) {
                    throw ShapeError("conv " + n.name + ": empty weights");
                }
                if (static_cast<i64>(n.weights.data.size()) != n.weights.size()) {
                    throw ShapeError("conv " + n.name + ": weight data length mismatch");
                }
                if (n.has_bias &&
                    static_cast<i64>(n.bias.size()) != n.out_channels()) {
                    throw ShapeError("conv " + n.name + ": bias length mismatch");
                }
                if (n.sh < 1 || n.sw < 1 || n.ph < 0 || n.pw < 0) {
                    throw ShapeError("conv " + n.name + ": bad stride/pad");
                }
                break;
            }
            case NodeKind::ChannelSampler: {
                if (n.indices.empty()) {
                    throw StructureError("channel sampler " + n.name + ": empty index list");
                }
                for (size_t i = 0; i < n.indices.size(); ++i) {
                    if (n.indices[i] < 0 || n.indices[i] >= s.c) {
                        throw StructureError("channel sampler " + n.name +
                                             ": index out of range");
                    }
                    if (i > 0 && n.indices[i] <= n.indices[i - 1]) {
                        throw StructureError("channel sampler " + n.name +
                                             ": indices not strictly increasing");
                    }
                }
                break;
            }
            case NodeKind::ResidualBegin:
                shortcut.emplace_back(n.name, s);
                break;
            case NodeKind::ResidualAdd: {
                if (shortcut.empty()) {
                    throw StructureError("residual add " + n.name + " without begin");
                }
                auto [bname, bshape] = shortcut.back();
                shortcut.pop_back();
                if (!n.begin_name.empty() && n.begin_name != bname) {
                    throw StructureError("residual add " + n.name +
                                         " does not match begin " + bname);
                }
                if (!(bshape == s)) {
                    throw ShapeError("residual add " + n.name +
                                     ": branch and shortcut shapes differ");
                }
                break;
            }
            default:
                break;
        }
        s = node_output_shape(n, s);
    }
    if (!shortcut.empty()) {
        throw StructureError("residual begin " + shortcut.back().first +
                             " has no matching add");
    }
    // Names of conv/sampler/residual nodes must be unique for lookup.
    for (size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].name.empty()) continue;
        for (size_t j = i + 1; j < nodes.size(); ++j) {
            if (nodes[j].name == nodes[i].name) {
                throw StructureError("duplicate node name: " + nodes[i].name);
            }
        }
    }
}

static bool channelwise(NodeKind k) {
    return k == NodeKind::Relu || k == NodeKind::MaxPool || k == NodeKind::AvgPool ||
           k == NodeKind::BatchNorm;
}

ConvContext analyze_conv_input(const ModelGraph& g, i64 conv_idx) {
    if (g.nodes[conv_idx].kind != NodeKind::Conv) {
        throw ArgumentError("analyze_conv_input: node is not a conv");
    }
    ConvContext ctx;
    i64 i = conv_idx - 1;
    if (i >= 0 && g.nodes[i].kind == NodeKind::ChannelSampler) {
        ctx.sampler_before = i;
        --i;
    }
    for (; i >= 0; --i) {
        const NodeKind k = g.nodes[i].kind;
        if (channelwise(k)) continue;
        if (k == NodeKind::Conv) {
            // A sampled input stays shared even though a conv precedes it.
            if (ctx.sampler_before >= 0) break;
            ctx.source = InputSource::PlainConv;
            ctx.producer = i;
            return ctx;
        }
        if (k == NodeKind::ResidualBegin) {
            ctx.source = InputSource::BlockShared;
            return ctx;
        }
        if (k == NodeKind::ResidualAdd) {
            ctx.source = InputSource::AddOutput;
            return ctx;
        }
        if (k == NodeKind::ChannelSampler) break;
    }
    ctx.source = (ctx.sampler_before >= 0) ? InputSource::BlockShared
                                           : InputSource::ModelInput;
    return ctx;
}

ConvConsumer analyze_conv_output(const ModelGraph& g, i64 conv_idx) {
    ConvConsumer c;
    for (i64 i = conv_idx + 1; i < static_cast<i64>(g.nodes.size()); ++i) {
        const NodeKind k = g.nodes[i].kind;
        if (channelwise(k)) continue;
        if (k == NodeKind::Conv) {
            c.kind = ConvConsumer::Kind::Conv;
            c.conv_idx = i;
            return c;
        }
        // Begin (bifurcation), add (must match shortcut width) and sampler
        // all pin the producing conv's filter count.
        c.kind = ConvConsumer::Kind::Shared;
        return c;
    }
    return c;
}

std::vector<i64> conv_indices(const ModelGraph& g) {
    std::vector<i64> out;
    for (i64 i = 0; i < static_cast<i64>(g.nodes.size()); ++i) {
        if (g.nodes[i].kind == NodeKind::Conv) out.push_back(i);
    }
    return out;
}

i64 matching_add(const ModelGraph& g, i64 begin_idx) {
    i64 depth = 0;
    for (i64 i = begin_idx + 1; i < static_cast<i64>(g.nodes.size()); ++i) {
        if (g.nodes[i].kind == NodeKind::ResidualBegin) ++depth;
        if (g.nodes[i].kind == NodeKind::ResidualAdd) {
            if (depth == 0) return i;
            --depth;
        }
    }
    throw StructureError("residual begin " + g.nodes[begin_idx].name +
                         " has no matching add");
}

std::vector<i64> branch_convs(const ModelGraph& g, const std::string& block) {
    const i64 b = g.find(block);
    if (g.nodes[b].kind != NodeKind::ResidualBegin) {
        throw StructureError(block + " is not a residual block");
    }
    const i64 e = matching_add(g, b);
    std::vector<i64> out;
    for (i64 i = b + 1; i < e; ++i) {
        if (g.nodes[i].kind == NodeKind::Conv) out.push_back(i);
    }
    return out;
}

} // namespace prunekit
