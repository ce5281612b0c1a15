#include "prunekit/flops.hpp"

#include <algorithm>

#include "prunekit/conv.hpp"

namespace prunekit {

FlopsReport count_flops(const ModelGraph& g) {
    FlopsReport rep;
    ShapeCHW s = g.input_shape;
    for (const Node& n : g.nodes) {
        i64 macs = 0;
        if (n.kind == NodeKind::Conv) {
            const ShapeCHW o = node_output_shape(n, s);
            macs = n.out_channels() * n.in_channels() * n.weights.dims[2] *
                   n.weights.dims[3] * o.h * o.w;
        }
        rep.per_node.push_back({n.name, macs});
        rep.total += macs;
        s = node_output_shape(n, s);
    }
    return rep;
}

i64 pruned_macs(const ModelGraph& g, const std::map<std::string, i64>& keep) {
    i64 total = 0;
    ShapeCHW s = g.input_shape;
    for (i64 i = 0; i < static_cast<i64>(g.nodes.size()); ++i) {
        const Node& n = g.nodes[i];
        if (n.kind == NodeKind::Conv) {
            i64 c_eff = n.in_channels();
            if (auto it = keep.find(n.name); it != keep.end()) {
                c_eff = std::min(c_eff, it->second);
            }
            i64 n_eff = n.out_channels();
            // Filters disappear only when the consuming conv's input-channel
            // pruning can reach back to this conv.
            const ConvConsumer consumer = analyze_conv_output(g, i);
            if (consumer.kind == ConvConsumer::Kind::Conv) {
                const Node& next = g.nodes[consumer.conv_idx];
                const ConvContext ctx = analyze_conv_input(g, consumer.conv_idx);
                if (ctx.source == InputSource::PlainConv && ctx.producer == i) {
                    if (auto it = keep.find(next.name); it != keep.end()) {
                        n_eff = std::min(n_eff, it->second);
                    }
                }
            }
            const ShapeCHW o = node_output_shape(n, s);
            total += n_eff * c_eff * n.weights.dims[2] * n.weights.dims[3] * o.h * o.w;
        }
        s = node_output_shape(n, s);
    }
    return total;
}

} // namespace prunekit
