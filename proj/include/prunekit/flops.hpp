#pragma once

#include <map>
#include <string>
#include <vector>

#include "prunekit/graph.hpp"

namespace prunekit {

/// Multiply-accumulate counts per node (batch 1). Only conv nodes
/// contribute; channel samplers and element-wise nodes count zero.
struct FlopsReport {
    struct Entry {
        std::string name;
        i64 macs = 0;
    };
    std::vector<Entry> per_node;
    i64 total = 0;
};

FlopsReport count_flops(const ModelGraph& g);

/// MAC count the model would have if each conv's input channels were
/// reduced to keep[name] (missing names keep all channels) and the
/// producing filters were removed where the graph structure allows it.
/// This mirrors the surgery performed by the pruner without running it.
i64 pruned_macs(const ModelGraph& g, const std::map<std::string, i64>& keep);

} // namespace prunekit
