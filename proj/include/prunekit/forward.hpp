#pragma once

#include <span>
#include <string>
#include <vector>

#include "prunekit/graph.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

/// Capture point for an intermediate feature map: the tensor entering
/// (at_input) or leaving the named node.
struct Tap {
    std::string node;
    bool at_input = false;
};

/// Runs the model on an N x C x H x W batch and returns the output.
Tensor4 forward(const ModelGraph& g, const Tensor4& input);

/// Runs the model and captures one intermediate feature map. Execution
/// stops as soon as the tap is resolved.
Tensor4 forward_tap(const ModelGraph& g, const Tensor4& input, const Tap& tap);

/// Captures several feature maps in one pass; `out[i]` receives taps[i].
/// Execution stops once every tap is resolved.
void forward_taps(const ModelGraph& g, const Tensor4& input, std::span<const Tap> taps,
                  std::span<Tensor4> out);

} // namespace prunekit
