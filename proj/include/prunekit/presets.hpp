#pragma once

#include <string>

#include "prunekit/graph.hpp"

namespace prunekit {

/// 6-conv sequential net with max pools, 3x32x32 input.
ModelGraph make_toy_vgg(u64 seed);

/// Conv stem plus 3 identity-shortcut bottleneck blocks, 3x16x16 input.
ModelGraph make_toy_resnet(u64 seed);

/// Builds a model from a generator spec JSON (see README): either a
/// {"preset": ...} reference or an explicit node list with an init seed.
ModelGraph model_from_genspec(const std::string& json_text);

/// Seeded standard-normal batch of n images with the given shape.
Tensor4 random_batch(i64 n, const ShapeCHW& shape, u64 seed);

/// Convenience node builders used by presets and tests.
Node conv_node(const std::string& name, i64 n_out, i64 c_in, i64 k, i64 stride, i64 pad,
               u64 seed, bool bias = true, double init_scale = 1.0);
Node relu_node(const std::string& name);
Node maxpool_node(const std::string& name, i64 k, i64 stride);
Node avgpool_node(const std::string& name, i64 k, i64 stride);
Node batchnorm_node(const std::string& name, i64 channels, u64 seed);
Node residual_begin_node(const std::string& name);
Node residual_add_node(const std::string& name, const std::string& begin);

} // namespace prunekit
