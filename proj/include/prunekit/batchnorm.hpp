#pragma once

#include "prunekit/graph.hpp"

namespace prunekit {

/// Folds every BatchNorm node into the conv immediately preceding it:
/// W <- W * g/sqrt(var+eps), bias <- (bias - mean) * g/sqrt(var+eps) + b.
/// The returned graph has no BatchNorm nodes and identical outputs up to
/// rounding. Throws StructureError if a BN node has no preceding conv.
ModelGraph merge_batchnorm(const ModelGraph& g);

} // namespace prunekit
