#pragma once

#include "prunekit/pruner.hpp"

namespace prunekit {

/// Prunes the first conv of a residual branch. The block input is shared
/// with the shortcut, so instead of removing upstream filters a
/// ChannelSampler with the retained indices is inserted before the conv;
/// the convolution itself stays regular. c' == c degenerates to a
/// least-squares refit with no sampler.
LayerReport prune_block_first_layer(ModelGraph& current, const ModelGraph& original,
                                    const std::string& block, i64 c_prime,
                                    const PruneConfig& cfg, const Tensor4& inputs);

/// Prunes the last conv of a residual branch against the shortcut-
/// compensated target Y1 - Y1' + Y2, so the reconstruction minimizes the
/// block-output error rather than the branch-output error.
LayerReport prune_block_last_layer(ModelGraph& current, const ModelGraph& original,
                                   const std::string& block, i64 c_prime,
                                   const PruneConfig& cfg, const Tensor4& inputs);

/// Per-filter channel selection: every output filter solves its own
/// selection + reconstruction against its column of Y. The result is an
/// "irregular" layer, returned as dense weights with zeros outside each
/// filter's active blocks (evaluation only).
struct FilterWiseSelection {
    std::vector<std::vector<i64>> active; // per filter, sorted
    std::vector<std::vector<double>> beta;
    Tensor4 dense_weights; // n x c x kh x kw, masked
    double total_rel_mse = 0.0;
};

FilterWiseSelection filter_wise_select(const SampleSet& samples, const Tensor4& weights,
                                       i64 c_prime, const PruneConfig& cfg);

} // namespace prunekit
