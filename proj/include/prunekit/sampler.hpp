#pragma once

#include <filesystem>
#include <string>

#include "prunekit/graph.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

/// How many positions to draw: up to `images` calibration images and
/// `samples_per_image` output positions per image, without replacement.
struct SamplePlan {
    i64 images = 5000;
    i64 samples_per_image = 10;
    u64 seed = 0;
};

/// Where the regression targets come from. SameLayer reads the layer's
/// own output in the current model; OriginalModel reads the un-pruned
/// model's output so accumulated error is part of the target.
enum class TargetMode { SameLayer, OriginalModel };

/// Input-volume rows X (N_s x c*kh*kw) and target rows Y (N_s x n) for
/// one conv layer. Column block i of X (width kh*kw) is the slice of the
/// i-th input channel. Targets are pre-activation and bias-free.
struct SampleSet {
    MatF X;
    MatF Y;
    i64 c = 0, n = 0, kh = 0, kw = 0;
    struct Pos {
        i64 image = 0, y = 0, x = 0;
    };
    std::vector<Pos> positions;
    std::string layer;
    std::string mode;
    u64 seed = 0;
};

SampleSet sample_layer(const ModelGraph& model_current, const ModelGraph& model_original,
                       const std::string& layer, const Tensor4& inputs,
                       const SamplePlan& plan, TargetMode mode);

/// Residual-block variant: X comes from the current input of the last
/// branch conv; targets compensate the shortcut drift, Y1 - Y1' + Y2,
/// sampled at matching positions on both branches.
SampleSet sample_residual_last(const ModelGraph& model_current,
                               const ModelGraph& model_original, const std::string& block,
                               const Tensor4& inputs, const SamplePlan& plan);

void save_sampleset(const SampleSet& s, const std::filesystem::path& dir,
                    const std::string& stem);
SampleSet load_sampleset(const std::filesystem::path& json_path);

} // namespace prunekit
