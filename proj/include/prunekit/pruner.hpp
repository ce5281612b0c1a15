#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>

#include "prunekit/flops.hpp"
#include "prunekit/graph.hpp"
#include "prunekit/lasso.hpp"
#include "prunekit/sampler.hpp"

namespace prunekit {

struct PruneConfig {
    enum class Mode { Fast, Alternate };
    Mode mode = Mode::Fast;

    // Exactly one of overall_speedup / per_layer_keep drives the budget.
    std::optional<double> overall_speedup;
    std::map<std::string, i64> per_layer_keep;

    double shallow_deep_ratio = 1.5;       // shallow:deep keep-fraction ratio 1:r
    std::vector<double> branch_ratios = {2, 4, 3};
    std::set<std::string> frozen_layers;

    SamplePlan plan{};
    LassoSchedule schedule{};
    double lasso_tol = 1e-10;
    double ridge = 1e-8;
    TargetMode target_mode = TargetMode::OriginalModel;
    bool residual_compensation = true; // shortcut-aware targets on block last layers
    bool skip_reconstruction = false;  // ablation: keep beta-masked weights
    u64 seed = 42;
    i64 threads = 1;
    i64 holdout = 32;                  // held-out images for the report MSE
};

struct LayerReport {
    std::string name;
    i64 c = 0;
    i64 c_prime = 0;
    double lambda_final = 0.0;
    double mse_selected = 0.0;      // beta-masked, before reconstruction
    double mse_reconstructed = 0.0; // after the least-squares refit
    double wall_ms = 0.0;
    bool sampler_inserted = false;
};

struct PruneReport {
    std::vector<LayerReport> layers;
    i64 flops_before = 0;
    i64 flops_after = 0;
    double achieved_speedup = 1.0;
    double final_output_rel_mse = 0.0;
    std::string notes;
};

/// Keep-fractions for the convs of one residual branch, given the block
/// keep-fraction: fraction * 2 * r_i / mean(r). With the default 2:4:3
/// ratios a 30% block fraction keeps 40%, 80% and 60%.
std::vector<double> branch_keep_fractions(double block_fraction,
                                          std::span<const double> ratios);

/// Derives per-layer retained channel counts from the overall speed-up:
/// policy weights (depth tier, branch position) scaled by one global
/// multiplier found by bisection so the predicted MACs fit the budget.
std::map<std::string, i64> assign_budgets(const ModelGraph& g, const PruneConfig& cfg);

/// Selection + reconstruction + graph surgery for one layer, targets
/// already sampled. Shared by the plain and multi-branch entry points.
LayerReport prune_layer_with_samples(ModelGraph& current, const std::string& layer,
                                     const SampleSet& samples, i64 c_prime,
                                     const PruneConfig& cfg);

/// Samples the layer per cfg.target_mode and prunes it. The conv's input
/// channels shrink to c'; upstream filters are removed when the graph
/// allows it, otherwise a ChannelSampler is inserted.
LayerReport prune_layer(ModelGraph& current, const ModelGraph& original,
                        const std::string& layer, i64 c_prime, const PruneConfig& cfg,
                        const Tensor4& inputs);

/// Layer-by-layer whole-model pruning with un-pruned-model targets.
std::pair<ModelGraph, PruneReport> prune_model(const ModelGraph& model,
                                               const PruneConfig& cfg,
                                               const Tensor4& calibration);

/// Deterministic per-layer sampling seed.
u64 layer_seed(const PruneConfig& cfg, const std::string& layer);

std::string report_to_json(const PruneReport& rep);

} // namespace prunekit
