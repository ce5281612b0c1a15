#include "prunekit/pruner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <tuple>

#include <json.hpp>

#include "prunekit/batchnorm.hpp"
#include "prunekit/forward.hpp"
#include "prunekit/linalg.hpp"
#include "prunekit/reconstruction.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

namespace {

double now_ms() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

struct BlockPosition {
    i64 begin_idx = -1;
    i64 position = 0; // index among the branch convs
    i64 count = 0;
};

// Innermost residual block containing the node, if any.
std::optional<BlockPosition> enclosing_block(const ModelGraph& g, i64 node_idx) {
    std::vector<i64> stack;
    for (i64 i = 0; i < node_idx; ++i) {
        if (g.nodes[i].kind == NodeKind::ResidualBegin) stack.push_back(i);
        if (g.nodes[i].kind == NodeKind::ResidualAdd && !stack.empty()) stack.pop_back();
    }
    if (stack.empty()) return std::nullopt;
    BlockPosition bp;
    bp.begin_idx = stack.back();
    const std::vector<i64> convs = branch_convs(g, g.nodes[bp.begin_idx].name);
    bp.count = static_cast<i64>(convs.size());
    for (i64 p = 0; p < bp.count; ++p) {
        if (convs[static_cast<size_t>(p)] == node_idx) {
            bp.position = p;
            return bp;
        }
    }
    return std::nullopt; // node_idx is not a conv on this branch
}

// Rewires the graph after a layer's input channels were reduced: shrinks
// the conv to the folded weights and either removes the producing
// filters or inserts/composes a channel sampler.
bool apply_channel_selection(ModelGraph& g, i64 conv_idx, Tensor4 folded,
                             const std::vector<i64>& retained) {
    Node& conv = g.nodes[conv_idx];
    const i64 c_old = conv.in_channels();
    const ConvContext ctx = analyze_conv_input(g, conv_idx);
    const bool full = static_cast<i64>(retained.size()) == c_old;
    conv.weights = std::move(folded);
    if (full) return false;

    if (ctx.source == InputSource::PlainConv) {
        Node& prod = g.nodes[ctx.producer];
        const i64 cp = prod.weights.dims[1], kh = prod.weights.dims[2],
                  kw = prod.weights.dims[3];
        Tensor4 sliced(static_cast<i64>(retained.size()), cp, kh, kw);
        const i64 fsz = cp * kh * kw;
        for (size_t a = 0; a < retained.size(); ++a) {
            std::copy_n(prod.weights.data.data() + retained[a] * fsz, fsz,
                        sliced.data.data() + static_cast<i64>(a) * fsz);
        }
        prod.weights = std::move(sliced);
        if (prod.has_bias) {
            std::vector<float> b;
            b.reserve(retained.size());
            for (i64 r : retained) b.push_back(prod.bias[static_cast<size_t>(r)]);
            prod.bias = std::move(b);
        }
        // Any BN still sitting between producer and consumer shrinks too.
        for (i64 i = ctx.producer + 1; i < conv_idx; ++i) {
            Node& mid = g.nodes[i];
            if (mid.kind != NodeKind::BatchNorm) continue;
            auto slice = [&](std::vector<float>& v) {
                std::vector<float> out;
                out.reserve(retained.size());
                for (i64 r : retained) out.push_back(v[static_cast<size_t>(r)]);
                v = std::move(out);
            };
            slice(mid.gamma);
            slice(mid.beta);
            slice(mid.mean);
            slice(mid.var);
        }
        g.validate();
        return false;
    }

    if (ctx.sampler_before >= 0) {
        // Re-pruning a sampled input: compose the index lists.
        Node& s = g.nodes[ctx.sampler_before];
        std::vector<i64> composed;
        composed.reserve(retained.size());
        for (i64 r : retained) composed.push_back(s.indices[static_cast<size_t>(r)]);
        s.indices = std::move(composed);
        g.validate();
        return true;
    }

    Node sampler;
    sampler.kind = NodeKind::ChannelSampler;
    sampler.name = conv.name + "_sampler";
    sampler.indices = retained;
    g.nodes.insert(g.nodes.begin() + conv_idx, std::move(sampler));
    g.validate();
    return true;
}

// Alternating optimization: for each lambda on the ramp, iterate the
// selection and reconstruction steps (renormalizing between them) until
// the support is stable, carrying the refit weights forward. Stops once
// the bound is met and leaves the final exact-c' search to the caller.
Tensor4 alternate_refine(const SampleSet& s, const Tensor4& start_weights, i64 c_prime,
                         const PruneConfig& cfg) {
    Tensor4 w_work = start_weights;
    ChannelResponses resp = build_responses(s, w_work);
    SelectionResult sel = lasso_solve(resp, 0.0, nullptr, cfg.lasso_tol);
    if (static_cast<i64>(sel.active.size()) <= c_prime) return w_work;
    std::vector<double> beta = sel.beta;

    double lam = 1e-4 * lambda_max(resp);
    for (i64 step = 0; step < cfg.schedule.max_steps; ++step) {
        i64 prev_nnz = -1;
        for (i64 inner = 0; inner < 30; ++inner) {
            sel = lasso_solve(resp, lam, &beta, cfg.lasso_tol);
            beta = sel.beta;
            const i64 k = static_cast<i64>(sel.active.size());
            if (k <= c_prime) return w_work;
            if (k == prev_nnz) break; // stable support at this lambda
            prev_nnz = k;
            ReconstructedWeights rec = reconstruct(s, beta, sel.active, cfg.ridge);
            w_work = weights_from_matrix(rec.w_prime, s.c, s.kh, s.kw);
            renormalize(beta, w_work);
            resp = build_responses(s, w_work);
        }
        lam *= cfg.schedule.factor;
    }
    return w_work;
}

} // namespace

std::vector<double> branch_keep_fractions(double block_fraction,
                                          std::span<const double> ratios) {
    if (ratios.empty()) throw ArgumentError("branch ratios must not be empty");
    double mean = 0.0;
    for (double r : ratios) {
        if (r <= 0.0) throw ArgumentError("branch ratios must be positive");
        mean += r;
    }
    mean /= static_cast<double>(ratios.size());
    std::vector<double> out;
    out.reserve(ratios.size());
    for (double r : ratios) out.push_back(block_fraction * 2.0 * r / mean);
    return out;
}

u64 layer_seed(const PruneConfig& cfg, const std::string& layer) {
    return mix64(cfg.plan.seed ^ name_tag(layer));
}

std::map<std::string, i64> assign_budgets(const ModelGraph& g, const PruneConfig& cfg) {
    if (!cfg.overall_speedup.has_value()) {
        throw ArgumentError("assign_budgets: overall_speedup is not set");
    }
    const double speedup = *cfg.overall_speedup;
    if (!(speedup >= 1.0)) throw ArgumentError("assign_budgets: speed-up must be >= 1");

    const std::vector<i64> convs = conv_indices(g);
    if (convs.empty()) throw ArgumentError("assign_budgets: model has no convs");
    const i64 n_convs = static_cast<i64>(convs.size());

    struct Item {
        std::string name;
        i64 c;
        double weight;
        bool frozen;
    };
    std::vector<Item> items;
    const std::vector<double> branch_mult = branch_keep_fractions(1.0, cfg.branch_ratios);
    for (i64 t = 0; t < n_convs; ++t) {
        const i64 idx = convs[static_cast<size_t>(t)];
        const Node& conv = g.nodes[idx];
        Item it;
        it.name = conv.name;
        it.c = conv.in_channels();
        // The very first conv reads the network input; its channels stay.
        it.frozen = (t == 0) || cfg.frozen_layers.count(conv.name) > 0;
        double w = (t < (n_convs + 1) / 2) ? 1.0 : cfg.shallow_deep_ratio;
        if (const auto bp = enclosing_block(g, idx)) {
            const size_t pos = static_cast<size_t>(
                std::min<i64>(bp->position, static_cast<i64>(branch_mult.size()) - 1));
            w *= branch_mult[pos];
        }
        it.weight = w;
        items.push_back(std::move(it));
    }

    auto keep_for = [&](double alpha) {
        std::map<std::string, i64> keep;
        for (const Item& it : items) {
            if (it.frozen) {
                keep[it.name] = it.c;
                continue;
            }
            const double f = std::min(1.0, alpha * it.weight);
            keep[it.name] = std::clamp<i64>(std::llround(f * static_cast<double>(it.c)), 1, it.c);
        }
        return keep;
    };

    const i64 total = count_flops(g).total;
    const double target = static_cast<double>(total) / speedup;

    double w_min = 1e9;
    for (const Item& it : items) {
        if (!it.frozen) w_min = std::min(w_min, it.weight);
    }
    const double alpha_full = (w_min < 1e9) ? 1.0 / w_min : 1.0;

    if (static_cast<double>(pruned_macs(g, keep_for(alpha_full))) <= target) {
        return keep_for(alpha_full);
    }
    if (static_cast<double>(pruned_macs(g, keep_for(0.0))) > target) {
        throw InfeasibleError("assign_budgets: budget unreachable even at one channel per layer");
    }
    double lo = 0.0, hi = alpha_full;
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (static_cast<double>(pruned_macs(g, keep_for(mid))) <= target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return keep_for(lo);
}

LayerReport prune_layer_with_samples(ModelGraph& current, const std::string& layer,
                                     const SampleSet& samples, i64 c_prime,
                                     const PruneConfig& cfg) {
    const double t0 = now_ms();
    const i64 conv_idx = current.find(layer);
    Node& conv = current.nodes[conv_idx];
    if (conv.kind != NodeKind::Conv) throw StructureError(layer + " is not a conv node");
    const i64 c = conv.in_channels();
    if (samples.c != c) throw ShapeError("prune_layer: sample set does not match layer");
    if (c_prime < 1) throw ArgumentError("prune_layer: c' must be >= 1");
    c_prime = std::min(c_prime, c);

    LayerReport rep;
    rep.name = layer;
    rep.c = c;

    // Selection basis: current weights in fast mode, alternately refined
    // weights otherwise.
    Tensor4 basis = conv.weights;
    if (cfg.mode == PruneConfig::Mode::Alternate && c_prime < c) {
        basis = alternate_refine(samples, basis, c_prime, cfg);
    }
    ChannelResponses resp = build_responses(samples, basis);

    SelectionResult sel;
    if (c_prime >= c) {
        // Vacuous selection: every channel stays, only the refit runs.
        sel.beta.assign(static_cast<size_t>(c), 1.0);
        for (i64 i = 0; i < c; ++i) sel.active.push_back(i);
    } else {
        sel = select_exactly(resp, c_prime, cfg.schedule, cfg.lasso_tol);
    }
    rep.lambda_final = sel.lambda;
    rep.mse_selected = masked_rel_mse(resp, sel.beta);

    Tensor4 folded;
    std::vector<i64> retained;
    if (cfg.skip_reconstruction) {
        std::tie(folded, retained) = fold_final_weights(sel.beta, basis);
        rep.mse_reconstructed = rep.mse_selected;
    } else {
        ReconstructedWeights rec = reconstruct(samples, sel.beta, sel.active, cfg.ridge);
        Tensor4 w_prime = weights_from_matrix(rec.w_prime, c, samples.kh, samples.kw);
        std::vector<double> beta = sel.beta;
        renormalize(beta, w_prime);
        std::tie(folded, retained) = fold_final_weights(beta, w_prime);
        rep.mse_reconstructed = rec.residual_rel;
    }
    rep.c_prime = static_cast<i64>(retained.size());

    rep.sampler_inserted = apply_channel_selection(current, conv_idx, std::move(folded), retained);
    rep.wall_ms = now_ms() - t0;
    return rep;
}

LayerReport prune_layer(ModelGraph& current, const ModelGraph& original,
                        const std::string& layer, i64 c_prime, const PruneConfig& cfg,
                        const Tensor4& inputs) {
    SamplePlan plan = cfg.plan;
    plan.seed = layer_seed(cfg, layer);
    const SampleSet samples =
        sample_layer(current, original, layer, inputs, plan, cfg.target_mode);
    return prune_layer_with_samples(current, layer, samples, c_prime, cfg);
}

std::pair<ModelGraph, PruneReport> prune_model(const ModelGraph& model,
                                               const PruneConfig& cfg,
                                               const Tensor4& calibration) {
    if (cfg.overall_speedup.has_value() && !cfg.per_layer_keep.empty()) {
        throw ArgumentError("prune_model: set either overall_speedup or per_layer_keep");
    }
    const bool has_bn = std::any_of(model.nodes.begin(), model.nodes.end(), [](const Node& n) {
        return n.kind == NodeKind::BatchNorm;
    });
    ModelGraph original = has_bn ? merge_batchnorm(model) : model;
    original.validate();

    std::map<std::string, i64> budgets;
    if (!cfg.per_layer_keep.empty()) {
        budgets = cfg.per_layer_keep;
        for (const auto& [name, cp] : budgets) {
            const Node& n = original.nodes[original.find(name)];
            if (n.kind != NodeKind::Conv) throw ArgumentError(name + " is not a conv node");
            if (cp < 1) throw ArgumentError("per-layer keep must be >= 1");
        }
    } else {
        budgets = assign_budgets(original, cfg);
    }

    const i64 n_images = calibration.dims[0];
    if (n_images < 2) throw ArgumentError("prune_model: need at least 2 calibration images");
    const i64 hold = std::min<i64>(cfg.holdout, std::max<i64>(1, n_images / 4));
    const i64 n_sampling = n_images - hold;
    auto slice_batch = [&](i64 from, i64 count) {
        Tensor4 t(count, calibration.dims[1], calibration.dims[2], calibration.dims[3]);
        const i64 img_sz = calibration.dims[1] * calibration.dims[2] * calibration.dims[3];
        std::copy_n(calibration.data.data() + from * img_sz, count * img_sz, t.data.data());
        return t;
    };
    const Tensor4 sampling = slice_batch(0, n_sampling);
    const Tensor4 heldout = slice_batch(n_sampling, hold);

    ModelGraph current = original;
    PruneReport rep;
    rep.flops_before = count_flops(original).total;
    rep.notes = "depth tiers: first half shallow, second half deep";

    std::vector<std::string> layer_order;
    for (i64 idx : conv_indices(original)) layer_order.push_back(original.nodes[idx].name);

    for (const std::string& name : layer_order) {
        const i64 idx = current.find(name);
        const i64 c = current.nodes[idx].in_channels();
        const auto it = budgets.find(name);
        const i64 cp = (it == budgets.end()) ? c : std::min(it->second, c);
        if (cp >= c) continue;

        SamplePlan plan = cfg.plan;
        plan.seed = layer_seed(cfg, name);
        SampleSet samples;
        const auto bp = enclosing_block(current, idx);
        if (bp && bp->position == bp->count - 1 && cfg.residual_compensation) {
            samples = sample_residual_last(current, original,
                                           current.nodes[bp->begin_idx].name, sampling, plan);
        } else {
            samples = sample_layer(current, original, name, sampling, plan, cfg.target_mode);
        }
        rep.layers.push_back(prune_layer_with_samples(current, name, samples, cp, cfg));
    }

    current.validate();
    rep.flops_after = count_flops(current).total;
    rep.achieved_speedup =
        static_cast<double>(rep.flops_before) / static_cast<double>(rep.flops_after);

    const Tensor4& eval_batch = hold > 0 ? heldout : sampling;
    const Tensor4 ref = forward(original, eval_batch);
    const Tensor4 got = forward(current, eval_batch);
    const double refsq = frob_sq(ref.data);
    double err = 0.0;
    for (size_t i = 0; i < ref.data.size(); ++i) {
        const double d = static_cast<double>(got.data[i]) - static_cast<double>(ref.data[i]);
        err += d * d;
    }
    rep.final_output_rel_mse = refsq > 0.0 ? err / refsq : 0.0;
    return {std::move(current), std::move(rep)};
}

std::string report_to_json(const PruneReport& rep) {
    nlohmann::json doc;
    doc["flops_before"] = rep.flops_before;
    doc["flops_after"] = rep.flops_after;
    doc["achieved_speedup"] = rep.achieved_speedup;
    doc["final_output_rel_mse"] = rep.final_output_rel_mse;
    doc["notes"] = rep.notes;
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerReport& l : rep.layers) {
        layers.push_back({{"name", l.name},
                          {"c", l.c},
                          {"c_prime", l.c_prime},
                          {"lambda_final", l.lambda_final},
                          {"mse_selected", l.mse_selected},
                          {"mse_reconstructed", l.mse_reconstructed},
                          {"wall_ms", l.wall_ms},
                          {"sampler_inserted", l.sampler_inserted}});
    }
    doc["layers"] = std::move(layers);
    return doc.dump(2) + "\n";
}

} // namespace prunekit
