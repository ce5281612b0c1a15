#include "prunekit/multibranch.hpp"

#include <algorithm>

#include "prunekit/linalg.hpp"
#include "prunekit/reconstruction.hpp"

namespace prunekit {

static std::string branch_conv_name(const ModelGraph& g, const std::string& block,
                                    bool first) {
    const std::vector<i64> convs = branch_convs(g, block);
    if (convs.empty()) throw StructureError("residual block " + block + " has no convs");
    const i64 idx = first ? convs.front() : convs.back();
    return g.nodes[idx].name;
}

LayerReport prune_block_first_layer(ModelGraph& current, const ModelGraph& original,
                                    const std::string& block, i64 c_prime,
                                    const PruneConfig& cfg, const Tensor4& inputs) {
    const std::string layer = branch_conv_name(current, block, true);
    const i64 idx = current.find(layer);
    const ConvContext ctx = analyze_conv_input(current, idx);
    if (ctx.source != InputSource::BlockShared) {
        throw StructureError("first conv of " + block + " does not read the block input");
    }
    SamplePlan plan = cfg.plan;
    plan.seed = layer_seed(cfg, layer);
    const SampleSet samples =
        sample_layer(current, original, layer, inputs, plan, cfg.target_mode);
    return prune_layer_with_samples(current, layer, samples, c_prime, cfg);
}

LayerReport prune_block_last_layer(ModelGraph& current, const ModelGraph& original,
                                   const std::string& block, i64 c_prime,
                                   const PruneConfig& cfg, const Tensor4& inputs) {
    const std::string layer = branch_conv_name(current, block, false);
    SamplePlan plan = cfg.plan;
    plan.seed = layer_seed(cfg, layer);
    const SampleSet samples =
        sample_residual_last(current, original, block, inputs, plan);
    return prune_layer_with_samples(current, layer, samples, c_prime, cfg);
}

FilterWiseSelection filter_wise_select(const SampleSet& samples, const Tensor4& weights,
                                       i64 c_prime, const PruneConfig& cfg) {
    const i64 n = samples.n, c = samples.c, kk = samples.kh * samples.kw;
    if (weights.dims[0] != n || weights.dims[1] != c) {
        throw ShapeError("filter_wise_select: weight dims do not match samples");
    }
    FilterWiseSelection out;
    out.active.resize(static_cast<size_t>(n));
    out.beta.resize(static_cast<size_t>(n));
    out.dense_weights = Tensor4(n, c, samples.kh, samples.kw);

    double total_err = 0.0, total_ref = 0.0;
    for (i64 j = 0; j < n; ++j) {
        SampleSet sj;
        sj.X = samples.X;
        sj.Y = MatF(samples.Y.rows, 1);
        for (i64 r = 0; r < samples.Y.rows; ++r) sj.Y(r, 0) = samples.Y(r, j);
        sj.c = c;
        sj.n = 1;
        sj.kh = samples.kh;
        sj.kw = samples.kw;

        Tensor4 wj(1, c, samples.kh, samples.kw);
        std::copy_n(weights.data.data() + j * c * kk, c * kk, wj.data.data());

        const ChannelResponses resp = build_responses(sj, wj);
        const SelectionResult sel = select_exactly(resp, c_prime, cfg.schedule, cfg.lasso_tol);
        const ReconstructedWeights rec = reconstruct(sj, sel.beta, sel.active, cfg.ridge);

        float* dst = out.dense_weights.data.data() + j * c * kk;
        for (i64 i : sel.active) {
            const double bi = sel.beta[static_cast<size_t>(i)];
            for (i64 p = 0; p < kk; ++p) {
                dst[i * kk + p] =
                    static_cast<float>(bi * static_cast<double>(rec.w_prime(0, i * kk + p)));
            }
        }
        const double yj = frob_sq(sj.Y.v);
        total_err += rec.residual_rel * yj;
        total_ref += yj;
        out.active[static_cast<size_t>(j)] = sel.active;
        out.beta[static_cast<size_t>(j)] = sel.beta;
    }
    out.total_rel_mse = total_ref > 0.0 ? total_err / total_ref : 0.0;
    return out;
}

} // namespace prunekit
