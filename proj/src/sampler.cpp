#include "prunekit/sampler.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "prunekit/conv.hpp"
#include "prunekit/forward.hpp"
#include "prunekit/io.hpp"
#include "prunekit/linalg.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

using nlohmann::json;

static std::vector<SampleSet::Pos> draw_positions(const SamplePlan& plan, i64 batch,
                                                  i64 ho, i64 wo) {
    if (plan.images < 1 || plan.samples_per_image < 1) {
        throw ArgumentError("sample plan: images and samples_per_image must be >= 1");
    }
    const i64 n_img = std::min(plan.images, batch);
    const i64 total = ho * wo;
    const i64 per_img = std::min(plan.samples_per_image, total);
    std::vector<SampleSet::Pos> out;
    out.reserve(static_cast<size_t>(n_img * per_img));
    std::vector<i64> idx(static_cast<size_t>(total));
    for (i64 img = 0; img < n_img; ++img) {
        std::iota(idx.begin(), idx.end(), 0);
        auto rng = make_rng(plan.seed, static_cast<u64>(img));
        // Partial Fisher-Yates: the first per_img slots become a uniform
        // draw without replacement.
        for (i64 k = 0; k < per_img; ++k) {
            std::uniform_int_distribution<i64> d(k, total - 1);
            std::swap(idx[k], idx[d(rng)]);
            out.push_back({img, idx[k] / wo, idx[k] % wo});
        }
    }
    return out;
}

static MatF gather_patch_rows(const Tensor4& fmap, const Node& conv,
                              const std::vector<SampleSet::Pos>& pos) {
    const i64 kh = conv.weights.dims[2], kw = conv.weights.dims[3];
    const i64 kdim = fmap.dims[1] * kh * kw;
    MatF x(static_cast<i64>(pos.size()), kdim);
    for (size_t r = 0; r < pos.size(); ++r) {
        im2col_row(fmap, pos[r].image, pos[r].y, pos[r].x, kh, kw, conv.sh, conv.sw,
                   conv.ph, conv.pw, x.row(static_cast<i64>(r)));
    }
    return x;
}

// Conv responses at the sampled positions, bias-free: rows of patches
// times reshaped weights.
static MatF conv_rows(const MatF& patches, const Tensor4& weights) {
    const i64 n = weights.dims[0];
    const i64 kdim = weights.dims[1] * weights.dims[2] * weights.dims[3];
    if (patches.cols != kdim) throw ShapeError("conv_rows: patch width mismatch");
    MatF w(n, kdim);
    w.v.assign(weights.data.begin(), weights.data.end());
    return matmul_nt(patches, w);
}

static const Node& conv_at(const ModelGraph& g, const std::string& name) {
    const Node& n = g.nodes[static_cast<size_t>(g.find(name))];
    if (n.kind != NodeKind::Conv) throw StructureError(name + " is not a conv node");
    return n;
}

SampleSet sample_layer(const ModelGraph& model_current, const ModelGraph& model_original,
                       const std::string& layer, const Tensor4& inputs,
                       const SamplePlan& plan, TargetMode mode) {
    const Node& conv_cur = conv_at(model_current, layer);
    const Node& conv_orig = conv_at(model_original, layer);
    if (conv_cur.out_channels() != conv_orig.out_channels()) {
        throw ShapeError("sample_layer: output channel mismatch for " + layer);
    }

    const Tensor4 cur_map = forward_tap(model_current, inputs, {layer, true});
    const i64 kh = conv_cur.weights.dims[2], kw = conv_cur.weights.dims[3];
    const auto [ho, wo] = conv_output_geom(cur_map.dims[2], cur_map.dims[3], kh, kw,
                                           conv_cur.sh, conv_cur.sw, conv_cur.ph, conv_cur.pw);

    SampleSet s;
    s.layer = layer;
    s.seed = plan.seed;
    s.positions = draw_positions(plan, inputs.dims[0], ho, wo);
    s.c = cur_map.dims[1];
    s.n = conv_cur.out_channels();
    s.kh = kh;
    s.kw = kw;
    s.X = gather_patch_rows(cur_map, conv_cur, s.positions);

    if (mode == TargetMode::SameLayer) {
        s.mode = "same_layer";
        s.Y = conv_rows(s.X, conv_cur.weights);
    } else {
        s.mode = "original_model";
        const Tensor4 orig_map = forward_tap(model_original, inputs, {layer, true});
        if (orig_map.dims[2] != cur_map.dims[2] || orig_map.dims[3] != cur_map.dims[3]) {
            throw ShapeError("sample_layer: spatial mismatch between graphs at " + layer);
        }
        const MatF x_orig = gather_patch_rows(orig_map, conv_orig, s.positions);
        s.Y = conv_rows(x_orig, conv_orig.weights);
    }
    return s;
}

SampleSet sample_residual_last(const ModelGraph& model_current,
                               const ModelGraph& model_original, const std::string& block,
                               const Tensor4& inputs, const SamplePlan& plan) {
    const std::vector<i64> convs_cur = branch_convs(model_current, block);
    const std::vector<i64> convs_orig = branch_convs(model_original, block);
    if (convs_cur.empty() || convs_orig.empty()) {
        throw StructureError("residual block " + block + " has no branch convs");
    }
    const Node& last_cur = model_current.nodes[static_cast<size_t>(convs_cur.back())];
    const Node& last_orig = model_original.nodes[static_cast<size_t>(convs_orig.back())];
    if (last_cur.name != last_orig.name) {
        throw StructureError("residual block " + block + ": branch structure differs");
    }

    // One pass per model: the branch conv input and the shortcut map.
    const Tap cur_taps[2] = {{last_cur.name, true}, {block, false}};
    Tensor4 cur_maps[2];
    forward_taps(model_current, inputs, cur_taps, cur_maps);
    const Tap orig_taps[2] = {{last_orig.name, true}, {block, false}};
    Tensor4 orig_maps[2];
    forward_taps(model_original, inputs, orig_taps, orig_maps);

    const Tensor4& cur_in = cur_maps[0];
    const Tensor4& shortcut_cur = cur_maps[1];
    const Tensor4& orig_in = orig_maps[0];
    const Tensor4& shortcut_orig = orig_maps[1];

    const i64 kh = last_cur.weights.dims[2], kw = last_cur.weights.dims[3];
    const auto [ho, wo] = conv_output_geom(cur_in.dims[2], cur_in.dims[3], kh, kw,
                                           last_cur.sh, last_cur.sw, last_cur.ph, last_cur.pw);
    if (ho != shortcut_cur.dims[2] || wo != shortcut_cur.dims[3]) {
        throw ShapeError("residual block " + block +
                         ": branch output and shortcut spatial dims differ");
    }

    SampleSet s;
    s.layer = last_cur.name;
    s.mode = "residual_last";
    s.seed = plan.seed;
    s.positions = draw_positions(plan, inputs.dims[0], ho, wo);
    s.c = cur_in.dims[1];
    s.n = last_cur.out_channels();
    s.kh = kh;
    s.kw = kw;
    s.X = gather_patch_rows(cur_in, last_cur, s.positions);

    const MatF x_orig = gather_patch_rows(orig_in, last_orig, s.positions);
    const MatF y2 = conv_rows(x_orig, last_orig.weights);

    // Y = Y1 - Y1' + Y2, sampled at the branch output coordinates.
    s.Y = MatF(y2.rows, y2.cols);
    const i64 w = shortcut_orig.dims[3];
    for (i64 r = 0; r < y2.rows; ++r) {
        const auto& p = s.positions[static_cast<size_t>(r)];
        for (i64 j = 0; j < y2.cols; ++j) {
            const double y1 = shortcut_orig.plane(p.image, j)[p.y * w + p.x];
            const double y1p = shortcut_cur.plane(p.image, j)[p.y * w + p.x];
            s.Y(r, j) = static_cast<float>(y1 - y1p + static_cast<double>(y2(r, j)));
        }
    }
    return s;
}

void save_sampleset(const SampleSet& s, const std::filesystem::path& dir,
                    const std::string& stem) {
    std::filesystem::create_directories(dir);
    save_matrix(dir / (stem + "_X.pkt"), s.X);
    save_matrix(dir / (stem + "_Y.pkt"), s.Y);
    json doc;
    doc["layer"] = s.layer;
    doc["mode"] = s.mode;
    doc["seed"] = s.seed;
    doc["c"] = s.c;
    doc["n"] = s.n;
    doc["kh"] = s.kh;
    doc["kw"] = s.kw;
    doc["X"] = stem + "_X.pkt";
    doc["Y"] = stem + "_Y.pkt";
    json pos = json::array();
    for (const auto& p : s.positions) pos.push_back({p.image, p.y, p.x});
    doc["positions"] = std::move(pos);
    std::ofstream f(dir / (stem + ".json"));
    if (!f) throw IoError("cannot open for writing: " + (dir / (stem + ".json")).string());
    f << doc.dump(2) << "\n";
}

SampleSet load_sampleset(const std::filesystem::path& json_path) {
    std::ifstream f(json_path);
    if (!f) throw IoError("cannot open: " + json_path.string());
    json doc;
    try {
        doc = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("sampleset json: ") + e.what());
    }
    const auto dir = json_path.parent_path();
    SampleSet s;
    try {
        s.layer = doc.at("layer").get<std::string>();
        s.mode = doc.at("mode").get<std::string>();
        s.seed = doc.at("seed").get<u64>();
        s.c = doc.at("c").get<i64>();
        s.n = doc.at("n").get<i64>();
        s.kh = doc.at("kh").get<i64>();
        s.kw = doc.at("kw").get<i64>();
        s.X = load_matrix(dir / doc.at("X").get<std::string>());
        s.Y = load_matrix(dir / doc.at("Y").get<std::string>());
        for (const auto& p : doc.at("positions")) {
            s.positions.push_back({p.at(0).get<i64>(), p.at(1).get<i64>(), p.at(2).get<i64>()});
        }
    } catch (const json::exception& e) {
        throw ParseError("sampleset json " + json_path.string() + ": " + e.what());
    }
    if (static_cast<i64>(s.positions.size()) != s.X.rows || s.X.rows != s.Y.rows) {
        throw ParseError("sampleset " + json_path.string() + ": row count mismatch");
    }
    return s;
}

} // namespace prunekit
