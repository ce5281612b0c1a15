#include <doctest.h>

#include <set>

#include "prunekit/conv.hpp"
#include "prunekit/forward.hpp"
#include "prunekit/io.hpp"
#include "prunekit/pruner.hpp"
#include "testutil.hpp"

using namespace prunekit;
using namespace testutil;

namespace {

// Frobenius residual of Y against X * W^T for the layer's own weights.
double self_residual(const SampleSet& s, const Tensor4& w) {
    MatF wm(w.dims[0], w.dims[1] * w.dims[2] * w.dims[3]);
    wm.v.assign(w.data.begin(), w.data.end());
    const MatF pred = matmul_nt(s.X, wm);
    double err = 0.0;
    for (size_t i = 0; i < pred.v.size(); ++i) {
        const double d = static_cast<double>(pred.v[i]) - static_cast<double>(s.Y.v[i]);
        err += d * d;
    }
    return err;
}

} // namespace

TEST_CASE("same-layer targets are exactly X W^T before any pruning") {
    const ModelGraph g = make_toy_vgg(42);
    const Tensor4 in = random_batch(3, g.input_shape, 5);
    const SamplePlan plan{3, 6, 9};
    const SampleSet s = sample_layer(g, g, "conv3", in, plan, TargetMode::SameLayer);
    const Node& conv = g.nodes[g.find("conv3")];
    CHECK(self_residual(s, conv.weights) == 0.0);

    // Bias must not leak into the targets.
    const SampleSet so = sample_layer(g, g, "conv3", in, plan, TargetMode::OriginalModel);
    CHECK(self_residual(so, conv.weights) <= 1e-8);
}

TEST_CASE("saturation: more positions requested than exist") {
    ModelGraph g;
    g.input_shape = {2, 3, 3};
    g.nodes.push_back(conv_node("c", 2, 2, 3, 1, 0, 4)); // 1x1 output map
    g.validate();
    const Tensor4 in = random_batch(4, g.input_shape, 6);
    const SampleSet s = sample_layer(g, g, "c", in, {4, 10, 1}, TargetMode::SameLayer);
    CHECK(s.X.rows == 4); // one sample per image, no duplicates
    for (const auto& p : s.positions) {
        CHECK(p.y == 0);
        CHECK(p.x == 0);
    }
}

TEST_CASE("positions are unique per image and deterministic in the seed") {
    const ModelGraph g = make_toy_vgg(42);
    const Tensor4 in = random_batch(2, g.input_shape, 7);
    const SamplePlan plan{2, 10, 123};
    const SampleSet a = sample_layer(g, g, "conv2", in, plan, TargetMode::SameLayer);
    const SampleSet b = sample_layer(g, g, "conv2", in, plan, TargetMode::SameLayer);
    CHECK(a.X.v == b.X.v);
    CHECK(a.Y.v == b.Y.v);
    for (i64 img = 0; img < 2; ++img) {
        std::set<std::pair<i64, i64>> seen;
        for (const auto& p : a.positions) {
            if (p.image != img) continue;
            CHECK(seen.insert({p.y, p.x}).second);
        }
    }
    const SampleSet c = sample_layer(g, g, "conv2", in, {2, 10, 124}, TargetMode::SameLayer);
    CHECK(a.X.v != c.X.v);
}

TEST_CASE("column block i of X is the im2col slice of channel i") {
    const ModelGraph g = make_toy_vgg(42);
    const Tensor4 in = random_batch(2, g.input_shape, 8);
    const SampleSet s = sample_layer(g, g, "conv2", in, {2, 5, 3}, TargetMode::SameLayer);
    const Tensor4 fmap = forward_tap(g, in, {"conv2", true});
    const i64 kk = s.kh * s.kw;
    for (size_t r = 0; r < s.positions.size(); ++r) {
        const auto& p = s.positions[r];
        const auto row = im2col_row_reference(fmap, p.image, p.y, p.x, s.kh, s.kw, 1, 1, 1, 1);
        for (i64 i = 0; i < s.c; ++i) {
            for (i64 q = 0; q < kk; ++q) {
                CHECK(s.X(static_cast<i64>(r), i * kk + q) ==
                      row[static_cast<size_t>(i * kk + q)]);
            }
        }
    }
}

TEST_CASE("original-model targets come from the un-pruned graph") {
    // 3-layer toy model; layer 1 "pruned" by zeroing half of conv1's
    // filters in the current copy, which changes conv2's input.
    ModelGraph orig;
    orig.input_shape = {2, 8, 8};
    orig.nodes.push_back(conv_node("c1", 4, 2, 3, 1, 1, 31));
    orig.nodes.push_back(relu_node("r1"));
    orig.nodes.push_back(conv_node("c2", 3, 4, 3, 1, 1, 32));
    orig.nodes.push_back(relu_node("r2"));
    orig.nodes.push_back(conv_node("c3", 2, 3, 3, 1, 1, 33));
    orig.validate();
    ModelGraph cur = orig;
    for (i64 p = 0; p < cur.nodes[0].weights.size() / 2; ++p) cur.nodes[0].weights.data[p] = 0;

    const Tensor4 in = random_batch(3, orig.input_shape, 9);
    const SamplePlan plan{3, 4, 77};
    const SampleSet s = sample_layer(cur, orig, "c2", in, plan, TargetMode::OriginalModel);

    // Oracle: tap both graphs, slice patches and recompute both sides.
    const Tensor4 cur_map = forward_tap(cur, in, {"c2", true});
    const Tensor4 orig_map = forward_tap(orig, in, {"c2", true});
    const Node& conv = orig.nodes[orig.find("c2")];
    MatF wm(conv.weights.dims[0], conv.weights.dims[1] * 9);
    wm.v.assign(conv.weights.data.begin(), conv.weights.data.end());
    for (size_t r = 0; r < s.positions.size(); ++r) {
        const auto& p = s.positions[r];
        const auto xrow = im2col_row_reference(cur_map, p.image, p.y, p.x, 3, 3, 1, 1, 1, 1);
        for (i64 k = 0; k < s.X.cols; ++k) {
            CHECK(s.X(static_cast<i64>(r), k) == xrow[static_cast<size_t>(k)]);
        }
        const auto yrow = im2col_row_reference(orig_map, p.image, p.y, p.x, 3, 3, 1, 1, 1, 1);
        for (i64 j = 0; j < s.n; ++j) {
            double want = 0.0;
            for (i64 k = 0; k < wm.cols; ++k) {
                want += static_cast<double>(yrow[static_cast<size_t>(k)]) *
                        static_cast<double>(wm(j, k));
            }
            CHECK(std::abs(static_cast<double>(s.Y(static_cast<i64>(r), j)) - want) < 1e-4);
        }
    }
}

TEST_CASE("residual-last targets reduce to Y2 when nothing is pruned") {
    const ModelGraph g = make_toy_resnet(42);
    const Tensor4 in = random_batch(2, g.input_shape, 10);
    const SamplePlan plan{2, 6, 5};
    const SampleSet compensated = sample_residual_last(g, g, "block2", in, plan);
    const SampleSet plain =
        sample_layer(g, g, "block2_c", in, plan, TargetMode::OriginalModel);
    REQUIRE(compensated.Y.v.size() == plain.Y.v.size());
    CHECK(max_abs_diff(compensated.Y.v, plain.Y.v) < 1e-5);
    CHECK(compensated.X.v == plain.X.v);
}

TEST_CASE("residual-last targets equal Y1 - Y1' when branch weights are zero") {
    ModelGraph orig;
    orig.input_shape = {2, 6, 6};
    orig.nodes.push_back(conv_node("stem", 3, 2, 3, 1, 1, 50));
    orig.nodes.push_back(residual_begin_node("b"));
    orig.nodes.push_back(conv_node("b_a", 3, 3, 1, 1, 0, 51));
    orig.nodes.push_back(relu_node("b_r"));
    Node last = conv_node("b_c", 3, 3, 1, 1, 0, 52, false);
    for (float& w : last.weights.data) w = 0.0f; // zero branch output conv
    orig.nodes.push_back(last);
    orig.nodes.push_back(residual_add_node("b_add", "b"));
    orig.validate();

    ModelGraph cur = orig;
    // Perturb the stem so the current shortcut drifts.
    for (float& w : cur.nodes[0].weights.data) w *= 0.5f;

    const Tensor4 in = random_batch(2, orig.input_shape, 12);
    const SampleSet s = sample_residual_last(cur, orig, "b", in, {2, 8, 3});

    const Tensor4 y1 = forward_tap(orig, in, {"b", false});
    const Tensor4 y1p = forward_tap(cur, in, {"b", false});
    for (size_t r = 0; r < s.positions.size(); ++r) {
        const auto& p = s.positions[r];
        for (i64 j = 0; j < s.n; ++j) {
            const double want =
                static_cast<double>(y1.at(p.image, j, p.y, p.x)) -
                static_cast<double>(y1p.at(p.image, j, p.y, p.x));
            CHECK(std::abs(static_cast<double>(s.Y(static_cast<i64>(r), j)) - want) < 1e-5);
        }
    }
}

TEST_CASE("residual-last on a pruned-first-block net matches hand taps") {
    const ModelGraph orig = make_toy_resnet(42);
    ModelGraph cur = orig;
    // Crude "pruning" of block1: zero some branch weights so the shortcut
    // into block3 drifts from the original.
    Node& b1c = cur.nodes[cur.find("block1_c")];
    for (i64 p = 0; p < b1c.weights.size() / 3; ++p) b1c.weights.data[p] = 0.0f;

    const Tensor4 in = random_batch(2, orig.input_shape, 13);
    const SamplePlan plan{2, 5, 21};
    const SampleSet s = sample_residual_last(cur, orig, "block3", in, plan);

    const Tensor4 y1 = forward_tap(orig, in, {"block3", false});
    const Tensor4 y1p = forward_tap(cur, in, {"block3", false});
    const Tensor4 branch_in = forward_tap(orig, in, {"block3_c", true});
    const Node& conv = orig.nodes[orig.find("block3_c")];
    for (size_t r = 0; r < s.positions.size(); ++r) {
        const auto& p = s.positions[r];
        for (i64 j = 0; j < s.n; ++j) {
            double y2 = 0.0;
            for (i64 ch = 0; ch < conv.weights.dims[1]; ++ch) {
                y2 += static_cast<double>(branch_in.at(p.image, ch, p.y, p.x)) *
                      static_cast<double>(conv.weights.at(j, ch, 0, 0));
            }
            const double want = static_cast<double>(y1.at(p.image, j, p.y, p.x)) -
                                static_cast<double>(y1p.at(p.image, j, p.y, p.x)) + y2;
            CHECK(std::abs(static_cast<double>(s.Y(static_cast<i64>(r), j)) - want) < 1e-4);
        }
    }
}

TEST_CASE("sample sets serialize and load back") {
    const ModelGraph g = make_toy_vgg(42);
    const Tensor4 in = random_batch(2, g.input_shape, 14);
    const SampleSet s = sample_layer(g, g, "conv2", in, {2, 4, 8}, TargetMode::SameLayer);
    const auto dir = std::filesystem::temp_directory_path() / "prunekit_test_samples";
    std::filesystem::remove_all(dir);
    save_sampleset(s, dir, "conv2");
    const SampleSet t = load_sampleset(dir / "conv2.json");
    CHECK(t.X.v == s.X.v);
    CHECK(t.Y.v == s.Y.v);
    CHECK(t.c == s.c);
    CHECK(t.positions.size() == s.positions.size());
    CHECK(t.mode == s.mode);
}
