#include <doctest.h>

#include <algorithm>

#include "prunekit/conv.hpp"
#include "prunekit/forward.hpp"
#include "prunekit/linalg.hpp"
#include "prunekit/reconstruction.hpp"
#include "testutil.hpp"

using namespace prunekit;
using namespace testutil;

namespace {

std::vector<i64> all_channels(i64 c) {
    std::vector<i64> v(static_cast<size_t>(c));
    for (i64 i = 0; i < c; ++i) v[static_cast<size_t>(i)] = i;
    return v;
}

std::vector<double> unit_beta(i64 c) { return std::vector<double>(static_cast<size_t>(c), 1.0); }

// Exact optimal residual for a subset via the QR oracle.
double qr_subset_residual(const SampleSet& s, const std::vector<i64>& active) {
    const i64 kk = s.kh * s.kw;
    const i64 k = static_cast<i64>(active.size()) * kk;
    MatD a(s.X.rows, k);
    for (i64 r = 0; r < s.X.rows; ++r) {
        for (size_t q = 0; q < active.size(); ++q) {
            for (i64 p = 0; p < kk; ++p) {
                a(r, static_cast<i64>(q) * kk + p) = s.X(r, active[q] * kk + p);
            }
        }
    }
    MatD b(s.Y.rows, s.n);
    for (i64 r = 0; r < s.Y.rows; ++r) {
        for (i64 j = 0; j < s.n; ++j) b(r, j) = s.Y(r, j);
    }
    const MatD x = qr_least_squares(a, b);
    double res = 0.0;
    for (i64 r = 0; r < s.X.rows; ++r) {
        for (i64 j = 0; j < s.n; ++j) {
            double pred = 0.0;
            for (i64 q = 0; q < k; ++q) pred += a(r, q) * x(q, j);
            const double d = b(r, j) - pred;
            res += d * d;
        }
    }
    return res / frob_sq(s.Y.v);
}

} // namespace

TEST_CASE("consistent system is recovered") {
    const i64 rows = 80, c = 5, n = 4, kh = 2, kw = 2;
    SampleSet s;
    s.c = c;
    s.n = n;
    s.kh = kh;
    s.kw = kw;
    s.X = random_matrix(rows, c * kh * kw, 3);
    const Tensor4 w0 = random_tensor(n, c, kh, kw, 4);
    MatF w0m(n, c * kh * kw);
    w0m.v.assign(w0.data.begin(), w0.data.end());
    s.Y = matmul_nt(s.X, w0m);

    const ReconstructedWeights rec = reconstruct(s, unit_beta(c), all_channels(c), 0.0);
    CHECK(rec.residual_rel <= 1e-8);
    for (size_t i = 0; i < rec.w_prime.v.size(); ++i) {
        CHECK(std::abs(rec.w_prime.v[i] - w0m.v[i]) <=
              1e-4 * (1.0 + std::abs(static_cast<double>(w0m.v[i]))));
    }
}

TEST_CASE("zero target gives zero weights and zero residual") {
    SampleSet s = correlated_instance(40, 3, 2, 2, 2, 8);
    for (float& y : s.Y.v) y = 0.0f;
    const ReconstructedWeights rec = reconstruct(s, unit_beta(3), all_channels(3), 0.0);
    CHECK(rec.residual_rel == 0.0);
    for (float w : rec.w_prime.v) CHECK(w == 0.0f);
}

TEST_CASE("empty active set yields residual 1 against nonzero target") {
    const SampleSet s = correlated_instance(30, 3, 2, 2, 2, 9);
    const ReconstructedWeights rec = reconstruct(s, std::vector<double>(3, 0.0), std::vector<i64>{}, 0.0);
    CHECK(rec.residual_rel == 1.0);
}

TEST_CASE("matches the QR normal-equations oracle") {
    for (u64 seed = 0; seed < 10; ++seed) {
        const SampleSet s = correlated_instance(120, 5, 3, 2, 2, mix64(40 + seed));
        std::vector<i64> active = {0, 2, 4};
        const ReconstructedWeights rec = reconstruct(s, unit_beta(5), active, 0.0);
        const double want = qr_subset_residual(s, active);
        CHECK(rel_err(rec.residual_rel, want) < 1e-6);
    }
}

TEST_CASE("beta scaling is absorbed by the solve") {
    const SampleSet s = correlated_instance(60, 4, 2, 2, 2, 55);
    std::vector<double> beta = {2.0, 1.0, -0.5, 1.0};
    const std::vector<i64> active = {0, 1, 2, 3};
    const ReconstructedWeights a = reconstruct(s, beta, active, 0.0);
    const ReconstructedWeights b = reconstruct(s, unit_beta(4), active, 0.0);
    CHECK(rel_err(a.residual_rel, b.residual_rel) < 1e-9);
}

TEST_CASE("residual orthogonality at ridge 0") {
    for (u64 seed = 0; seed < 10; ++seed) {
        const SampleSet s = correlated_instance(100, 4, 3, 2, 2, mix64(70 + seed));
        const std::vector<i64> active = {0, 1, 3};
        const ReconstructedWeights rec = reconstruct(s, unit_beta(4), active, 0.0);
        const i64 kk = 4;
        double worst = 0.0;
        for (i64 q = 0; q < static_cast<i64>(active.size()) * kk; ++q) {
            const i64 col = active[static_cast<size_t>(q / kk)] * kk + q % kk;
            for (i64 j = 0; j < s.n; ++j) {
                double dot = 0.0;
                for (i64 r = 0; r < s.X.rows; ++r) {
                    double pred = 0.0;
                    for (i64 i : active) {
                        for (i64 p = 0; p < kk; ++p) {
                            pred += static_cast<double>(s.X(r, i * kk + p)) *
                                    static_cast<double>(rec.w_prime(j, i * kk + p));
                        }
                    }
                    dot += static_cast<double>(s.X(r, col)) *
                           (static_cast<double>(s.Y(r, j)) - pred);
                }
                worst = std::max(worst, std::abs(dot));
            }
        }
        const double scale = std::sqrt(frob_sq(s.X.v)) * std::sqrt(frob_sq(s.Y.v));
        CHECK(worst <= 1e-4 * scale);
    }
}

TEST_CASE("superset of channels never fits worse") {
    for (u64 seed = 0; seed < 8; ++seed) {
        const SampleSet s = correlated_instance(90, 6, 2, 2, 2, mix64(200 + seed));
        double prev = 2.0;
        std::vector<i64> active;
        for (i64 i = 0; i < 6; ++i) {
            active.push_back(i);
            const ReconstructedWeights rec = reconstruct(s, unit_beta(6), active, 0.0);
            CHECK(rec.residual_rel <= prev * (1.0 + 1e-9));
            prev = rec.residual_rel;
        }
    }
}

TEST_CASE("singular Gram falls back to the default ridge") {
    SampleSet s;
    s.c = 2;
    s.n = 1;
    s.kh = s.kw = 1;
    s.X = MatF(20, 2);
    auto rng = make_rng(31);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (i64 r = 0; r < 20; ++r) {
        const float v = static_cast<float>(dist(rng));
        s.X(r, 0) = v;
        s.X(r, 1) = v; // duplicate channel -> exactly singular Gram
    }
    s.Y = MatF(20, 1);
    for (i64 r = 0; r < 20; ++r) s.Y(r, 0) = s.X(r, 0) * 2.0f;
    const std::vector<i64> act01 = {0, 1};
    const ReconstructedWeights rec = reconstruct(s, unit_beta(2), act01, 0.0);
    CHECK(rec.ridge_used == 1e-8);
    CHECK(rec.residual_rel < 1e-6);
}

TEST_CASE("renormalize: unit-norm channels are untouched") {
    Tensor4 w(2, 3, 1, 1);
    w.at(0, 0, 0, 0) = 1.0f;
    w.at(1, 1, 0, 0) = 1.0f;
    w.at(0, 2, 0, 0) = 0.6f;
    w.at(1, 2, 0, 0) = 0.8f;
    std::vector<double> beta = {0.5, -1.0, 2.0};
    const Tensor4 w_before = w;
    const std::vector<double> b_before = beta;
    renormalize(beta, w);
    for (size_t i = 0; i < beta.size(); ++i) {
        CHECK(beta[i] == doctest::Approx(b_before[i]).epsilon(1e-6));
    }
    CHECK(max_abs_diff(w.data, w_before.data) < 1e-6);
}

TEST_CASE("renormalize: scale moves into beta, product invariant") {
    Tensor4 w(1, 1, 1, 1);
    w.data[0] = 3.0f;
    std::vector<double> beta = {1.0};
    renormalize(beta, w);
    CHECK(beta[0] == doctest::Approx(3.0));
    CHECK(w.data[0] == doctest::Approx(1.0f));
}

TEST_CASE("renormalize invariants on random weights") {
    for (u64 seed = 0; seed < 20; ++seed) {
        Tensor4 w = random_tensor(4, 5, 3, 3, mix64(300 + seed), 2.0);
        std::vector<double> beta(5);
        auto rng = make_rng(seed);
        std::normal_distribution<double> dist(0.0, 1.0);
        for (double& b : beta) b = dist(rng);
        const Tensor4 w0 = w;
        const std::vector<double> beta0 = beta;
        renormalize(beta, w);
        for (i64 i = 0; i < 5; ++i) {
            double norm_sq = 0.0;
            for (i64 j = 0; j < 4; ++j) {
                for (i64 p = 0; p < 9; ++p) {
                    const float v = w.at(j, i, p / 3, p % 3);
                    norm_sq += static_cast<double>(v) * static_cast<double>(v);
                }
            }
            CHECK(std::abs(std::sqrt(norm_sq) - 1.0) <= 1e-6);
            for (i64 j = 0; j < 4; ++j) {
                for (i64 p = 0; p < 9; ++p) {
                    const double got = beta[static_cast<size_t>(i)] *
                                       static_cast<double>(w.at(j, i, p / 3, p % 3));
                    const double want = beta0[static_cast<size_t>(i)] *
                                        static_cast<double>(w0.at(j, i, p / 3, p % 3));
                    CHECK(std::abs(got - want) <= 1e-6 * (1.0 + std::abs(want)));
                }
            }
        }
    }
}

TEST_CASE("renormalize zero-norm channel forces beta to zero") {
    Tensor4 w(2, 2, 1, 1);
    w.at(0, 0, 0, 0) = 1.0f;
    std::vector<double> beta = {1.0, 5.0};
    renormalize(beta, w);
    CHECK(beta[1] == 0.0);
    CHECK(w.at(0, 1, 0, 0) == 0.0f);
}

TEST_CASE("fold_final_weights: all-ones beta keeps everything") {
    const Tensor4 w = random_tensor(3, 4, 2, 2, 91);
    const auto [folded, retained] = fold_final_weights(std::vector<double>(4, 1.0), w);
    CHECK(retained == std::vector<i64>{0, 1, 2, 3});
    CHECK(folded.data == w.data);
}

TEST_CASE("fold_final_weights drops zero-beta channels in order") {
    const Tensor4 w = random_tensor(2, 5, 1, 1, 92);
    const std::vector<double> beta = {1.0, 0.0, 2.0, 0.0, -1.0};
    const auto [folded, retained] = fold_final_weights(beta, w);
    CHECK(retained == std::vector<i64>{0, 2, 4});
    REQUIRE(folded.dims[1] == 3);
    for (i64 j = 0; j < 2; ++j) {
        CHECK(folded.at(j, 0, 0, 0) == doctest::Approx(1.0 * w.at(j, 0, 0, 0)));
        CHECK(folded.at(j, 1, 0, 0) == doctest::Approx(2.0 * w.at(j, 2, 0, 0)));
        CHECK(folded.at(j, 2, 0, 0) == doctest::Approx(-1.0 * w.at(j, 4, 0, 0)));
    }
}

TEST_CASE("pruned conv on sampled channels reproduces the refit predictions") {
    const ModelGraph g = make_toy_vgg(42);
    const Tensor4 in = random_batch(2, g.input_shape, 17);
    const SampleSet s = sample_layer(g, g, "conv2", in, {2, 6, 99}, TargetMode::SameLayer);
    std::vector<i64> active = {1, 2, 3, 5, 8, 11, 13, 15};
    std::vector<double> beta(static_cast<size_t>(s.c), 0.0);
    for (i64 i : active) beta[static_cast<size_t>(i)] = 1.0;

    const ReconstructedWeights rec = reconstruct(s, beta, active, 0.0);
    Tensor4 w_prime = weights_from_matrix(rec.w_prime, s.c, s.kh, s.kw);
    std::vector<double> beta2 = beta;
    renormalize(beta2, w_prime);
    const auto [folded, retained] = fold_final_weights(beta2, w_prime);
    CHECK(retained == active);

    const Tensor4 fmap = forward_tap(g, in, {"conv2", true});
    Tensor4 sampled(fmap.dims[0], static_cast<i64>(retained.size()), fmap.dims[2],
                    fmap.dims[3]);
    for (i64 img = 0; img < fmap.dims[0]; ++img) {
        for (size_t k = 0; k < retained.size(); ++k) {
            std::copy_n(fmap.plane(img, retained[k]), fmap.dims[2] * fmap.dims[3],
                        sampled.plane(img, static_cast<i64>(k)));
        }
    }
    Node conv = g.nodes[g.find("conv2")];
    conv.weights = folded;
    conv.has_bias = false;
    conv.bias.clear();
    const Tensor4 out = conv_forward(conv, sampled);

    for (size_t r = 0; r < s.positions.size(); ++r) {
        const auto& p = s.positions[r];
        for (i64 j = 0; j < s.n; ++j) {
            double want = 0.0;
            for (i64 i : active) {
                for (i64 q = 0; q < s.kh * s.kw; ++q) {
                    want += static_cast<double>(s.X(static_cast<i64>(r), i * 9 + q)) *
                            static_cast<double>(rec.w_prime(j, i * 9 + q));
                }
            }
            CHECK(std::abs(static_cast<double>(out.at(p.image, j, p.y, p.x)) - want) < 1e-5);
        }
    }
}
