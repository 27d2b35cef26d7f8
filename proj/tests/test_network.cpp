#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mapcon/network.hpp"
#include "mapcon/rng.hpp"

using namespace mapcon;

namespace {

std::vector<float> random_points(uint64_t seed, size_t n) {
    Xoshiro256ss rng(seed);
    std::vector<float> v(3 * n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
}

ModelDims desk_dims(bool disentangle = true) { return ModelDims::scaled(8, disentangle); }

} // namespace

TEST_CASE("feature_extract: shape contract and determinism") {
    const ModelDims dims = desk_dims();
    ParamStore<float> params = init_generator_params<float>(dims, 42);
    Tape<float> tape;
    BoundParams<float> bp = bind_params(tape, params);
    Tensor<float> pts = tape.constant({10, 3}, random_points(1, 10));
    LatentFeature<float> f1 = feature_extract(bp, dims, pts);
    CHECK(f1.values.shape == Shape{10, dims.d_latent()});
    CHECK(f1.d_id == dims.d_id);
    CHECK(f1.identity().shape == Shape{10, dims.d_id});
    CHECK(f1.pose().shape == Shape{10, dims.d_pose});
    LatentFeature<float> f2 = feature_extract(bp, dims, pts);
    CHECK(f1.values.vals() == f2.values.vals());
}

TEST_CASE("feature_extract is permutation-equivariant") {
    const ModelDims dims = desk_dims();
    ParamStore<float> params = init_generator_params<float>(dims, 7);
    const size_t n = 9;
    std::vector<float> pts = random_points(2, n);
    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Xoshiro256ss rng(33);
    for (size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    std::vector<float> permuted(3 * n);
    for (size_t i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) permuted[3 * i + k] = pts[3 * perm[i] + k];

    Tape<float> tape;
    BoundParams<float> bp = bind_params(tape, params);
    LatentFeature<float> f = feature_extract(bp, dims, tape.constant({n, 3}, pts));
    LatentFeature<float> fp = feature_extract(bp, dims, tape.constant({n, 3}, permuted));
    const size_t d = dims.d_latent();
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j)
            CHECK(fp.values.vals()[i * d + j] ==
                  doctest::Approx(f.values.vals()[perm[i] * d + j]).epsilon(1e-5));
}

TEST_CASE("feature_extract rejects malformed inputs") {
    const ModelDims dims = desk_dims();
    ParamStore<float> params = init_generator_params<float>(dims, 1);
    Tape<float> tape;
    BoundParams<float> bp = bind_params(tape, params);
    CHECK_THROWS_AS(feature_extract(bp, dims, tape.constant({4, 2}, std::vector<float>(8, 1.0f))),
                    TensorError);
    CHECK_THROWS_AS(feature_extract(bp, dims, tape.constant({1, 3}, std::vector<float>(3, 1.0f))),
                    TensorError);
}

TEST_CASE("correspondence with a single coupling gives T=[[1]] after row renormalization") {
    const ModelDims dims = desk_dims();
    ParamStore<float> params = init_generator_params<float>(dims, 3);
    Tape<float> tape;
    BoundParams<float> bp = bind_params(tape, params);
    std::vector<float> row(dims.d_latent());
    Xoshiro256ss rng(4);
    for (auto& v : row) v = static_cast<float>(rng.uniform(0.1, 1.0));
    LatentFeature<float> f{tape.constant({1, dims.d_latent()}, row), dims.d_id, dims.d_pose};
    Tensor<float> t = correspondence(bp, dims, f, f, SinkhornConfig{});
    Tensor<float> rn = row_normalize(t);
    CHECK(rn.shape == Shape{1, 1});
    CHECK(rn.vals()[0] == doctest::Approx(1.0f).epsilon(1e-6));
}

TEST_CASE("sinkhorn on the 2x2 anti-diagonal cost converges to the diagonal coupling") {
    Tape<double> tape;
    Tensor<double> cost = tape.constant({2, 2}, {0.0, 1.0, 1.0, 0.0});
    SinkhornConfig cfg;
    cfg.epsilon = 1e-3;
    cfg.iterations = 500;
    Tensor<double> t = sinkhorn(cost, cfg);
    CHECK(std::abs(t.vals()[0] - 0.5) <= 1e-3);
    CHECK(std::abs(t.vals()[1] - 0.0) <= 1e-3);
    CHECK(std::abs(t.vals()[2] - 0.0) <= 1e-3);
    CHECK(std::abs(t.vals()[3] - 0.5) <= 1e-3);
}

TEST_CASE("transport invariants over random feature pairs") {
    const ModelDims dims = desk_dims();
    ParamStore<float> params = init_generator_params<float>(dims, 5);
    SinkhornConfig cfg;
    cfg.iterations = 100;
    for (uint64_t trial = 0; trial < 5; ++trial) {
        Tape<float> tape;
        BoundParams<float> bp = bind_params(tape, params);
        const size_t n_id = 6 + trial, n_pose = 10 - trial;
        LatentFeature<float> fi =
            feature_extract(bp, dims, tape.constant({n_id, 3}, random_points(100 + trial, n_id)));
        LatentFeature<float> fp =
            feature_extract(bp, dims, tape.constant({n_pose, 3}, random_points(200 + trial, n_pose)));
        Tensor<float> t = correspondence(bp, dims, fi, fp, cfg);
        REQUIRE(t.shape == Shape{n_id, n_pose});
        double min_entry = 1e30;
        for (float v : t.vals()) min_entry = std::min(min_entry, static_cast<double>(v));
        CHECK(min_entry >= 0.0);
        // marginals: rows sum to 1/n_id, columns to 1/n_pose
        for (size_t i = 0; i < n_id; ++i) {
            double s = 0;
            for (size_t j = 0; j < n_pose; ++j) s += t.vals()[i * n_pose + j];
            CHECK(std::abs(s - 1.0 / n_id) <= 1e-4);
        }
        for (size_t j = 0; j < n_pose; ++j) {
            double s = 0;
            for (size_t i = 0; i < n_id; ++i) s += t.vals()[i * n_pose + j];
            CHECK(std::abs(s - 1.0 / n_pose) <= 1e-4);
        }
        // row-renormalized rows sum to one
        Tensor<float> rn = row_normalize(t);
        for (size_t i = 0; i < n_id; ++i) {
            double s = 0;
            for (size_t j = 0; j < n_pose; ++j) s += rn.vals()[i * n_pose + j];
            CHECK(std::abs(s - 1.0) <= 1e-5);
        }
    }
}

TEST_CASE("correspondence rejects zero-norm projected rows") {
    const ModelDims dims = desk_dims();
    ParamStore<float> params = init_generator_params<float>(dims, 6);
    std::fill(params.at("C.id.w").values.begin(), params.at("C.id.w").values.end(), 0.0f);
    Tape<float> tape;
    BoundParams<float> bp = bind_params(tape, params);
    LatentFeature<float> f =
        feature_extract(bp, dims, tape.constant({4, 3}, random_points(9, 4)));
    CHECK_THROWS_WITH_AS(correspondence(bp, dims, f, f, SinkhornConfig{}),
                         doctest::Contains("zero-norm"), TensorError);
}

TEST_CASE("binarize_transport: argmax, lowest-index ties, one-hot idempotence") {
    Tape<float> tape;
    Tensor<float> t1 = tape.constant({1, 3}, {0.2f, 0.5f, 0.3f});
    CHECK(binarize_transport(t1).vals() == std::vector<float>{0, 1, 0});

    Tensor<float> tie = tape.constant({1, 3}, {0.4f, 0.4f, 0.2f});
    CHECK(binarize_transport(tie).vals() == std::vector<float>{1, 0, 0});

    Tensor<float> perm = tape.constant({3, 3}, {0, 1, 0, 0, 0, 1, 1, 0, 0});
    CHECK(binarize_transport(perm).vals() == perm.vals());
}

TEST_CASE("binarize_transport marks a row maximum of T") {
    Tape<float> tape;
    Tensor<float> t = tape.constant({3, 4}, {0.1f, 0.4f, 0.3f, 0.2f,
                                             0.25f, 0.25f, 0.25f, 0.25f,
                                             0.0f, 0.0f, 0.0f, 1.0f});
    Tensor<float> b = binarize_transport(t);
    for (size_t i = 0; i < 3; ++i) {
        float mx = *std::max_element(t.vals().begin() + i * 4, t.vals().begin() + (i + 1) * 4);
        size_t ones = 0;
        for (size_t j = 0; j < 4; ++j) {
            if (b.vals()[i * 4 + j] == 1.0f) {
                ++ones;
                CHECK(t.vals()[i * 4 + j] == mx);
            } else {
                CHECK(b.vals()[i * 4 + j] == 0.0f);
            }
        }
        CHECK(ones == 1);
    }
}

TEST_CASE("warp: identity rows, uniform rows, bounding-box containment") {
    Tape<float> tape;
    const size_t n = 5;
    std::vector<float> pts = random_points(12, n);
    Tensor<float> pose = tape.constant({n, 3}, pts);

    std::vector<float> eye(n * n, 0.0f);
    for (size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0f;
    CHECK(warp(tape.constant({n, n}, eye), pose).vals() == pts);

    Tensor<float> uniform = tape.constant({2, n}, std::vector<float>(2 * n, 1.0f / n));
    Tensor<float> w = warp(uniform, pose);
    float centroid[3] = {0, 0, 0};
    for (size_t i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) centroid[k] += pts[3 * i + k] / n;
    for (size_t i = 0; i < 2; ++i)
        for (int k = 0; k < 3; ++k) CHECK(w.vals()[3 * i + k] == doctest::Approx(centroid[k]));

    // random row-stochastic T keeps warped vertices inside the pose bbox
    Xoshiro256ss rng(77);
    std::vector<float> rows(4 * n);
    for (size_t i = 0; i < 4; ++i) {
        float s = 0;
        for (size_t j = 0; j < n; ++j) {
            rows[i * n + j] = static_cast<float>(rng.uniform(0.01, 1.0));
            s += rows[i * n + j];
        }
        for (size_t j = 0; j < n; ++j) rows[i * n + j] /= s;
    }
    Tensor<float> rw = warp(tape.constant({4, n}, rows), pose);
    for (int k = 0; k < 3; ++k) {
        float lo = 1e30f, hi = -1e30f;
        for (size_t i = 0; i < n; ++i) {
            lo = std::min(lo, pts[3 * i + k]);
            hi = std::max(hi, pts[3 * i + k]);
        }
        for (size_t i = 0; i < 4; ++i) {
            CHECK(rw.vals()[3 * i + k] >= lo - 1e-5f);
            CHECK(rw.vals()[3 * i + k] <= hi + 1e-5f);
        }
    }
}

TEST_CASE("refine ignores the pose channels of the identity latent") {
    const ModelDims dims = desk_dims();
    ParamStore<float> params = init_generator_params<float>(dims, 8);
    Tape<float> tape;
    BoundParams<float> bp = bind_params(tape, params);
    const size_t n = 7;
    Tensor<float> warped = tape.constant({n, 3}, random_points(14, n));
    LatentFeature<float> feat =
        feature_extract(bp, dims, tape.constant({n, 3}, random_points(15, n)));
    Tensor<float> out1 = refine(bp, dims, warped, feat.style(dims));

    // perturb the pose columns of the latent; the identity slice is untouched
    std::vector<float> perturbed = feat.values.vals();
    const size_t d = dims.d_latent();
    for (size_t i = 0; i < n; ++i)
        for (size_t j = dims.d_id; j < d; ++j) perturbed[i * d + j] += 10.0f;
    LatentFeature<float> feat2{tape.constant({n, d}, perturbed), dims.d_id, dims.d_pose};
    Tensor<float> out2 = refine(bp, dims, warped, feat2.style(dims));
    CHECK(out1.shape == Shape{n, 3});
    CHECK(out1.vals() == out2.vals());

    // with disentanglement ablated the pose channels feed refinement and the
    // perturbation is visible
    const ModelDims nd = desk_dims(false);
    ParamStore<float> params_nd = init_generator_params<float>(nd, 8);
    Tape<float> tape2;
    BoundParams<float> bp2 = bind_params(tape2, params_nd);
    Tensor<float> warped2 = tape2.constant({n, 3}, random_points(14, n));
    LatentFeature<float> f1{tape2.constant({n, d}, feat.values.vals()), nd.d_id, nd.d_pose};
    LatentFeature<float> f2{tape2.constant({n, d}, perturbed), nd.d_id, nd.d_pose};
    CHECK(refine(bp2, nd, warped2, f1.style(nd)).vals() !=
          refine(bp2, nd, warped2, f2.style(nd)).vals());
}

TEST_CASE("refine with zero output weights produces the zero matrix") {
    const ModelDims dims = desk_dims();
    ParamStore<float> params = init_generator_params<float>(dims, 9);
    std::fill(params.at("R.out.w").values.begin(), params.at("R.out.w").values.end(), 0.0f);
    Tape<float> tape;
    BoundParams<float> bp = bind_params(tape, params);
    const size_t n = 6;
    Tensor<float> warped = tape.constant({n, 3}, random_points(16, n));
    LatentFeature<float> feat =
        feature_extract(bp, dims, tape.constant({n, 3}, random_points(17, n)));
    Tensor<float> out = refine(bp, dims, warped, feat.style(dims));
    for (float v : out.vals()) CHECK(v == 0.0f);
}

TEST_CASE("refine validates row counts and style width") {
    const ModelDims dims = desk_dims();
    ParamStore<float> params = init_generator_params<float>(dims, 10);
    Tape<float> tape;
    BoundParams<float> bp = bind_params(tape, params);
    Tensor<float> warped = tape.constant({4, 3}, random_points(18, 4));
    Tensor<float> bad_rows = tape.constant({5, dims.d_id}, std::vector<float>(5 * dims.d_id, 0.1f));
    CHECK_THROWS_AS(refine(bp, dims, warped, bad_rows), TensorError);
    Tensor<float> bad_width = tape.constant({4, dims.d_id + 1},
                                            std::vector<float>(4 * (dims.d_id + 1), 0.1f));
    CHECK_THROWS_AS(refine(bp, dims, warped, bad_width), TensorError);
}

TEST_CASE("generate: output sized by the identity input, deterministic, warped in bbox") {
    const ModelDims dims = desk_dims();
    ParamStore<float> params = init_generator_params<float>(dims, 11);
    const size_t n_pose = 12, n_id = 8;
    std::vector<float> pose_pts = random_points(21, n_pose), id_pts = random_points(22, n_id);

    Tape<float> tape;
    BoundParams<float> bp = bind_params(tape, params);
    GenerateOut<float> out = generate(bp, dims, tape.constant({n_pose, 3}, pose_pts),
                                      tape.constant({n_id, 3}, id_pts), SinkhornConfig{});
    CHECK(out.final.shape == Shape{n_id, 3});
    CHECK(out.warped.shape == Shape{n_id, 3});
    CHECK(out.transport.shape == Shape{n_id, n_pose});
    CHECK(out.binary.shape == Shape{n_id, n_pose});

    for (int k = 0; k < 3; ++k) {
        float lo = 1e30f, hi = -1e30f;
        for (size_t i = 0; i < n_pose; ++i) {
            lo = std::min(lo, pose_pts[3 * i + k]);
            hi = std::max(hi, pose_pts[3 * i + k]);
        }
        for (size_t i = 0; i < n_id; ++i) {
            CHECK(out.warped.vals()[3 * i + k] >= lo - 1e-5f);
            CHECK(out.warped.vals()[3 * i + k] <= hi + 1e-5f);
        }
    }

    Tape<float> tape2;
    BoundParams<float> bp2 = bind_params(tape2, params);
    GenerateOut<float> out2 = generate(bp2, dims, tape2.constant({n_pose, 3}, pose_pts),
                                       tape2.constant({n_id, 3}, id_pts), SinkhornConfig{});
    CHECK(out.final.vals() == out2.final.vals());
    CHECK(out.warped.vals() == out2.warped.vals());
    CHECK(out.transport.vals() == out2.transport.vals());
}

TEST_CASE("ModelDims validation and scaling") {
    ModelDims bad;
    bad.d3 = 100; // breaks d3 == d_id + d_pose
    CHECK_THROWS_AS(bad.validate(), TensorError);
    ModelDims s = ModelDims::scaled(8);
    CHECK(s.d_id == 16);
    CHECK(s.d_pose == 16);
    CHECK(s.d3 == s.d_latent());
    s.validate();
    CHECK(ModelDims::scaled(8, false).refine_style_width() == 16);
    CHECK(ModelDims::scaled(8, true).refine_style_width() == 16);
}
