#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mapcon/optim.hpp"
#include "mapcon/rng.hpp"
#include "mapcon/tensor.hpp"

namespace mapcon {

// Widths of the generator, full profile 64/128/256 trunk, 128+128 latent,
// 256 correspondence projection, 1024/512/256 refinement. scale() divides
// every width, keeping the identity/pose split even.
struct ModelDims {
    size_t d1 = 64, d2 = 128, d3 = 256;
    size_t d_id = 128, d_pose = 128;
    size_t d_corr = 256;
    size_t r1 = 1024, r2 = 512, r3 = 256;
    // when false, the refinement module receives the full latent instead of
    // the identity channels only (the "without LD" ablation)
    bool disentangle = true;

    size_t d_latent() const { return d_id + d_pose; }
    size_t refine_style_width() const { return disentangle ? d_id : d_pose; }

    static ModelDims scaled(size_t divisor, bool disentangle = true) {
        auto shrink = [divisor](size_t w) { return std::max<size_t>(1, w / divisor); };
        ModelDims d;
        d.d1 = shrink(d.d1);
        d.d2 = shrink(d.d2);
        d.d3 = shrink(d.d3);
        d.d_id = shrink(d.d_id);
        d.d_pose = shrink(d.d_pose);
        d.d_corr = shrink(d.d_corr);
        d.r1 = shrink(d.r1);
        d.r2 = shrink(d.r2);
        d.r3 = shrink(d.r3);
        d.disentangle = disentangle;
        return d;
    }

    void validate() const {
        if (d1 == 0 || d2 == 0 || d3 == 0 || d_id == 0 || d_pose == 0 || d_corr == 0 ||
            r1 == 0 || r2 == 0 || r3 == 0)
            throw TensorError("ModelDims: all widths must be positive");
        if (d3 != d_latent())
            throw TensorError("ModelDims: trunk output width must equal d_id + d_pose");
    }
};

struct SinkhornConfig {
    double epsilon = 0.05;
    size_t iterations = 30;
};

// N x D per-vertex features; columns [0, d_id) are identity channels,
// [d_id, D) are pose channels.
template <typename T>
struct LatentFeature {
    Tensor<T> values;
    size_t d_id = 0;
    size_t d_pose = 0;

    Tensor<T> identity() const { return channel_slice(values, 0, d_id); }
    Tensor<T> pose() const { return channel_slice(values, d_id, d_id + d_pose); }
    // channels routed to the refinement style path: the identity slice, or —
    // with disentanglement ablated — the pose slice, which starves refinement
    // of shape information
    Tensor<T> style(const ModelDims& dims) const {
        return dims.disentangle ? identity() : pose();
    }
};

namespace netdetail {

// He-style fan-in scaled uniform init
template <typename T>
std::vector<T> init_weight(size_t fan_in, size_t count, Xoshiro256ss& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<T> w(count);
    for (auto& v : w) v = static_cast<T>(rng.uniform(-limit, limit));
    return w;
}

template <typename T>
void add_linear(ParamStore<T>& p, Xoshiro256ss& rng, const std::string& name, size_t din, size_t dout) {
    p.add(name + ".w", {din, dout}, init_weight<T>(din, din * dout, rng));
    p.add(name + ".b", {1, dout}, std::vector<T>(dout, T(0)));
}

template <typename T>
void add_conv3(ParamStore<T>& p, Xoshiro256ss& rng, const std::string& name, size_t cin, size_t cout) {
    p.add(name + ".w", {3, cin, cout}, init_weight<T>(3 * cin, 3 * cin * cout, rng));
    p.add(name + ".b", {1, cout}, std::vector<T>(cout, T(0)));
}

template <typename T>
Tensor<T> linear(const BoundParams<T>& bp, const std::string& name, const Tensor<T>& x) {
    Tensor<T> b = bp[name + ".b"];
    // biases are stored 1 x D; pointwise_linear takes a flat bias
    return pointwise_linear(x, bp[name + ".w"], b);
}

} // namespace netdetail

// All trainable tensors of the generator, seeded deterministically.
template <typename T>
ParamStore<T> init_generator_params(const ModelDims& dims, uint64_t seed) {
    dims.validate();
    ParamStore<T> p;
    Xoshiro256ss rng(mix_seed(seed, 0x6d617063ull)); // "mapc"
    using namespace netdetail;
    // feature extractor F: 3 pointwise layers + 4 residual blocks
    add_linear(p, rng, "F.l1", 3, dims.d1);
    add_linear(p, rng, "F.l2", dims.d1, dims.d2);
    add_linear(p, rng, "F.l3", dims.d2, dims.d3);
    for (int i = 0; i < 4; ++i) {
        const std::string rb = "F.rb" + std::to_string(i);
        add_linear(p, rng, rb + ".a", dims.d_latent(), dims.d_latent());
        add_linear(p, rng, rb + ".b", dims.d_latent(), dims.d_latent());
    }
    // correspondence projections (one per stream)
    add_linear(p, rng, "C.id", dims.d_latent(), dims.d_corr);
    add_linear(p, rng, "C.pose", dims.d_latent(), dims.d_corr);
    // refinement R: conv3 entry, interleaved pointwise layers, 3 ElaIN residual
    // blocks, 3-channel output layer
    const size_t style_w = dims.refine_style_width();
    add_conv3(p, rng, "R.entry", 3, dims.r1);
    add_linear(p, rng, "R.pw1", dims.r1, dims.r1);
    const size_t widths[3] = {dims.r1, dims.r2, dims.r3};
    for (int i = 0; i < 3; ++i) {
        const std::string eb = "R.eb" + std::to_string(i);
        add_linear(p, rng, eb + ".style", style_w, widths[i]);
        add_linear(p, rng, eb + ".blend", widths[i], widths[i]);
        add_linear(p, rng, eb + ".body", widths[i], widths[i]);
        if (i < 2) add_linear(p, rng, "R.pw" + std::to_string(i + 2), widths[i], widths[i + 1]);
    }
    add_linear(p, rng, "R.out", dims.r3, 3);
    return p;
}

// F: shared-weight pointwise trunk + residual blocks; permutation-equivariant.
template <typename T>
LatentFeature<T> feature_extract(const BoundParams<T>& bp, const ModelDims& dims, const Tensor<T>& points) {
    using namespace netdetail;
    if (points.shape.size() != 2 || points.shape[1] != 3)
        throw TensorError("feature_extract: expected N x 3 points, got " + shape_str(points.shape));
    if (points.shape[0] < 2)
        throw TensorError("feature_extract: needs at least 2 points for instance statistics");
    Tensor<T> h = relu(instance_norm(linear(bp, "F.l1", points)));
    h = relu(instance_norm(linear(bp, "F.l2", h)));
    h = relu(instance_norm(linear(bp, "F.l3", h)));
    for (int i = 0; i < 4; ++i) {
        const std::string rb = "F.rb" + std::to_string(i);
        Tensor<T> y = relu(instance_norm(linear(bp, rb + ".a", h)));
        h = add(h, linear(bp, rb + ".b", y));
    }
    return {h, dims.d_id, dims.d_pose};
}

// Entropic OT in the log domain over a cosine-distance cost; differentiable
// through the unrolled iterations. Marginals are uniform.
template <typename T>
Tensor<T> sinkhorn(const Tensor<T>& cost, const SinkhornConfig& cfg) {
    detail::require_matrix("sinkhorn", cost.shape);
    const size_t n = cost.shape[0], m = cost.shape[1];
    Tensor<T> logits = mul_scalar(cost, static_cast<T>(-1.0 / cfg.epsilon));
    Tensor<T> log_a = make_full<T>({n, 1}, static_cast<T>(std::log(1.0 / static_cast<double>(n))));
    Tensor<T> log_b = make_full<T>({1, m}, static_cast<T>(std::log(1.0 / static_cast<double>(m))));
    Tensor<T> log_v = make_full<T>({1, m}, T(0));
    Tensor<T> log_u = make_full<T>({n, 1}, T(0));
    for (size_t k = 0; k < cfg.iterations; ++k) {
        log_u = sub(log_a, logsumexp_rows(add_rowvec(logits, log_v)));
        log_v = sub(log_b, logsumexp_cols(add_colvec(logits, log_u)));
    }
    return exp_op(add_rowvec(add_colvec(logits, log_u), log_v));
}

// cost C_jk = 1 - cosine(f_j, g_k) over projected features
template <typename T>
Tensor<T> correspondence(const BoundParams<T>& bp, const ModelDims& dims,
                         const LatentFeature<T>& feat_id, const LatentFeature<T>& feat_pose,
                         const SinkhornConfig& cfg) {
    using namespace netdetail;
    if (feat_id.values.shape[1] != dims.d_latent() || feat_pose.values.shape[1] != dims.d_latent())
        throw TensorError("correspondence: feature width does not match ModelDims");
    Tensor<T> f = linear(bp, "C.id", feat_id.values);
    Tensor<T> g = linear(bp, "C.pose", feat_pose.values);
    auto check_norms = [](const Tensor<T>& x, const char* which) {
        const size_t n = x.shape[0], c = x.shape[1];
        for (size_t i = 0; i < n; ++i) {
            T acc = T(0);
            for (size_t j = 0; j < c; ++j) acc += x.vals()[i * c + j] * x.vals()[i * c + j];
            if (acc <= T(0))
                throw TensorError(std::string("correspondence: zero-norm projected ") + which +
                                  " feature row " + std::to_string(i) + " (cosine undefined)");
        }
    };
    check_norms(f, "identity");
    check_norms(g, "pose");
    Tensor<T> fn = div_colvec(f, l2_norm_rows(f));
    Tensor<T> gn = div_colvec(g, l2_norm_rows(g));
    Tensor<T> cos_sim = matmul(fn, transpose(gn));
    Tensor<T> cost = add_scalar(mul_scalar(cos_sim, T(-1)), T(1));
    return sinkhorn(cost, cfg);
}

// Row-argmax one-hot companion of T; ties break to the lowest index.
// Not differentiable; the result never joins the tape.
template <typename T>
Tensor<T> binarize_transport(const Tensor<T>& t) {
    detail::require_matrix("binarize_transport", t.shape);
    const size_t n = t.shape[0], m = t.shape[1];
    std::vector<T> b(n * m, T(0));
    for (size_t i = 0; i < n; ++i) {
        size_t best = 0;
        T mx = t.vals()[i * m];
        for (size_t j = 1; j < m; ++j)
            if (t.vals()[i * m + j] > mx) {
                mx = t.vals()[i * m + j];
                best = j;
            }
        b[i * m + best] = T(1);
    }
    Tensor<T> out = make_tensor<T>({n, m}, std::move(b));
    out.tape = t.tape;
    return out;
}

// Rows rescaled to sum to 1 so warped vertices are convex combinations.
template <typename T>
Tensor<T> row_normalize(const Tensor<T>& t) {
    return div_colvec(t, sum_axis(t, 1));
}

// w = T_normalized * pose_points
template <typename T>
Tensor<T> warp(const Tensor<T>& transport_rows, const Tensor<T>& pose_points) {
    return matmul(transport_rows, pose_points);
}

namespace netdetail {

// Style-conditioned normalization: per-channel statistics of a projected style
// feature modulate the instance-normalized content, blended with the identity
// path through a learned per-channel gate.
template <typename T>
Tensor<T> elain(const BoundParams<T>& bp, const std::string& prefix, const Tensor<T>& h,
                const Tensor<T>& style_feat) {
    const size_t n = style_feat.shape[0];
    Tensor<T> s = linear(bp, prefix + ".style", style_feat);
    Tensor<T> mu = mul_scalar(sum_axis(s, 0), T(1) / static_cast<T>(n));
    Tensor<T> ex2 = mul_scalar(sum_axis(mul_elem(s, s), 0), T(1) / static_cast<T>(n));
    Tensor<T> var = sub(ex2, mul_elem(mu, mu));
    Tensor<T> sigma = sqrt_op(add_scalar(relu(var), T(1e-5)));
    Tensor<T> hn = instance_norm(h, T(1e-5));
    Tensor<T> a = sigmoid(linear(bp, prefix + ".blend", mu));
    Tensor<T> styled = add_rowvec(mul_rowvec(hn, sigma), mu);
    Tensor<T> ones = make_full<T>(a.shape, T(1));
    return add(mul_rowvec(styled, a), mul_rowvec(h, sub(ones, a)));
}

template <typename T>
Tensor<T> elain_block(const BoundParams<T>& bp, const std::string& prefix, const Tensor<T>& h,
                      const Tensor<T>& style_feat) {
    Tensor<T> y = relu(elain(bp, prefix, h, style_feat));
    return add(h, linear(bp, prefix + ".body", y));
}

} // namespace netdetail

// Refinement R: conv3 entry over the warped coordinates, three ElaIN residual
// blocks with interleaved pointwise layers, 3-channel output.
template <typename T>
Tensor<T> refine(const BoundParams<T>& bp, const ModelDims& dims, const Tensor<T>& warped,
                 const Tensor<T>& id_style_feat) {
    using namespace netdetail;
    if (warped.shape[0] != id_style_feat.shape[0])
        throw TensorError("refine: warped rows " + std::to_string(warped.shape[0]) +
                          " vs style rows " + std::to_string(id_style_feat.shape[0]));
    if (id_style_feat.shape[1] != dims.refine_style_width())
        throw TensorError("refine: style width " + std::to_string(id_style_feat.shape[1]) +
                          " does not match ModelDims");
    Tensor<T> h = relu(conv1d_k3(warped, bp["R.entry.w"], bp["R.entry.b"]));
    h = relu(linear(bp, "R.pw1", h));
    h = elain_block(bp, "R.eb0", h, id_style_feat);
    h = relu(linear(bp, "R.pw2", h));
    h = elain_block(bp, "R.eb1", h, id_style_feat);
    h = relu(linear(bp, "R.pw3", h));
    h = elain_block(bp, "R.eb2", h, id_style_feat);
    return linear(bp, "R.out", h);
}

template <typename T>
struct GenerateOut {
    Tensor<T> warped;     // N_id x 3
    Tensor<T> final;      // N_id x 3
    Tensor<T> transport;  // raw Sinkhorn output, N_id x N_pose
    Tensor<T> binary;     // row-argmax one-hot companion
    LatentFeature<T> feat_pose; // features of the pose input
    LatentFeature<T> feat_id;   // features of the identity input
};

// Full pipeline: shared-weight feature extraction, OT correspondence,
// warping, and style-conditioned refinement.
template <typename T>
GenerateOut<T> generate(const BoundParams<T>& bp, const ModelDims& dims, const Tensor<T>& pose_points,
                        const Tensor<T>& id_points, const SinkhornConfig& cfg) {
    GenerateOut<T> out;
    out.feat_pose = feature_extract(bp, dims, pose_points);
    out.feat_id = feature_extract(bp, dims, id_points);
    out.transport = correspondence(bp, dims, out.feat_id, out.feat_pose, cfg);
    out.binary = binarize_transport(out.transport);
    out.warped = warp(row_normalize(out.transport), pose_points);
    out.final = refine(bp, dims, out.warped, out.feat_id.style(dims));
    return out;
}

} // namespace mapcon
