#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mapcon/tensor.hpp"

namespace mapcon {

template <typename T>
struct LossWeights {
    T lambda_rec = T(1000);
    T lambda_edge = T(0.5);
    T lambda_mesh_cc = T(1);
    T lambda_mesh_ss = T(1);
    T lambda_point = T(1);
    T margin = T(1);
};

using EdgeList = std::vector<std::pair<uint32_t, uint32_t>>;

namespace detail {

template <typename T>
void require_same_points(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    require_matrix(op, a.shape);
    require_matrix(op, b.shape);
    if (a.shape != b.shape) shape_fail(op, a.shape, b.shape);
}

} // namespace detail

// mean squared coordinate error: (1/3N) * ||pred - gt||_F^2
template <typename T>
Tensor<T> rec_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
    detail::require_same_points("rec_loss", pred, gt);
    Tensor<T> d = sub(pred, gt);
    return mean_all(mul_elem(d, d));
}

// mean over edges of |len(pred edge) / len(ref edge) - 1|
template <typename T>
Tensor<T> edge_loss(const Tensor<T>& pred, const Tensor<T>& ref, const EdgeList& edges) {
    detail::require_same_points("edge_loss", pred, ref);
    if (edges.empty()) throw TensorError("edge_loss: empty edge set");
    std::vector<size_t> js, ks;
    js.reserve(edges.size());
    ks.reserve(edges.size());
    for (const auto& [j, k] : edges) {
        js.push_back(j);
        ks.push_back(k);
    }
    Tensor<T> ref_vec = sub(gather_rows(ref, js), gather_rows(ref, ks));
    Tensor<T> ref_len = l2_norm_rows(ref_vec);
    for (size_t e = 0; e < edges.size(); ++e)
        if (ref_len.vals()[e] <= T(1e-6))
            throw TensorError("edge_loss: zero-length reference edge (" + std::to_string(edges[e].first) +
                              "," + std::to_string(edges[e].second) + ")");
    Tensor<T> pred_vec = sub(gather_rows(pred, js), gather_rows(pred, ks));
    Tensor<T> ratio = div_elem(l2_norm_rows(pred_vec), ref_len);
    return mean_all(abs_op(add_scalar(ratio, T(-1))));
}

// lambda_rec * rec + lambda_edge * edge; the supervised objective
template <typename T>
Tensor<T> supervised_loss(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& id_input,
                          const EdgeList& edges, const LossWeights<T>& w) {
    Tensor<T> total = mul_scalar(rec_loss(pred, gt), w.lambda_rec);
    if (w.lambda_edge != T(0) && !edges.empty())
        total = add(total, mul_scalar(edge_loss(pred, id_input, edges), w.lambda_edge));
    return total;
}

// hinge applied once to the mesh-mean of per-vertex distance differences:
// (m + (1/N) sum_j [||a_j - p_j|| - ||a_j - n_j||])^+
template <typename T>
Tensor<T> mesh_triplet(const Tensor<T>& anchor, const Tensor<T>& positive, const Tensor<T>& negative, T margin) {
    detail::require_same_points("mesh_triplet", anchor, positive);
    detail::require_same_points("mesh_triplet", anchor, negative);
    Tensor<T> dp = l2_norm_rows(sub(anchor, positive));
    Tensor<T> dn = l2_norm_rows(sub(anchor, negative));
    Tensor<T> mean_gap = mean_all(sub(dp, dn));
    return relu_hinge(add_scalar(mean_gap, margin));
}

// triplet pair for cross-consistency: inputs share one identity and vertex order
template <typename T>
Tensor<T> mesh_cc_loss(const Tensor<T>& pose_x1, const Tensor<T>& pose_w, const Tensor<T>& pose_x2,
                       const Tensor<T>& id_x1, const Tensor<T>& id_x2, const Tensor<T>& id_w, T margin) {
    return add(mesh_triplet(pose_x1, pose_w, pose_x2, margin),
               mesh_triplet(id_x1, id_x2, id_w, margin));
}

template <typename T>
void require_one_hot_rows(const Tensor<T>& b) {
    detail::require_matrix("mesh_ss_loss", b.shape);
    const size_t n = b.shape[0], m = b.shape[1];
    for (size_t i = 0; i < n; ++i) {
        size_t ones = 0;
        for (size_t j = 0; j < m; ++j) {
            const T v = b.vals()[i * m + j];
            if (v == T(1)) ++ones;
            else if (v != T(0)) throw TensorError("mesh_ss_loss: B rows must be one-hot (row " + std::to_string(i) + ")");
        }
        if (ones != 1) throw TensorError("mesh_ss_loss: B rows must be one-hot (row " + std::to_string(i) + ")");
    }
}

// triplet pair for self-consistency; B reorders the pose-side features so they
// align with the identity-side vertex order
template <typename T>
Tensor<T> mesh_ss_loss(const Tensor<T>& pose_w, const Tensor<T>& pose_v, const Tensor<T>& pose_u,
                       const Tensor<T>& id_w, const Tensor<T>& id_u, const Tensor<T>& id_v,
                       const Tensor<T>& b, T margin) {
    require_one_hot_rows(b);
    Tensor<T> reordered_pose_v = matmul(b, pose_v);
    Tensor<T> reordered_id_v = matmul(b, id_v);
    return add(mesh_triplet(pose_w, reordered_pose_v, pose_u, margin),
               mesh_triplet(id_w, id_u, reordered_id_v, margin));
}

// per-point hinge; negatives are the positive features shifted by one index
// with wraparound: (1/N) sum_j (m + ||w_j - u_j|| - ||w_j - u_{j+1}||)^+
template <typename T>
Tensor<T> point_triplet(const Tensor<T>& feat_w, const Tensor<T>& feat_u, T margin) {
    detail::require_same_points("point_triplet", feat_w, feat_u);
    const size_t n = feat_w.shape[0];
    if (n < 2) throw TensorError("point_triplet: needs at least 2 points (no negative exists)");
    std::vector<size_t> shifted(n);
    for (size_t j = 0; j < n; ++j) shifted[j] = (j + 1) % n;
    Tensor<T> neg = gather_rows(feat_u, shifted);
    Tensor<T> dp = l2_norm_rows(sub(feat_w, feat_u));
    Tensor<T> dn = l2_norm_rows(sub(feat_w, neg));
    return mean_all(relu_hinge(add_scalar(sub(dp, dn), margin)));
}

// cross-consistency reconstruction objective
template <typename T>
Tensor<T> cc_loss(const Tensor<T>& out_x1, const Tensor<T>& gt_x1, const Tensor<T>& id_x2,
                  const EdgeList& edges, const LossWeights<T>& w) {
    return supervised_loss(out_x1, gt_x1, id_x2, edges, w);
}

// self-consistency reconstruction objective (same form, second-pass output)
template <typename T>
Tensor<T> sc_loss(const Tensor<T>& out_x1, const Tensor<T>& gt_x1, const Tensor<T>& id_x2,
                  const EdgeList& edges, const LossWeights<T>& w) {
    return supervised_loss(out_x1, gt_x1, id_x2, edges, w);
}

template <typename T>
Tensor<T> unsup_loss(const Tensor<T>& cc_out, const Tensor<T>& sc_out, const Tensor<T>& gt_x1,
                     const Tensor<T>& id_x2, const EdgeList& edges, const LossWeights<T>& w) {
    return add(cc_loss(cc_out, gt_x1, id_x2, edges, w), sc_loss(sc_out, gt_x1, id_x2, edges, w));
}

// total for a labelled iteration: L_s + lambda_ms * L_mesh_ss + lambda_p * L_point
template <typename T>
Tensor<T> labelled_total(const Tensor<T>& l_sup, const Tensor<T>& l_mesh_ss, const Tensor<T>& l_point,
                         const LossWeights<T>& w) {
    return add(l_sup, add(mul_scalar(l_mesh_ss, w.lambda_mesh_ss), mul_scalar(l_point, w.lambda_point)));
}

// total for an unlabelled iteration:
// L_us + lambda_mc * L_mesh_cc + lambda_ms * L_mesh_ss + lambda_p * L_point
template <typename T>
Tensor<T> unlabelled_total(const Tensor<T>& l_unsup, const Tensor<T>& l_mesh_cc, const Tensor<T>& l_mesh_ss,
                           const Tensor<T>& l_point, const LossWeights<T>& w) {
    Tensor<T> total = add(l_unsup, mul_scalar(l_mesh_cc, w.lambda_mesh_cc));
    total = add(total, mul_scalar(l_mesh_ss, w.lambda_mesh_ss));
    return add(total, mul_scalar(l_point, w.lambda_point));
}

} // namespace mapcon
