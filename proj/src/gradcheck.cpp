#include "mapcon/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mapcon/losses.hpp"
#include "mapcon/network.hpp"
#include "mapcon/rng.hpp"

namespace mapcon {

namespace {

using Fn = std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)>;
using T = Tensor<double>;

// deterministic base points; keepout pushes values away from kinks at zero
std::vector<double> rand_vals(uint64_t seed, size_t n, double lo, double hi, double keepout = 0.0) {
    Xoshiro256ss rng(mix_seed(0x67726164ull, seed)); // "grad"
    std::vector<double> v(n);
    for (auto& x : v) {
        do {
            x = rng.uniform(lo, hi);
        } while (keepout > 0.0 && std::abs(x) < keepout);
    }
    return v;
}

T constant(Tape<double>& t, Shape shape, uint64_t seed, double lo, double hi) {
    const size_t n = shape_size(shape);
    return t.constant(std::move(shape), rand_vals(seed, n, lo, hi));
}

// reduce any output to a scalar with per-coordinate weights so every entry of
// the upstream gradient is distinct
T probe(Tape<double>& t, const T& y) {
    std::vector<double> w(y.size());
    for (size_t i = 0; i < w.size(); ++i) w[i] = 0.25 + 0.05 * static_cast<double>(i % 17);
    return mean_all(mul_elem(y, t.constant(y.shape, std::move(w))));
}

struct Registry {
    std::vector<GradCheckCase> cases;
    uint64_t seed = 1;
    uint64_t salt = 0;

    void add(std::string name, std::string group, Shape shape, Fn fn, double lo = -1.0,
             double hi = 1.0, double keepout = 0.0) {
        GradCheckCase c;
        c.name = std::move(name);
        c.group = std::move(group);
        c.x0 = rand_vals(mix_seed(seed, ++salt), shape_size(shape), lo, hi, keepout);
        c.shape = std::move(shape);
        c.fn = std::move(fn);
        cases.push_back(std::move(c));
    }
};

std::string dim_tag(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

void add_op_cases(Registry& r) {
    const std::vector<Shape> shapes = {{4, 3}, {2, 5}, {6, 2}};
    auto each = [&](const std::string& op, Fn fn, double lo = -1.0, double hi = 1.0,
                    double keepout = 0.0) {
        for (const Shape& s : shapes) r.add(op + dim_tag(s), "ops", s, fn, lo, hi, keepout);
    };

    each("add", [](Tape<double>& t, const T& x) { return probe(t, add(x, mul_scalar(x, 0.5))); });
    each("sub", [](Tape<double>& t, const T& x) { return probe(t, sub(mul_scalar(x, 2.0), x)); });
    each("mul_elem",
         [](Tape<double>& t, const T& x) { return probe(t, mul_elem(x, add_scalar(x, 1.5))); });
    each("div_elem", [](Tape<double>& t, const T& x) {
        return probe(t, div_elem(x, add_scalar(mul_elem(x, x), 1.0)));
    });
    each("mul_scalar", [](Tape<double>& t, const T& x) { return probe(t, mul_scalar(x, -1.7)); });
    each("add_scalar",
         [](Tape<double>& t, const T& x) { return probe(t, mul_elem(x, add_scalar(x, 2.0))); });
    each("relu", [](Tape<double>& t, const T& x) { return probe(t, relu(x)); }, -1.0, 1.0, 0.05);
    each("relu_hinge", [](Tape<double>& t, const T& x) { return probe(t, relu_hinge(x)); }, -1.0,
         1.0, 0.05);
    each("exp", [](Tape<double>& t, const T& x) { return probe(t, exp_op(x)); });
    each("log", [](Tape<double>& t, const T& x) { return probe(t, log_op(x)); }, 0.5, 2.0);
    each("abs", [](Tape<double>& t, const T& x) { return probe(t, abs_op(x)); }, -1.0, 1.0, 0.05);
    each("sigmoid", [](Tape<double>& t, const T& x) { return probe(t, sigmoid(x)); }, -2.0, 2.0);
    each("sqrt", [](Tape<double>& t, const T& x) { return probe(t, sqrt_op(x)); }, 0.3, 2.0);
    each("matmul",
         [](Tape<double>& t, const T& x) { return probe(t, matmul(x, transpose(x))); });
    each("transpose", [](Tape<double>& t, const T& x) { return probe(t, transpose(x)); });
    each("instance_norm",
         [](Tape<double>& t, const T& x) { return probe(t, instance_norm(x)); });
    each("mean_all", [](Tape<double>&, const T& x) { return mean_all(mul_elem(x, x)); });
    each("sum_axis0", [](Tape<double>& t, const T& x) { return probe(t, sum_axis(x, 0)); });
    each("sum_axis1", [](Tape<double>& t, const T& x) { return probe(t, sum_axis(x, 1)); });
    each("l2_norm_rows",
         [](Tape<double>& t, const T& x) { return probe(t, l2_norm_rows(x)); });
    each("channel_slice",
         [](Tape<double>& t, const T& x) { return probe(t, channel_slice(x, 1, x.shape[1])); });
    each("concat_channels", [](Tape<double>& t, const T& x) {
        return probe(t, concat_channels(x, mul_scalar(x, 0.5)));
    });
    each("add_colvec",
         [](Tape<double>& t, const T& x) { return probe(t, add_colvec(x, l2_norm_rows(x))); });
    each("add_rowvec",
         [](Tape<double>& t, const T& x) { return probe(t, add_rowvec(x, sum_axis(x, 0))); });
    each("mul_colvec",
         [](Tape<double>& t, const T& x) { return probe(t, mul_colvec(x, l2_norm_rows(x))); });
    each("mul_rowvec",
         [](Tape<double>& t, const T& x) { return probe(t, mul_rowvec(x, sum_axis(x, 0))); });
    each("div_colvec", [](Tape<double>& t, const T& x) {
        return probe(t, div_colvec(x, add_scalar(l2_norm_rows(x), 1.0)));
    });
    each("logsumexp_rows",
         [](Tape<double>& t, const T& x) { return probe(t, logsumexp_rows(x)); });
    each("logsumexp_cols",
         [](Tape<double>& t, const T& x) { return probe(t, logsumexp_cols(x)); });
    each("gather_rows", [](Tape<double>& t, const T& x) {
        // repeated indices exercise the scatter accumulation in backward
        return probe(t, gather_rows(x, {0, 1, 0, x.shape[0] - 1, 1}));
    });

    // parameter-side gradients of the structured layers
    r.add("pointwise_linear.x[5x3]", "ops", {5, 3}, [](Tape<double>& t, const T& x) {
        return probe(t, pointwise_linear(x, constant(t, {3, 4}, 900, -1, 1),
                                         constant(t, {1, 4}, 901, -1, 1)));
    });
    r.add("pointwise_linear.w[3x4]", "ops", {3, 4}, [](Tape<double>& t, const T& x) {
        return probe(t, pointwise_linear(constant(t, {5, 3}, 902, -1, 1), x,
                                         constant(t, {1, 4}, 903, -1, 1)));
    });
    r.add("pointwise_linear.b[1x4]", "ops", {1, 4}, [](Tape<double>& t, const T& x) {
        return probe(t, pointwise_linear(constant(t, {5, 3}, 904, -1, 1),
                                         constant(t, {3, 4}, 905, -1, 1), x));
    });
    r.add("conv1d_k3.x[6x2]", "ops", {6, 2}, [](Tape<double>& t, const T& x) {
        return probe(t, conv1d_k3(x, constant(t, {3, 2, 3}, 910, -1, 1),
                                  constant(t, {1, 3}, 911, -1, 1)));
    });
    r.add("conv1d_k3.w[3x2x3]", "ops", {3, 2, 3}, [](Tape<double>& t, const T& x) {
        return probe(t, conv1d_k3(constant(t, {6, 2}, 912, -1, 1), x,
                                  constant(t, {1, 3}, 913, -1, 1)));
    });
    r.add("conv1d_k3.b[1x3]", "ops", {1, 3}, [](Tape<double>& t, const T& x) {
        return probe(t, conv1d_k3(constant(t, {6, 2}, 914, -1, 1),
                                  constant(t, {3, 2, 3}, 915, -1, 1), x));
    });

    // the unrolled transport plan as one differentiable block
    r.add("sinkhorn[3x3]", "ops", {3, 3}, [](Tape<double>& t, const T& x) {
        return probe(t, sinkhorn(x, SinkhornConfig{0.1, 15}));
    }, 0.0, 1.0);
}

void add_loss_cases(Registry& r) {
    const EdgeList edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}};
    const LossWeights<double> w;

    r.add("rec_loss.pred[5x3]", "losses", {5, 3}, [](Tape<double>& t, const T& x) {
        return rec_loss(x, constant(t, {5, 3}, 100, -1, 1));
    });
    r.add("edge_loss.pred[5x3]", "losses", {5, 3}, [edges](Tape<double>& t, const T& x) {
        return edge_loss(x, constant(t, {5, 3}, 101, -1, 1), edges);
    });
    r.add("edge_loss.ref[5x3]", "losses", {5, 3}, [edges](Tape<double>& t, const T& x) {
        return edge_loss(constant(t, {5, 3}, 102, -1, 1), x, edges);
    });
    r.add("supervised_loss.pred[5x3]", "losses", {5, 3}, [edges, w](Tape<double>& t, const T& x) {
        return supervised_loss(x, constant(t, {5, 3}, 103, -1, 1),
                               constant(t, {5, 3}, 104, -1, 1), edges, w);
    });
    r.add("mesh_triplet.anchor[5x4]", "losses", {5, 4}, [](Tape<double>& t, const T& x) {
        return mesh_triplet(x, constant(t, {5, 4}, 110, -1, 1), constant(t, {5, 4}, 111, -1, 1),
                            1.0);
    });
    r.add("mesh_triplet.positive[5x4]", "losses", {5, 4}, [](Tape<double>& t, const T& x) {
        return mesh_triplet(constant(t, {5, 4}, 112, -1, 1), x, constant(t, {5, 4}, 113, -1, 1),
                            1.0);
    });
    r.add("mesh_triplet.negative[5x4]", "losses", {5, 4}, [](Tape<double>& t, const T& x) {
        return mesh_triplet(constant(t, {5, 4}, 114, -1, 1), constant(t, {5, 4}, 115, -1, 1), x,
                            1.0);
    });
    r.add("mesh_cc_loss.pose_w[5x4]", "losses", {5, 4}, [](Tape<double>& t, const T& x) {
        return mesh_cc_loss(constant(t, {5, 4}, 120, -1, 1), x, constant(t, {5, 4}, 121, -1, 1),
                            constant(t, {5, 4}, 122, -1, 1), constant(t, {5, 4}, 123, -1, 1),
                            constant(t, {5, 4}, 124, -1, 1), 1.0);
    });
    r.add("mesh_cc_loss.id_w[5x4]", "losses", {5, 4}, [](Tape<double>& t, const T& x) {
        return mesh_cc_loss(constant(t, {5, 4}, 125, -1, 1), constant(t, {5, 4}, 126, -1, 1),
                            constant(t, {5, 4}, 127, -1, 1), constant(t, {5, 4}, 128, -1, 1),
                            constant(t, {5, 4}, 129, -1, 1), x, 1.0);
    });

    // one-hot reordering matrix used by the self-consistency term
    auto one_hot_b = [](Tape<double>& t) {
        std::vector<double> b(25, 0.0);
        const size_t perm[5] = {2, 0, 4, 1, 3};
        for (size_t i = 0; i < 5; ++i) b[i * 5 + perm[i]] = 1.0;
        return t.constant({5, 5}, std::move(b));
    };
    r.add("mesh_ss_loss.pose_w[5x4]", "losses", {5, 4}, [one_hot_b](Tape<double>& t, const T& x) {
        return mesh_ss_loss(x, constant(t, {5, 4}, 130, -1, 1), constant(t, {5, 4}, 131, -1, 1),
                            constant(t, {5, 4}, 132, -1, 1), constant(t, {5, 4}, 133, -1, 1),
                            constant(t, {5, 4}, 134, -1, 1), one_hot_b(t), 1.0);
    });
    r.add("mesh_ss_loss.pose_v[5x4]", "losses", {5, 4}, [one_hot_b](Tape<double>& t, const T& x) {
        return mesh_ss_loss(constant(t, {5, 4}, 135, -1, 1), x, constant(t, {5, 4}, 136, -1, 1),
                            constant(t, {5, 4}, 137, -1, 1), constant(t, {5, 4}, 138, -1, 1),
                            constant(t, {5, 4}, 139, -1, 1), one_hot_b(t), 1.0);
    });
    r.add("mesh_ss_loss.id_v[5x4]", "losses", {5, 4}, [one_hot_b](Tape<double>& t, const T& x) {
        return mesh_ss_loss(constant(t, {5, 4}, 140, -1, 1), constant(t, {5, 4}, 141, -1, 1),
                            constant(t, {5, 4}, 142, -1, 1), constant(t, {5, 4}, 143, -1, 1),
                            constant(t, {5, 4}, 144, -1, 1), x, one_hot_b(t), 1.0);
    });
    r.add("point_triplet.w[6x4]", "losses", {6, 4}, [](Tape<double>& t, const T& x) {
        return point_triplet(x, constant(t, {6, 4}, 150, -1, 1), 1.0);
    });
    r.add("point_triplet.u[6x4]", "losses", {6, 4}, [](Tape<double>& t, const T& x) {
        return point_triplet(constant(t, {6, 4}, 151, -1, 1), x, 1.0);
    });
    r.add("unsup_loss.cc_out[5x3]", "losses", {5, 3}, [edges, w](Tape<double>& t, const T& x) {
        return unsup_loss(x, mul_scalar(x, 0.9), constant(t, {5, 3}, 160, -1, 1),
                          constant(t, {5, 3}, 161, -1, 1), edges, w);
    });
    r.add("labelled_total[4x3]", "losses", {4, 3}, [w](Tape<double>&, const T& x) {
        return labelled_total(mean_all(mul_elem(x, x)), mean_all(sigmoid(x)),
                              mean_all(exp_op(x)), w);
    });
    r.add("unlabelled_total[4x3]", "losses", {4, 3}, [w](Tape<double>&, const T& x) {
        return unlabelled_total(mean_all(mul_elem(x, x)), mean_all(sigmoid(x)),
                                mean_all(exp_op(x)), mean_all(sqrt_op(add_scalar(mul_elem(x, x), 1.0))),
                                w);
    });
}

} // namespace

std::vector<GradCheckCase> gradcheck_cases(uint64_t seed) {
    Registry r;
    r.seed = seed;
    add_op_cases(r);
    add_loss_cases(r);
    return std::move(r.cases);
}

std::vector<GradCheckResult> run_gradchecks(const std::string& which, uint64_t seed, double tol,
                                            const std::vector<std::string>& corrupted) {
    if (which != "ops" && which != "losses" && which != "all")
        throw TensorError("run_gradchecks: which must be ops, losses or all, got '" + which + "'");
    std::vector<GradCheckResult> out;
    for (GradCheckCase& c : gradcheck_cases(seed)) {
        if (which != "all" && c.group != which) continue;
        c.tol = tol;
        Fn fn = c.fn;
        if (std::find(corrupted.begin(), corrupted.end(), c.name) != corrupted.end()) {
            // value-only leak: shows up in finite differences, not on the tape
            fn = [inner = c.fn](Tape<double>& t, const T& x) {
                Tensor<double> leak = mean_all(stop_gradient(x));
                return add(inner(t, x), mul_scalar(leak, 0.01));
            };
        }
        GradCheckResult res;
        res.name = c.name;
        res.group = c.group;
        res.report = finite_difference_check(fn, c.shape, c.x0, c.h, c.tol);
        out.push_back(std::move(res));
    }
    return out;
}

} // namespace mapcon
