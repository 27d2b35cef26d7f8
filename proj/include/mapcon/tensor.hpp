#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mapcon {

using Shape = std::vector<size_t>;

struct TensorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline size_t shape_size(const Shape& s) {
    size_t n = 1;
    for (size_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <typename T> class Tape;

// Dense row-major tensor. Values are immutable after construction; a tensor
// participating in a recorded computation carries its tape node id.
template <typename T>
struct Tensor {
    Shape shape;
    std::shared_ptr<std::vector<T>> values;
    Tape<T>* tape = nullptr;
    int node = -1;
    bool requires_grad = false;

    size_t size() const { return values ? values->size() : 0; }
    size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    const std::vector<T>& vals() const { return *values; }
    T item() const {
        if (size() != 1) throw TensorError("item: tensor is not scalar, shape " + shape_str(shape));
        return (*values)[0];
    }
};

template <typename T>
Tensor<T> make_tensor(Shape shape, std::vector<T> vals) {
    if (shape_size(shape) != vals.size())
        throw TensorError("make_tensor: shape " + shape_str(shape) + " does not match " +
                          std::to_string(vals.size()) + " values");
    Tensor<T> t;
    t.shape = std::move(shape);
    t.values = std::make_shared<std::vector<T>>(std::move(vals));
    return t;
}

template <typename T>
Tensor<T> make_full(Shape shape, T value) {
    const size_t n = shape_size(shape);
    return make_tensor<T>(std::move(shape), std::vector<T>(n, value));
}

// Gradients keyed by tape node id.
template <typename T>
struct GradMap {
    std::unordered_map<int, std::vector<T>> grads;

    const std::vector<T>* find(const Tensor<T>& t) const {
        if (t.node < 0) return nullptr;
        auto it = grads.find(t.node);
        return it == grads.end() ? nullptr : &it->second;
    }
    const std::vector<T>& at(const Tensor<T>& t) const {
        const auto* g = find(t);
        if (!g) throw TensorError("GradMap: tensor has no recorded gradient");
        return *g;
    }
};

// Single-writer record of executed operations. Rebuilt every training step.
template <typename T>
class Tape {
public:
    bool strict = false; // reject non-finite op inputs

    Tensor<T> leaf(Shape shape, std::vector<T> vals, bool requires_grad = false) {
        Tensor<T> t = make_tensor<T>(std::move(shape), std::move(vals));
        t.tape = this;
        if (requires_grad) {
            t.requires_grad = true;
            t.node = record({}, t.size(), {});
            nodes_[t.node].is_leaf = true;
        }
        return t;
    }

    Tensor<T> constant(Shape shape, std::vector<T> vals) {
        Tensor<T> t = make_tensor<T>(std::move(shape), std::move(vals));
        t.tape = this;
        return t;
    }

    using BackFn = std::function<void(Tape<T>&, const std::vector<T>&)>;

    int record(std::vector<int> parents, size_t out_size, BackFn back) {
        Node n;
        n.parents = std::move(parents);
        n.out_size = out_size;
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        grads_.emplace_back();
        return static_cast<int>(nodes_.size()) - 1;
    }

    // Accumulation buffer for a node, allocated on first touch.
    std::vector<T>& gbuf(int node) {
        auto& g = grads_[static_cast<size_t>(node)];
        if (g.empty()) g.assign(nodes_[static_cast<size_t>(node)].out_size, T(0));
        return g;
    }

    size_t node_count() const { return nodes_.size(); }

    GradMap<T> backward(const Tensor<T>& loss) {
        if (loss.size() != 1)
            throw TensorError("backward: loss must be scalar, got shape " + shape_str(loss.shape));
        if (loss.node < 0 || loss.tape != this)
            throw TensorError("backward: loss is not recorded on this tape");
        for (auto& g : grads_) g.clear();
        gbuf(loss.node)[0] = T(1);
        for (int i = loss.node; i >= 0; --i) {
            auto& g = grads_[static_cast<size_t>(i)];
            if (g.empty()) continue;
            const Node& n = nodes_[static_cast<size_t>(i)];
            if (n.back) n.back(*this, g);
        }
        GradMap<T> out;
        for (size_t i = 0; i < nodes_.size(); ++i) {
            if (!nodes_[i].is_leaf) continue;
            if (grads_[i].empty()) grads_[i].assign(nodes_[i].out_size, T(0));
            out.grads.emplace(static_cast<int>(i), std::move(grads_[i]));
            grads_[i].clear();
        }
        return out;
    }

private:
    struct Node {
        std::vector<int> parents;
        size_t out_size = 0;
        BackFn back;
        bool is_leaf = false;
    };
    std::vector<Node> nodes_;
    std::vector<std::vector<T>> grads_;
};

namespace detail {

template <typename T>
Tape<T>* tape_of(std::initializer_list<const Tensor<T>*> ins) {
    Tape<T>* tp = nullptr;
    for (const auto* t : ins) {
        if (t->tape) {
            if (tp && tp != t->tape) throw TensorError("op: inputs belong to different tapes");
            tp = t->tape;
        }
    }
    return tp;
}

template <typename T>
bool any_recorded(std::initializer_list<const Tensor<T>*> ins) {
    for (const auto* t : ins)
        if (t->node >= 0) return true;
    return false;
}

template <typename T>
void check_finite(const char* op, std::initializer_list<const Tensor<T>*> ins) {
    Tape<T>* tp = tape_of(ins);
    if (!tp || !tp->strict) return;
    for (const auto* t : ins)
        for (T v : t->vals())
            if (!std::isfinite(static_cast<double>(v)))
                throw TensorError(std::string(op) + ": non-finite input value under strict mode");
}

template <typename T>
Tensor<T> result(Shape shape, std::vector<T> vals, Tape<T>* tp) {
    Tensor<T> out = make_tensor<T>(std::move(shape), std::move(vals));
    out.tape = tp;
    return out;
}

[[noreturn]] inline void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

inline void require_matrix(const char* op, const Shape& s) {
    if (s.size() != 2) throw TensorError(std::string(op) + ": expected a 2-d tensor, got " + shape_str(s));
}

} // namespace detail

// ---------------------------------------------------------------------------
// kernels
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape) detail::shape_fail("add", a.shape, b.shape);
    detail::check_finite("add", {&a, &b});
    std::vector<T> v(a.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a.vals()[i] + b.vals()[i];
    Tensor<T> out = detail::result(a.shape, std::move(v), detail::tape_of({&a, &b}));
    if (out.tape && detail::any_recorded({&a, &b})) {
        int an = a.node, bn = b.node;
        out.requires_grad = true;
        out.node = out.tape->record({an, bn}, out.size(), [an, bn](Tape<T>& t, const std::vector<T>& g) {
            if (an >= 0) {
                auto& ga = t.gbuf(an);
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bn >= 0) {
                auto& gb = t.gbuf(bn);
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape) detail::shape_fail("sub", a.shape, b.shape);
    detail::check_finite("sub", {&a, &b});
    std::vector<T> v(a.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a.vals()[i] - b.vals()[i];
    Tensor<T> out = detail::result(a.shape, std::move(v), detail::tape_of({&a, &b}));
    if (out.tape && detail::any_recorded({&a, &b})) {
        int an = a.node, bn = b.node;
        out.requires_grad = true;
        out.node = out.tape->record({an, bn}, out.size(), [an, bn](Tape<T>& t, const std::vector<T>& g) {
            if (an >= 0) {
                auto& ga = t.gbuf(an);
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bn >= 0) {
                auto& gb = t.gbuf(bn);
                for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul_elem(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape) detail::shape_fail("mul_elem", a.shape, b.shape);
    detail::check_finite("mul_elem", {&a, &b});
    std::vector<T> v(a.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a.vals()[i] * b.vals()[i];
    Tensor<T> out = detail::result(a.shape, std::move(v), detail::tape_of({&a, &b}));
    if (out.tape && detail::any_recorded({&a, &b})) {
        int an = a.node, bn = b.node;
        auto av = a.values, bv = b.values;
        out.requires_grad = true;
        out.node = out.tape->record({an, bn}, out.size(), [an, bn, av, bv](Tape<T>& t, const std::vector<T>& g) {
            if (an >= 0) {
                auto& ga = t.gbuf(an);
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*bv)[i];
            }
            if (bn >= 0) {
                auto& gb = t.gbuf(bn);
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * (*av)[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> div_elem(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape) detail::shape_fail("div_elem", a.shape, b.shape);
    detail::check_finite("div_elem", {&a, &b});
    std::vector<T> v(a.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a.vals()[i] / b.vals()[i];
    Tensor<T> out = detail::result(a.shape, std::move(v), detail::tape_of({&a, &b}));
    if (out.tape && detail::any_recorded({&a, &b})) {
        int an = a.node, bn = b.node;
        auto av = a.values, bv = b.values;
        out.requires_grad = true;
        out.node = out.tape->record({an, bn}, out.size(), [an, bn, av, bv](Tape<T>& t, const std::vector<T>& g) {
            if (an >= 0) {
                auto& ga = t.gbuf(an);
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / (*bv)[i];
            }
            if (bn >= 0) {
                auto& gb = t.gbuf(bn);
                for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * (*av)[i] / ((*bv)[i] * (*bv)[i]);
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
    detail::check_finite("mul_scalar", {&x});
    std::vector<T> v(x.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = x.vals()[i] * c;
    Tensor<T> out = detail::result(x.shape, std::move(v), x.tape);
    if (x.node >= 0) {
        int xn = x.node;
        out.requires_grad = true;
        out.node = out.tape->record({xn}, out.size(), [xn, c](Tape<T>& t, const std::vector<T>& g) {
            auto& gx = t.gbuf(xn);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * c;
        });
    }
    return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
    detail::check_finite("add_scalar", {&x});
    std::vector<T> v(x.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = x.vals()[i] + c;
    Tensor<T> out = detail::result(x.shape, std::move(v), x.tape);
    if (x.node >= 0) {
        int xn = x.node;
        out.requires_grad = true;
        out.node = out.tape->record({xn}, out.size(), [xn](Tape<T>& t, const std::vector<T>& g) {
            auto& gx = t.gbuf(xn);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        });
    }
    return out;
}

namespace detail {

// shared unary scaffolding: y_i = f(x_i), dx_i = g_i * dfdx(x_i, y_i)
template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_op(const char* name, const Tensor<T>& x, Fwd fwd, Bwd dfdx) {
    check_finite(name, {&x});
    std::vector<T> v(x.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = fwd(x.vals()[i]);
    Tensor<T> out = result(x.shape, std::move(v), x.tape);
    if (x.node >= 0) {
        int xn = x.node;
        auto xv = x.values, yv = out.values;
        out.requires_grad = true;
        out.node = out.tape->record({xn}, out.size(), [xn, xv, yv, dfdx](Tape<T>& t, const std::vector<T>& g) {
            auto& gx = t.gbuf(xn);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx((*xv)[i], (*yv)[i]);
        });
    }
    return out;
}

} // namespace detail

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    // subgradient at 0 is 0
    return detail::unary_op("relu", x,
                            [](T v) { return v > T(0) ? v : T(0); },
                            [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

// x -> max(0, x); alias kept distinct so loss hinges are explicit at call sites
template <typename T>
Tensor<T> relu_hinge(const Tensor<T>& x) {
    return detail::unary_op("relu_hinge", x,
                            [](T v) { return v > T(0) ? v : T(0); },
                            [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> exp_op(const Tensor<T>& x) {
    return detail::unary_op("exp", x,
                            [](T v) { return std::exp(v); },
                            [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log_op(const Tensor<T>& x) {
    return detail::unary_op("log", x,
                            [](T v) { return std::log(v); },
                            [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> abs_op(const Tensor<T>& x) {
    return detail::unary_op("abs", x,
                            [](T v) { return std::abs(v); },
                            [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return detail::unary_op("sigmoid", x,
                            [](T v) { return T(1) / (T(1) + std::exp(-v)); },
                            [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> sqrt_op(const Tensor<T>& x) {
    return detail::unary_op("sqrt", x,
                            [](T v) { return std::sqrt(v); },
                            [](T, T y) { return T(1) / (T(2) * y); });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_matrix("matmul", a.shape);
    detail::require_matrix("matmul", b.shape);
    if (a.shape[1] != b.shape[0])
        throw TensorError("matmul: inner extents differ, " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    detail::check_finite("matmul", {&a, &b});
    const size_t n = a.shape[0], k = a.shape[1], m = b.shape[1];
    std::vector<T> v(n * m, T(0));
    const T* A = a.vals().data();
    const T* B = b.vals().data();
    for (size_t i = 0; i < n; ++i)
        for (size_t p = 0; p < k; ++p) {
            const T aip = A[i * k + p];
            if (aip == T(0)) continue;
            const T* brow = B + p * m;
            T* vrow = v.data() + i * m;
            for (size_t j = 0; j < m; ++j) vrow[j] += aip * brow[j];
        }
    Tensor<T> out = detail::result({n, m}, std::move(v), detail::tape_of({&a, &b}));
    if (out.tape && detail::any_recorded({&a, &b})) {
        int an = a.node, bn = b.node;
        auto av = a.values, bv = b.values;
        out.requires_grad = true;
        out.node = out.tape->record({an, bn}, out.size(),
                                    [an, bn, av, bv, n, k, m](Tape<T>& t, const std::vector<T>& g) {
            if (an >= 0) { // dA = g * B^T
                auto& ga = t.gbuf(an);
                const T* B = bv->data();
                for (size_t i = 0; i < n; ++i)
                    for (size_t p = 0; p < k; ++p) {
                        T acc = T(0);
                        const T* grow = g.data() + i * m;
                        const T* brow = B + p * m;
                        for (size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
                        ga[i * k + p] += acc;
                    }
            }
            if (bn >= 0) { // dB = A^T * g
                auto& gb = t.gbuf(bn);
                const T* A = av->data();
                for (size_t i = 0; i < n; ++i) {
                    const T* grow = g.data() + i * m;
                    for (size_t p = 0; p < k; ++p) {
                        const T aip = A[i * k + p];
                        if (aip == T(0)) continue;
                        T* gbrow = gb.data() + p * m;
                        for (size_t j = 0; j < m; ++j) gbrow[j] += aip * grow[j];
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
    detail::require_matrix("transpose", x.shape);
    detail::check_finite("transpose", {&x});
    const size_t n = x.shape[0], m = x.shape[1];
    std::vector<T> v(n * m);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < m; ++j) v[j * n + i] = x.vals()[i * m + j];
    Tensor<T> out = detail::result({m, n}, std::move(v), x.tape);
    if (x.node >= 0) {
        int xn = x.node;
        out.requires_grad = true;
        out.node = out.tape->record({xn}, out.size(), [xn, n, m](Tape<T>& t, const std::vector<T>& g) {
            auto& gx = t.gbuf(xn);
            for (size_t j = 0; j < m; ++j)
                for (size_t i = 0; i < n; ++i) gx[i * m + j] += g[j * n + i];
        });
    }
    return out;
}

// shared-weight layer across points: y = x W + b, x: N x Din, W: Din x Dout, b: Dout
template <typename T>
Tensor<T> pointwise_linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    detail::require_matrix("pointwise_linear", x.shape);
    detail::require_matrix("pointwise_linear", w.shape);
    if (x.shape[1] != w.shape[0])
        throw TensorError("pointwise_linear: input width " + std::to_string(x.shape[1]) +
                          " vs weight rows " + std::to_string(w.shape[0]));
    if (b.size() != w.shape[1])
        throw TensorError("pointwise_linear: bias length " + std::to_string(b.size()) +
                          " vs output width " + std::to_string(w.shape[1]));
    detail::check_finite("pointwise_linear", {&x, &w, &b});
    const size_t n = x.shape[0], k = x.shape[1], m = w.shape[1];
    std::vector<T> v(n * m);
    const T* X = x.vals().data();
    const T* W = w.vals().data();
    const T* B = b.vals().data();
    for (size_t i = 0; i < n; ++i) {
        T* vrow = v.data() + i * m;
        for (size_t j = 0; j < m; ++j) vrow[j] = B[j];
        for (size_t p = 0; p < k; ++p) {
            const T xip = X[i * k + p];
            const T* wrow = W + p * m;
            for (size_t j = 0; j < m; ++j) vrow[j] += xip * wrow[j];
        }
    }
    Tensor<T> out = detail::result({n, m}, std::move(v), detail::tape_of({&x, &w, &b}));
    if (out.tape && detail::any_recorded({&x, &w, &b})) {
        int xn = x.node, wn = w.node, bn = b.node;
        auto xv = x.values, wv = w.values;
        out.requires_grad = true;
        out.node = out.tape->record({xn, wn, bn}, out.size(),
                                    [xn, wn, bn, xv, wv, n, k, m](Tape<T>& t, const std::vector<T>& g) {
            if (xn >= 0) {
                auto& gx = t.gbuf(xn);
                const T* W = wv->data();
                for (size_t i = 0; i < n; ++i)
                    for (size_t p = 0; p < k; ++p) {
                        T acc = T(0);
                        const T* grow = g.data() + i * m;
                        const T* wrow = W + p * m;
                        for (size_t j = 0; j < m; ++j) acc += grow[j] * wrow[j];
                        gx[i * k + p] += acc;
                    }
            }
            if (wn >= 0) {
                auto& gw = t.gbuf(wn);
                const T* X = xv->data();
                for (size_t i = 0; i < n; ++i) {
                    const T* grow = g.data() + i * m;
                    for (size_t p = 0; p < k; ++p) {
                        const T xip = X[i * k + p];
                        if (xip == T(0)) continue;
                        T* gwrow = gw.data() + p * m;
                        for (size_t j = 0; j < m; ++j) gwrow[j] += xip * grow[j];
                    }
                }
            }
            if (bn >= 0) {
                auto& gb = t.gbuf(bn);
                for (size_t i = 0; i < n; ++i) {
                    const T* grow = g.data() + i * m;
                    for (size_t j = 0; j < m; ++j) gb[j] += grow[j];
                }
            }
        });
    }
    return out;
}

// kernel-size-3 1-d convolution along the vertex index, zero padding.
// x: N x Cin, w: 3 x (Cin*Cout) interpreted as w[t][cin][cout], b: Cout
template <typename T>
Tensor<T> conv1d_k3(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    detail::require_matrix("conv1d_k3", x.shape);
    if (w.shape.size() != 3 || w.shape[0] != 3)
        throw TensorError("conv1d_k3: weight must be 3 x Cin x Cout, got " + shape_str(w.shape));
    if (w.shape[1] != x.shape[1])
        throw TensorError("conv1d_k3: input width " + std::to_string(x.shape[1]) +
                          " vs weight Cin " + std::to_string(w.shape[1]));
    if (b.size() != w.shape[2])
        throw TensorError("conv1d_k3: bias length " + std::to_string(b.size()) +
                          " vs Cout " + std::to_string(w.shape[2]));
    detail::check_finite("conv1d_k3", {&x, &w, &b});
    const size_t n = x.shape[0], cin = x.shape[1], cout = w.shape[2];
    std::vector<T> v(n * cout);
    const T* X = x.vals().data();
    const T* W = w.vals().data();
    const T* B = b.vals().data();
    for (size_t i = 0; i < n; ++i) {
        T* vrow = v.data() + i * cout;
        for (size_t j = 0; j < cout; ++j) vrow[j] = B[j];
        for (int t = -1; t <= 1; ++t) {
            const long src = static_cast<long>(i) + t;
            if (src < 0 || src >= static_cast<long>(n)) continue;
            const T* xrow = X + static_cast<size_t>(src) * cin;
            const T* wt = W + static_cast<size_t>(t + 1) * cin * cout;
            for (size_t p = 0; p < cin; ++p) {
                const T xv = xrow[p];
                const T* wrow = wt + p * cout;
                for (size_t j = 0; j < cout; ++j) vrow[j] += xv * wrow[j];
            }
        }
    }
    Tensor<T> out = detail::result({n, cout}, std::move(v), detail::tape_of({&x, &w, &b}));
    if (out.tape && detail::any_recorded({&x, &w, &b})) {
        int xn = x.node, wn = w.node, bn = b.node;
        auto xv = x.values, wv = w.values;
        out.requires_grad = true;
        out.node = out.tape->record({xn, wn, bn}, out.size(),
                                    [xn, wn, bn, xv, wv, n, cin, cout](Tape<T>& t, const std::vector<T>& g) {
            if (xn >= 0) {
                auto& gx = t.gbuf(xn);
                const T* W = wv->data();
                for (size_t i = 0; i < n; ++i) {
                    const T* grow = g.data() + i * cout;
                    for (int tt = -1; tt <= 1; ++tt) {
                        const long src = static_cast<long>(i) + tt;
                        if (src < 0 || src >= static_cast<long>(n)) continue;
                        T* gxrow = gx.data() + static_cast<size_t>(src) * cin;
                        const T* wt = W + static_cast<size_t>(tt + 1) * cin * cout;
                        for (size_t p = 0; p < cin; ++p) {
                            T acc = T(0);
                            const T* wrow = wt + p * cout;
                            for (size_t j = 0; j < cout; ++j) acc += grow[j] * wrow[j];
                            gxrow[p] += acc;
                        }
                    }
                }
            }
            if (wn >= 0) {
                auto& gw = t.gbuf(wn);
                const T* X = xv->data();
                for (size_t i = 0; i < n; ++i) {
                    const T* grow = g.data() + i * cout;
                    for (int tt = -1; tt <= 1; ++tt) {
                        const long src = static_cast<long>(i) + tt;
                        if (src < 0 || src >= static_cast<long>(n)) continue;
                        const T* xrow = X + static_cast<size_t>(src) * cin;
                        T* gwt = gw.data() + static_cast<size_t>(tt + 1) * cin * cout;
                        for (size_t p = 0; p < cin; ++p) {
                            const T xval = xrow[p];
                            if (xval == T(0)) continue;
                            T* gwrow = gwt + p * cout;
                            for (size_t j = 0; j < cout; ++j) gwrow[j] += xval * grow[j];
                        }
                    }
                }
            }
            if (bn >= 0) {
                auto& gb = t.gbuf(bn);
                for (size_t i = 0; i < n; ++i) {
                    const T* grow = g.data() + i * cout;
                    for (size_t j = 0; j < cout; ++j) gb[j] += grow[j];
                }
            }
        });
    }
    return out;
}

// per-channel normalization over points: y = (x - mu_c) / sqrt(var_c + eps)
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, T eps = T(1e-5)) {
    detail::require_matrix("instance_norm", x.shape);
    detail::check_finite("instance_norm", {&x});
    const size_t n = x.shape[0], c = x.shape[1];
    if (n < 1) throw TensorError("instance_norm: needs at least one point");
    std::vector<T> mu(c, T(0)), istd(c, T(0));
    const T* X = x.vals().data();
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < c; ++j) mu[j] += X[i * c + j];
    for (size_t j = 0; j < c; ++j) mu[j] /= static_cast<T>(n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < c; ++j) {
            const T d = X[i * c + j] - mu[j];
            istd[j] += d * d;
        }
    for (size_t j = 0; j < c; ++j) istd[j] = T(1) / std::sqrt(istd[j] / static_cast<T>(n) + eps);
    std::vector<T> v(n * c);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < c; ++j) v[i * c + j] = (X[i * c + j] - mu[j]) * istd[j];
    Tensor<T> out = detail::result({n, c}, std::move(v), x.tape);
    if (x.node >= 0) {
        int xn = x.node;
        auto yv = out.values;
        auto istdv = std::make_shared<std::vector<T>>(std::move(istd));
        out.requires_grad = true;
        out.node = out.tape->record({xn}, out.size(), [xn, yv, istdv, n, c](Tape<T>& t, const std::vector<T>& g) {
            // dx = istd * (g - mean(g) - y * mean(g*y)) per channel
            auto& gx = t.gbuf(xn);
            const T* Y = yv->data();
            std::vector<T> gmean(c, T(0)), gymean(c, T(0));
            for (size_t i = 0; i < n; ++i)
                for (size_t j = 0; j < c; ++j) {
                    gmean[j] += g[i * c + j];
                    gymean[j] += g[i * c + j] * Y[i * c + j];
                }
            for (size_t j = 0; j < c; ++j) {
                gmean[j] /= static_cast<T>(n);
                gymean[j] /= static_cast<T>(n);
            }
            for (size_t i = 0; i < n; ++i)
                for (size_t j = 0; j < c; ++j)
                    gx[i * c + j] += (*istdv)[j] * (g[i * c + j] - gmean[j] - Y[i * c + j] * gymean[j]);
        });
    }
    return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    detail::check_finite("mean_all", {&x});
    if (x.size() == 0) throw TensorError("mean_all: empty tensor");
    T acc = T(0);
    for (T v : x.vals()) acc += v;
    const T inv = T(1) / static_cast<T>(x.size());
    Tensor<T> out = detail::result<T>({1}, {acc * inv}, x.tape);
    if (x.node >= 0) {
        int xn = x.node;
        size_t sz = x.size();
        out.requires_grad = true;
        out.node = out.tape->record({xn}, 1, [xn, sz, inv](Tape<T>& t, const std::vector<T>& g) {
            auto& gx = t.gbuf(xn);
            for (size_t i = 0; i < sz; ++i) gx[i] += g[0] * inv;
        });
    }
    return out;
}

// axis 0: column sums -> 1 x C; axis 1: row sums -> N x 1
template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, size_t axis) {
    detail::require_matrix("sum_axis", x.shape);
    if (axis > 1) throw TensorError("sum_axis: axis must be 0 or 1");
    detail::check_finite("sum_axis", {&x});
    const size_t n = x.shape[0], c = x.shape[1];
    Shape oshape = axis == 0 ? Shape{1, c} : Shape{n, 1};
    std::vector<T> v(axis == 0 ? c : n, T(0));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < c; ++j) v[axis == 0 ? j : i] += x.vals()[i * c + j];
    Tensor<T> out = detail::result(std::move(oshape), std::move(v), x.tape);
    if (x.node >= 0) {
        int xn = x.node;
        out.requires_grad = true;
        out.node = out.tape->record({xn}, out.size(), [xn, axis, n, c](Tape<T>& t, const std::vector<T>& g) {
            auto& gx = t.gbuf(xn);
            for (size_t i = 0; i < n; ++i)
                for (size_t j = 0; j < c; ++j) gx[i * c + j] += g[axis == 0 ? j : i];
        });
    }
    return out;
}

// per-row Euclidean norm with a small stabilizer: r_i = sqrt(sum_j x_ij^2 + eps)
template <typename T>
Tensor<T> l2_norm_rows(const Tensor<T>& x, T eps = T(1e-12)) {
    detail::require_matrix("l2_norm_rows", x.shape);
    detail::check_finite("l2_norm_rows", {&x});
    const size_t n = x.shape[0], c = x.shape[1];
    std::vector<T> v(n);
    for (size_t i = 0; i < n; ++i) {
        T acc = eps;
        const T* row = x.vals().data() + i * c;
        for (size_t j = 0; j < c; ++j) acc += row[j] * row[j];
        v[i] = std::sqrt(acc);
    }
    Tensor<T> out = detail::result({n, 1}, std::move(v), x.tape);
    if (x.node >= 0) {
        int xn = x.node;
        auto xv = x.values, rv = out.values;
        out.requires_grad = true;
        out.node = out.tape->record({xn}, out.size(), [xn, xv, rv, n, c](Tape<T>& t, const std::vector<T>& g) {
            auto& gx = t.gbuf(xn);
            for (size_t i = 0; i < n; ++i) {
                const T s = g[i] / (*rv)[i];
                const T* row = xv->data() + i * c;
                for (size_t j = 0; j < c; ++j) gx[i * c + j] += s * row[j];
            }
        });
    }
    return out;
}

// columns [begin, end) of an N x C matrix
template <typename T>
Tensor<T> channel_slice(const Tensor<T>& x, size_t begin, size_t end) {
    detail::require_matrix("channel_slice", x.shape);
    const size_t n = x.shape[0], c = x.shape[1];
    if (begin >= end || end > c)
        throw TensorError("channel_slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                          ") invalid for width " + std::to_string(c));
    detail::check_finite("channel_slice", {&x});
    const size_t w = end - begin;
    std::vector<T> v(n * w);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < w; ++j) v[i * w + j] = x.vals()[i * c + begin + j];
    Tensor<T> out = detail::result({n, w}, std::move(v), x.tape);
    if (x.node >= 0) {
        int xn = x.node;
        out.requires_grad = true;
        out.node = out.tape->record({xn}, out.size(), [xn, begin, n, c, w](Tape<T>& t, const std::vector<T>& g) {
            auto& gx = t.gbuf(xn);
            for (size_t i = 0; i < n; ++i)
                for (size_t j = 0; j < w; ++j) gx[i * c + begin + j] += g[i * w + j];
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_matrix("concat_channels", a.shape);
    detail::require_matrix("concat_channels", b.shape);
    if (a.shape[0] != b.shape[0]) detail::shape_fail("concat_channels", a.shape, b.shape);
    detail::check_finite("concat_channels", {&a, &b});
    const size_t n = a.shape[0], ca = a.shape[1], cb = b.shape[1];
    std::vector<T> v(n * (ca + cb));
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < ca; ++j) v[i * (ca + cb) + j] = a.vals()[i * ca + j];
        for (size_t j = 0; j < cb; ++j) v[i * (ca + cb) + ca + j] = b.vals()[i * cb + j];
    }
    Tensor<T> out = detail::result({n, ca + cb}, std::move(v), detail::tape_of({&a, &b}));
    if (out.tape && detail::any_recorded({&a, &b})) {
        int an = a.node, bn = b.node;
        out.requires_grad = true;
        out.node = out.tape->record({an, bn}, out.size(), [an, bn, n, ca, cb](Tape<T>& t, const std::vector<T>& g) {
            if (an >= 0) {
                auto& ga = t.gbuf(an);
                for (size_t i = 0; i < n; ++i)
                    for (size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * (ca + cb) + j];
            }
            if (bn >= 0) {
                auto& gb = t.gbuf(bn);
                for (size_t i = 0; i < n; ++i)
                    for (size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * (ca + cb) + ca + j];
            }
        });
    }
    return out;
}

// passes values forward, blocks all gradient flow
template <typename T>
Tensor<T> stop_gradient(const Tensor<T>& x) {
    Tensor<T> out = make_tensor<T>(x.shape, x.vals());
    out.tape = x.tape;
    return out;
}

// broadcast helpers over an N x C matrix
namespace detail {

template <typename T>
void require_colvec(const char* op, const Tensor<T>& m, const Tensor<T>& v) {
    require_matrix(op, m.shape);
    if (v.shape != Shape{m.shape[0], 1})
        throw TensorError(std::string(op) + ": expected column vector " + shape_str({m.shape[0], 1}) +
                          ", got " + shape_str(v.shape));
}

template <typename T>
void require_rowvec(const char* op, const Tensor<T>& m, const Tensor<T>& v) {
    require_matrix(op, m.shape);
    if (v.shape != Shape{1, m.shape[1]})
        throw TensorError(std::string(op) + ": expected row vector " + shape_str({1, m.shape[1]}) +
                          ", got " + shape_str(v.shape));
}

// y_ij = m_ij (op) v_broadcast; handles add/mul for col and row vectors
template <typename T>
Tensor<T> broadcast_op(const char* name, const Tensor<T>& m, const Tensor<T>& v, bool colvec, bool multiply) {
    if (colvec) require_colvec(name, m, v);
    else require_rowvec(name, m, v);
    check_finite(name, {&m, &v});
    const size_t n = m.shape[0], c = m.shape[1];
    std::vector<T> out(n * c);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < c; ++j) {
            const T b = colvec ? v.vals()[i] : v.vals()[j];
            out[i * c + j] = multiply ? m.vals()[i * c + j] * b : m.vals()[i * c + j] + b;
        }
    Tensor<T> res = result({n, c}, std::move(out), tape_of({&m, &v}));
    if (res.tape && any_recorded({&m, &v})) {
        int mn = m.node, vn = v.node;
        auto mv = m.values, vv = v.values;
        res.requires_grad = true;
        res.node = res.tape->record({mn, vn}, res.size(),
                                    [mn, vn, mv, vv, n, c, colvec, multiply](Tape<T>& t, const std::vector<T>& g) {
            if (mn >= 0) {
                auto& gm = t.gbuf(mn);
                for (size_t i = 0; i < n; ++i)
                    for (size_t j = 0; j < c; ++j) {
                        const T b = colvec ? (*vv)[i] : (*vv)[j];
                        gm[i * c + j] += multiply ? g[i * c + j] * b : g[i * c + j];
                    }
            }
            if (vn >= 0) {
                auto& gv = t.gbuf(vn);
                for (size_t i = 0; i < n; ++i)
                    for (size_t j = 0; j < c; ++j) {
                        const T w = multiply ? g[i * c + j] * (*mv)[i * c + j] : g[i * c + j];
                        gv[colvec ? i : j] += w;
                    }
            }
        });
    }
    return res;
}

} // namespace detail

template <typename T>
Tensor<T> add_colvec(const Tensor<T>& m, const Tensor<T>& v) {
    return detail::broadcast_op("add_colvec", m, v, true, false);
}
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& m, const Tensor<T>& v) {
    return detail::broadcast_op("add_rowvec", m, v, false, false);
}
template <typename T>
Tensor<T> mul_colvec(const Tensor<T>& m, const Tensor<T>& v) {
    return detail::broadcast_op("mul_colvec", m, v, true, true);
}
template <typename T>
Tensor<T> mul_rowvec(const Tensor<T>& m, const Tensor<T>& v) {
    return detail::broadcast_op("mul_rowvec", m, v, false, true);
}

template <typename T>
Tensor<T> div_colvec(const Tensor<T>& m, const Tensor<T>& v) {
    detail::require_colvec("div_colvec", m, v);
    detail::check_finite("div_colvec", {&m, &v});
    const size_t n = m.shape[0], c = m.shape[1];
    std::vector<T> out(n * c);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < c; ++j) out[i * c + j] = m.vals()[i * c + j] / v.vals()[i];
    Tensor<T> res = detail::result({n, c}, std::move(out), detail::tape_of({&m, &v}));
    if (res.tape && detail::any_recorded({&m, &v})) {
        int mn = m.node, vn = v.node;
        auto mv = m.values, vv = v.values;
        res.requires_grad = true;
        res.node = res.tape->record({mn, vn}, res.size(),
                                    [mn, vn, mv, vv, n, c](Tape<T>& t, const std::vector<T>& g) {
            if (mn >= 0) {
                auto& gm = t.gbuf(mn);
                for (size_t i = 0; i < n; ++i)
                    for (size_t j = 0; j < c; ++j) gm[i * c + j] += g[i * c + j] / (*vv)[i];
            }
            if (vn >= 0) {
                auto& gv = t.gbuf(vn);
                for (size_t i = 0; i < n; ++i) {
                    const T inv2 = T(1) / ((*vv)[i] * (*vv)[i]);
                    for (size_t j = 0; j < c; ++j) gv[i] -= g[i * c + j] * (*mv)[i * c + j] * inv2;
                }
            }
        });
    }
    return res;
}

namespace detail {

// logsumexp along rows (axis 1) or columns (axis 0), with max subtraction
template <typename T>
Tensor<T> logsumexp_impl(const char* name, const Tensor<T>& x, size_t axis) {
    require_matrix(name, x.shape);
    check_finite(name, {&x});
    const size_t n = x.shape[0], c = x.shape[1];
    const size_t outn = axis == 1 ? n : c;
    std::vector<T> v(outn);
    const T* X = x.vals().data();
    if (axis == 1) {
        for (size_t i = 0; i < n; ++i) {
            const T* row = X + i * c;
            T mx = row[0];
            for (size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
            T acc = T(0);
            for (size_t j = 0; j < c; ++j) acc += std::exp(row[j] - mx);
            v[i] = mx + std::log(acc);
        }
    } else {
        std::vector<T> mx(c, -std::numeric_limits<T>::infinity());
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < c; ++j) mx[j] = std::max(mx[j], X[i * c + j]);
        std::vector<T> acc(c, T(0));
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < c; ++j) acc[j] += std::exp(X[i * c + j] - mx[j]);
        for (size_t j = 0; j < c; ++j) v[j] = mx[j] + std::log(acc[j]);
    }
    Shape oshape = axis == 1 ? Shape{n, 1} : Shape{1, c};
    Tensor<T> out = result(std::move(oshape), std::move(v), x.tape);
    if (x.node >= 0) {
        int xn = x.node;
        auto xv = x.values, lv = out.values;
        out.requires_grad = true;
        out.node = out.tape->record({xn}, out.size(), [xn, xv, lv, n, c, axis](Tape<T>& t, const std::vector<T>& g) {
            auto& gx = t.gbuf(xn);
            for (size_t i = 0; i < n; ++i)
                for (size_t j = 0; j < c; ++j) {
                    const size_t o = axis == 1 ? i : j;
                    gx[i * c + j] += g[o] * std::exp((*xv)[i * c + j] - (*lv)[o]);
                }
        });
    }
    return out;
}

} // namespace detail

template <typename T>
Tensor<T> logsumexp_rows(const Tensor<T>& x) {
    return detail::logsumexp_impl("logsumexp_rows", x, 1);
}
template <typename T>
Tensor<T> logsumexp_cols(const Tensor<T>& x) {
    return detail::logsumexp_impl("logsumexp_cols", x, 0);
}

// rows of x selected by index list; backward scatters
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<size_t>& idx) {
    detail::require_matrix("gather_rows", x.shape);
    detail::check_finite("gather_rows", {&x});
    const size_t n = x.shape[0], c = x.shape[1];
    for (size_t i : idx)
        if (i >= n) throw TensorError("gather_rows: index " + std::to_string(i) + " out of range " + std::to_string(n));
    std::vector<T> v(idx.size() * c);
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy_n(x.vals().data() + idx[r] * c, c, v.data() + r * c);
    Tensor<T> out = detail::result({idx.size(), c}, std::move(v), x.tape);
    if (x.node >= 0) {
        int xn = x.node;
        auto ids = std::make_shared<std::vector<size_t>>(idx);
        out.requires_grad = true;
        out.node = out.tape->record({xn}, out.size(), [xn, ids, c](Tape<T>& t, const std::vector<T>& g) {
            auto& gx = t.gbuf(xn);
            for (size_t r = 0; r < ids->size(); ++r)
                for (size_t j = 0; j < c; ++j) gx[(*ids)[r] * c + j] += g[r * c + j];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// generic dispatcher (used by the gradient-check registry and the CLI)
// ---------------------------------------------------------------------------

enum class OpKind {
    PointwiseLinear, Conv1dK3, Relu, Add, Sub, MulScalar, AddScalar, Matmul,
    InstanceNorm, MeanAll, SumAxis, L2NormRows, ChannelSlice, ConcatChannels,
    Exp, Log, Abs, ReluHinge, StopGradient,
    Transpose, MulElem, DivElem, AddColVec, AddRowVec, MulColVec, MulRowVec,
    DivColVec, LogSumExpRows, LogSumExpCols, Sigmoid, Sqrt, GatherRows,
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::PointwiseLinear: return "pointwise_linear";
        case OpKind::Conv1dK3: return "conv1d_k3";
        case OpKind::Relu: return "relu";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::MulScalar: return "mul_scalar";
        case OpKind::AddScalar: return "add_scalar";
        case OpKind::Matmul: return "matmul";
        case OpKind::InstanceNorm: return "instance_norm";
        case OpKind::MeanAll: return "mean_all";
        case OpKind::SumAxis: return "sum_axis";
        case OpKind::L2NormRows: return "l2_norm_rows";
        case OpKind::ChannelSlice: return "channel_slice";
        case OpKind::ConcatChannels: return "concat_channels";
        case OpKind::Exp: return "exp";
        case OpKind::Log: return "log";
        case OpKind::Abs: return "abs";
        case OpKind::ReluHinge: return "relu_hinge";
        case OpKind::StopGradient: return "stop_gradient";
        case OpKind::Transpose: return "transpose";
        case OpKind::MulElem: return "mul_elem";
        case OpKind::DivElem: return "div_elem";
        case OpKind::AddColVec: return "add_colvec";
        case OpKind::AddRowVec: return "add_rowvec";
        case OpKind::MulColVec: return "mul_colvec";
        case OpKind::MulRowVec: return "mul_rowvec";
        case OpKind::DivColVec: return "div_colvec";
        case OpKind::LogSumExpRows: return "logsumexp_rows";
        case OpKind::LogSumExpCols: return "logsumexp_cols";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Sqrt: return "sqrt";
        case OpKind::GatherRows: return "gather_rows";
    }
    return "?";
}

struct OpAttrs {
    double scalar = 1.0;
    size_t axis = 0;
    size_t begin = 0, end = 0;
    double eps = 1e-5;
    std::vector<size_t> indices;
};

template <typename T>
Tensor<T> op_forward(OpKind kind, const std::vector<Tensor<T>>& in, const OpAttrs& a = {}) {
    auto need = [&](size_t n) {
        if (in.size() != n)
            throw TensorError(std::string(op_name(kind)) + ": expected " + std::to_string(n) +
                              " inputs, got " + std::to_string(in.size()));
    };
    switch (kind) {
        case OpKind::PointwiseLinear: need(3); return pointwise_linear(in[0], in[1], in[2]);
        case OpKind::Conv1dK3: need(3); return conv1d_k3(in[0], in[1], in[2]);
        case OpKind::Relu: need(1); return relu(in[0]);
        case OpKind::Add: need(2); return add(in[0], in[1]);
        case OpKind::Sub: need(2); return sub(in[0], in[1]);
        case OpKind::MulScalar: need(1); return mul_scalar(in[0], static_cast<T>(a.scalar));
        case OpKind::AddScalar: need(1); return add_scalar(in[0], static_cast<T>(a.scalar));
        case OpKind::Matmul: need(2); return matmul(in[0], in[1]);
        case OpKind::InstanceNorm: need(1); return instance_norm(in[0], static_cast<T>(a.eps));
        case OpKind::MeanAll: need(1); return mean_all(in[0]);
        case OpKind::SumAxis: need(1); return sum_axis(in[0], a.axis);
        case OpKind::L2NormRows: need(1); return l2_norm_rows(in[0]);
        case OpKind::ChannelSlice: need(1); return channel_slice(in[0], a.begin, a.end);
        case OpKind::ConcatChannels: need(2); return concat_channels(in[0], in[1]);
        case OpKind::Exp: need(1); return exp_op(in[0]);
        case OpKind::Log: need(1); return log_op(in[0]);
        case OpKind::Abs: need(1); return abs_op(in[0]);
        case OpKind::ReluHinge: need(1); return relu_hinge(in[0]);
        case OpKind::StopGradient: need(1); return stop_gradient(in[0]);
        case OpKind::Transpose: need(1); return transpose(in[0]);
        case OpKind::MulElem: need(2); return mul_elem(in[0], in[1]);
        case OpKind::DivElem: need(2); return div_elem(in[0], in[1]);
        case OpKind::AddColVec: need(2); return add_colvec(in[0], in[1]);
        case OpKind::AddRowVec: need(2); return add_rowvec(in[0], in[1]);
        case OpKind::MulColVec: need(2); return mul_colvec(in[0], in[1]);
        case OpKind::MulRowVec: need(2); return mul_rowvec(in[0], in[1]);
        case OpKind::DivColVec: need(2); return div_colvec(in[0], in[1]);
        case OpKind::LogSumExpRows: need(1); return logsumexp_rows(in[0]);
        case OpKind::LogSumExpCols: need(1); return logsumexp_cols(in[0]);
        case OpKind::Sigmoid: need(1); return sigmoid(in[0]);
        case OpKind::Sqrt: need(1); return sqrt_op(in[0]);
        case OpKind::GatherRows: need(1); return gather_rows(in[0], a.indices);
    }
    throw TensorError("op_forward: unknown kind");
}

} // namespace mapcon
