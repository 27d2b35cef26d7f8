#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "mapcon/tensor.hpp"

namespace mapcon {

// Named parameter set. Insertion order is the canonical order used for
// checkpoint serialization and gradient collection.
template <typename T>
struct ParamStore {
    struct Entry {
        std::string name;
        Shape shape;
        std::vector<T> values;
    };

    std::vector<Entry> entries;
    std::unordered_map<std::string, size_t> index;

    Entry& add(std::string name, Shape shape, std::vector<T> values) {
        if (index.count(name)) throw TensorError("ParamStore: duplicate parameter " + name);
        if (shape_size(shape) != values.size())
            throw TensorError("ParamStore: shape/value mismatch for " + name);
        index.emplace(name, entries.size());
        entries.push_back({std::move(name), std::move(shape), std::move(values)});
        return entries.back();
    }

    bool has(const std::string& name) const { return index.count(name) != 0; }

    Entry& at(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw TensorError("ParamStore: unknown parameter " + name);
        return entries[it->second];
    }
    const Entry& at(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw TensorError("ParamStore: unknown parameter " + name);
        return entries[it->second];
    }

    size_t total_values() const {
        size_t n = 0;
        for (const auto& e : entries) n += e.values.size();
        return n;
    }
};

template <typename T>
struct AdamState {
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    long step = 0;
    std::unordered_map<std::string, std::vector<T>> m, v;
};

// Standard Adam update with bias correction, applied in place.
template <typename T>
void adam_step(ParamStore<T>& params, const std::unordered_map<std::string, std::vector<T>>& grads,
               AdamState<T>& state, T lr) {
    if (lr <= T(0)) throw TensorError("adam_step: learning rate must be positive");
    state.step += 1;
    const T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.step));
    const T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.step));
    for (auto& e : params.entries) {
        auto git = grads.find(e.name);
        if (git == grads.end())
            throw TensorError("adam_step: missing gradient for parameter " + e.name);
        const auto& g = git->second;
        if (g.size() != e.values.size())
            throw TensorError("adam_step: gradient size mismatch for parameter " + e.name);
        auto& m = state.m[e.name];
        auto& v = state.v[e.name];
        if (m.empty()) m.assign(e.values.size(), T(0));
        if (v.empty()) v.assign(e.values.size(), T(0));
        for (size_t i = 0; i < g.size(); ++i) {
            m[i] = state.beta1 * m[i] + (T(1) - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (T(1) - state.beta2) * g[i] * g[i];
            const T mhat = m[i] / bc1;
            const T vhat = v[i] / bc2;
            e.values[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

// Binds every parameter as a requires-grad leaf on the given tape.
template <typename T>
struct BoundParams {
    std::unordered_map<std::string, Tensor<T>> tensors;

    const Tensor<T>& operator[](const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw TensorError("BoundParams: unknown parameter " + name);
        return it->second;
    }
};

template <typename T>
BoundParams<T> bind_params(Tape<T>& tape, const ParamStore<T>& params) {
    BoundParams<T> out;
    for (const auto& e : params.entries)
        out.tensors.emplace(e.name, tape.leaf(e.shape, e.values, true));
    return out;
}

// Gradients of every parameter leaf, keyed by name. Unreached leaves get zeros.
template <typename T>
std::unordered_map<std::string, std::vector<T>> named_grads(const BoundParams<T>& bound,
                                                            const GradMap<T>& gm) {
    std::unordered_map<std::string, std::vector<T>> out;
    for (const auto& [name, tensor] : bound.tensors) {
        const auto* g = gm.find(tensor);
        if (g) out.emplace(name, *g);
        else out.emplace(name, std::vector<T>(tensor.size(), T(0)));
    }
    return out;
}

} // namespace mapcon
