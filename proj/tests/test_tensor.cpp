#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "mapcon/fdcheck.hpp"
#include "mapcon/optim.hpp"
#include "mapcon/rng.hpp"
#include "mapcon/tensor.hpp"

using namespace mapcon;

namespace {

std::vector<double> random_vals(uint64_t seed, size_t n, double lo = -1.0, double hi = 1.0) {
    Xoshiro256ss rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

} // namespace

TEST_CASE("relu clamps negatives and zero") {
    Tape<float> tape;
    Tensor<float> x = tape.leaf({3}, {-1.0f, 0.0f, 2.0f}, false);
    Tensor<float> y = relu(x);
    CHECK(y.vals() == std::vector<float>{0.0f, 0.0f, 2.0f});
}

TEST_CASE("pointwise_linear identity weight, zero bias is a pass-through") {
    Tape<float> tape;
    Tensor<float> x = tape.leaf({2, 3}, {0.5f, -1.25f, 3.0f, 2.0f, 0.0f, -0.75f}, false);
    std::vector<float> eye(9, 0.0f);
    eye[0] = eye[4] = eye[8] = 1.0f;
    Tensor<float> w = tape.constant({3, 3}, eye);
    Tensor<float> b = tape.constant({1, 3}, std::vector<float>(3, 0.0f));
    Tensor<float> y = pointwise_linear(x, w, b);
    CHECK(y.shape == x.shape);
    CHECK(y.vals() == x.vals());
}

TEST_CASE("instance_norm normalizes a 2-point channel to +-1 up to eps") {
    Tape<float> tape;
    Tensor<float> x = tape.leaf({2, 1}, {1.0f, 3.0f}, false);
    Tensor<float> y = instance_norm(x);
    // mu=2, var=1 -> (x-2)/sqrt(1+1e-5)
    const float expected = 1.0f / std::sqrt(1.0f + 1e-5f);
    CHECK(y.vals()[0] == doctest::Approx(-expected).epsilon(1e-6));
    CHECK(y.vals()[1] == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("instance_norm output statistics: per-channel mean ~0, variance ~1") {
    Tape<double> tape;
    Tensor<double> x = tape.leaf({40, 3}, random_vals(11, 120, -2.0, 2.0), false);
    Tensor<double> y = instance_norm(x);
    const size_t n = 40, c = 3;
    for (size_t j = 0; j < c; ++j) {
        double mu = 0, var = 0;
        for (size_t i = 0; i < n; ++i) mu += y.vals()[i * c + j];
        mu /= n;
        for (size_t i = 0; i < n; ++i) {
            const double d = y.vals()[i * c + j] - mu;
            var += d * d;
        }
        var /= n;
        CHECK(std::abs(mu) <= 1e-6);
        CHECK(std::abs(var - 1.0) <= 1e-4);
    }
}

TEST_CASE("backward of mean_all spreads 1/size to every coordinate") {
    Tape<float> tape;
    Tensor<float> x = tape.leaf({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6}, true);
    GradMap<float> gm = tape.backward(mean_all(x));
    for (float g : gm.at(x)) CHECK(g == doctest::Approx(1.0f / 6.0f));
}

TEST_CASE("stop_gradient blocks exactly one factor of a product") {
    Tape<float> tape;
    Tensor<float> x = tape.leaf({1}, {2.0f}, true);
    Tensor<float> y = mean_all(mul_elem(stop_gradient(x), x));
    CHECK(y.item() == doctest::Approx(4.0f));
    GradMap<float> gm = tape.backward(y);
    // d/dx [c * x] with c = value of x frozen at 2
    CHECK(gm.at(x) == std::vector<float>{2.0f});
}

TEST_CASE("gradient through stop_gradient alone is bitwise zero") {
    Tape<float> tape;
    Tensor<float> x = tape.leaf({4}, {1.0f, -2.0f, 3.0f, 0.5f}, true);
    Tensor<float> w = tape.leaf({4}, {1.0f, 1.0f, 1.0f, 1.0f}, true);
    // x reaches the loss only through the stop-gradient boundary
    Tensor<float> y = mean_all(mul_elem(w, stop_gradient(mul_elem(x, x))));
    CHECK(y.item() == doctest::Approx((1.0f + 4.0f + 9.0f + 0.25f) / 4.0f));
    GradMap<float> gm = tape.backward(y);
    for (float g : gm.at(x)) CHECK(g == 0.0f);
    // the unblocked branch still receives its gradient
    CHECK(gm.at(w)[1] == doctest::Approx(1.0f));
}

TEST_CASE("relu subgradient: 0 below and at zero, 1 above") {
    Tape<float> tape;
    Tensor<float> x = tape.leaf({3}, {-1.0f, 2.0f, 0.0f}, true);
    Tensor<float> y = mul_scalar(mean_all(relu(x)), 3.0f); // sum
    GradMap<float> gm = tape.backward(y);
    CHECK(gm.at(x) == std::vector<float>{0.0f, 1.0f, 0.0f});
}

TEST_CASE("adam: zero gradients leave parameters unchanged, step advances") {
    ParamStore<float> p;
    p.add("a", {2}, {1.5f, -0.5f});
    AdamState<float> st;
    std::unordered_map<std::string, std::vector<float>> g{{"a", {0.0f, 0.0f}}};
    adam_step(p, g, st, 0.1f);
    CHECK(p.at("a").values == std::vector<float>{1.5f, -0.5f});
    CHECK(st.step == 1);
}

TEST_CASE("adam: first step on scalar with unit gradient moves by about -lr") {
    ParamStore<float> p;
    p.add("a", {1}, {0.0f});
    AdamState<float> st;
    std::unordered_map<std::string, std::vector<float>> g{{"a", {1.0f}}};
    adam_step(p, g, st, 0.1f);
    // bias-corrected m_hat = v_hat = 1 on step 1 -> update = -lr / (1 + eps)
    CHECK(p.at("a").values[0] == doctest::Approx(-0.1f).epsilon(1e-5));
}

TEST_CASE("adam: identical parameters with identical gradients stay identical") {
    ParamStore<float> p;
    p.add("a", {2}, {0.3f, 0.3f});
    p.add("b", {2}, {0.3f, 0.3f});
    AdamState<float> st;
    std::unordered_map<std::string, std::vector<float>> g{{"a", {0.7f, 0.7f}}, {"b", {0.7f, 0.7f}}};
    for (int i = 0; i < 5; ++i) adam_step(p, g, st, 0.01f);
    CHECK(p.at("a").values == p.at("b").values);
    CHECK(p.at("a").values[0] == p.at("a").values[1]);
}

TEST_CASE("adam: missing gradient is an error") {
    ParamStore<float> p;
    p.add("a", {1}, {0.0f});
    AdamState<float> st;
    std::unordered_map<std::string, std::vector<float>> g;
    CHECK_THROWS_AS(adam_step(p, g, st, 0.1f), TensorError);
}

TEST_CASE("finite differences confirm mean of squares") {
    auto f = [](Tape<double>& t, const Tensor<double>& x) {
        (void)t;
        return mean_all(mul_elem(x, x));
    };
    FdReport rep = finite_difference_check(f, {2, 3}, random_vals(3, 6), 1e-5, 1e-6);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err <= 1e-6);
}

TEST_CASE("finite differences on a constant function: both gradients zero") {
    auto f = [](Tape<double>&, const Tensor<double>& x) {
        return mean_all(mul_scalar(x, 0.0));
    };
    FdReport rep = finite_difference_check(f, {4}, random_vals(4, 4), 1e-5, 1e-6);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err == 0.0);
}

TEST_CASE("shape mismatch errors name the operation") {
    Tape<float> tape;
    Tensor<float> a = tape.leaf({2, 2}, std::vector<float>(4, 1.0f), false);
    Tensor<float> b = tape.leaf({2, 3}, std::vector<float>(6, 1.0f), false);
    CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), TensorError);
    CHECK_THROWS_WITH_AS(matmul(b, b), doctest::Contains("matmul"), TensorError);
}

TEST_CASE("backward rejects non-scalar losses and foreign tensors") {
    Tape<float> tape;
    Tensor<float> x = tape.leaf({2}, {1.0f, 2.0f}, true);
    CHECK_THROWS_AS(tape.backward(mul_scalar(x, 2.0f)), TensorError);
    Tensor<float> off = make_tensor<float>({1}, {1.0f});
    CHECK_THROWS_AS(tape.backward(off), TensorError);
}

TEST_CASE("strict mode rejects non-finite inputs") {
    Tape<float> tape;
    tape.strict = true;
    Tensor<float> a = tape.leaf({2}, {1.0f, std::numeric_limits<float>::infinity()}, false);
    Tensor<float> b = tape.leaf({2}, {1.0f, 1.0f}, false);
    CHECK_THROWS_AS(add(a, b), TensorError);
}

TEST_CASE("replay determinism: identical inputs give bitwise-identical grads") {
    auto run = [](std::vector<float>* grads_out) {
        Tape<float> tape;
        Tensor<float> x = tape.leaf({3, 3}, {0.3f, -1.2f, 0.7f, 2.1f, 0.0f, -0.4f, 1.6f, 0.9f, -2.2f}, true);
        Tensor<float> y = mean_all(mul_elem(sigmoid(matmul(x, transpose(x))), exp_op(mul_scalar(x, 0.1f))));
        GradMap<float> gm = tape.backward(y);
        *grads_out = gm.at(x);
        return y.item();
    };
    std::vector<float> g1, g2;
    const float y1 = run(&g1), y2 = run(&g2);
    CHECK(y1 == y2);
    CHECK(g1 == g2);
}

TEST_CASE("gather_rows duplicates accumulate gradient") {
    Tape<float> tape;
    Tensor<float> x = tape.leaf({3, 1}, {1.0f, 2.0f, 3.0f}, true);
    Tensor<float> y = mean_all(gather_rows(x, {0, 0, 2, 2}));
    GradMap<float> gm = tape.backward(y);
    CHECK(gm.at(x) == std::vector<float>{0.5f, 0.0f, 0.5f});
}

TEST_CASE("logsumexp is stable for large magnitudes") {
    Tape<double> tape;
    Tensor<double> x = tape.leaf({1, 2}, {1000.0, 1000.0}, false);
    Tensor<double> y = logsumexp_rows(x);
    CHECK(y.vals()[0] == doctest::Approx(1000.0 + std::log(2.0)));
}

TEST_CASE("unreached leaves receive zero gradients") {
    Tape<float> tape;
    Tensor<float> x = tape.leaf({2}, {1.0f, 2.0f}, true);
    Tensor<float> unused = tape.leaf({3}, {1.0f, 1.0f, 1.0f}, true);
    GradMap<float> gm = tape.backward(mean_all(x));
    const auto* g = gm.find(unused);
    REQUIRE(g != nullptr);
    CHECK(*g == std::vector<float>(3, 0.0f));
}
