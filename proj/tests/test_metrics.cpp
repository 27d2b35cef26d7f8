#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mapcon/metrics.hpp"
#include "mapcon/rng.hpp"

using namespace mapcon;

namespace {

std::vector<double> random_cloud(uint64_t seed, size_t n, double lo = -1.0, double hi = 1.0) {
    Xoshiro256ss rng(seed);
    std::vector<double> v(3 * n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

std::vector<double> permute_cloud(const std::vector<double>& p, uint64_t seed) {
    const size_t n = p.size() / 3;
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Xoshiro256ss rng(seed);
    for (size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
    std::vector<double> out(p.size());
    for (size_t i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) out[3 * i + k] = p[3 * idx[i] + k];
    return out;
}

double emd_exhaustive(const std::vector<double>& p, const std::vector<double>& q) {
    const size_t n = p.size() / 3;
    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double acc = 0;
        for (size_t i = 0; i < n; ++i) {
            double d2 = 0;
            for (int k = 0; k < 3; ++k) {
                const double d = p[3 * i + k] - q[3 * perm[i] + k];
                d2 += d * d;
            }
            acc += std::sqrt(d2);
        }
        best = std::min(best, acc / n);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

std::vector<double> rotate_cloud(const std::vector<double>& v) {
    const double c = std::cos(0.41), s = std::sin(0.41);
    std::vector<double> out(v.size());
    for (size_t i = 0; i < v.size() / 3; ++i) {
        const double x = v[3 * i], y = v[3 * i + 1], z = v[3 * i + 2];
        out[3 * i] = c * x + s * z;
        out[3 * i + 1] = y;
        out[3 * i + 2] = -s * x + c * z;
    }
    return out;
}

} // namespace

TEST_CASE("pmd: zero on equality, hand case, size mismatch") {
    std::vector<double> p{1, 2, 2};
    CHECK(pmd(p, p) == 0.0);
    CHECK(pmd(p, {0, 0, 0}) == doctest::Approx(3.0));
    CHECK_THROWS_AS(pmd(p, std::vector<double>(6, 0.0)), MetricError);
    CHECK_THROWS_AS(pmd({}, {}), MetricError);
}

TEST_CASE("chamfer: permutation invariance, hand case, empty error") {
    std::vector<double> p = random_cloud(1, 12);
    CHECK(chamfer(p, permute_cloud(p, 2)) == doctest::Approx(0.0));
    CHECK(chamfer({0, 0, 0}, {1, 0, 0}) == doctest::Approx(2.0));
    CHECK_THROWS_AS(chamfer({}, {1, 0, 0}), MetricError);
}

TEST_CASE("chamfer: kd-tree equals brute force on random clouds up to N=64") {
    Xoshiro256ss sizes(7);
    for (uint64_t trial = 0; trial < 40; ++trial) {
        const size_t n = 1 + sizes.below(64);
        const size_t m = 1 + sizes.below(64);
        std::vector<double> p = random_cloud(300 + trial, n, -2.0, 2.0);
        std::vector<double> q = random_cloud(600 + trial, m, -2.0, 2.0);
        const double fast = chamfer_kdtree(p, q);
        const double brute = chamfer_bruteforce(p, q);
        CHECK(fast == brute);
        CHECK(chamfer(q, p) == doctest::Approx(chamfer(p, q)));
    }
}

TEST_CASE("emd: assignment solver equals exhaustive search for N<=7") {
    Xoshiro256ss sizes(11);
    for (uint64_t trial = 0; trial < 200; ++trial) {
        const size_t n = 2 + sizes.below(6);
        std::vector<double> p = random_cloud(1000 + trial, n);
        std::vector<double> q = random_cloud(2000 + trial, n);
        const double got = emd(p, q);
        const double oracle = emd_exhaustive(p, q);
        CHECK(got == doctest::Approx(oracle).epsilon(1e-9));
    }
}

TEST_CASE("emd: hand case and basic identities") {
    // identity matching gives (1+1)/2 = 1; the swap would give 2
    CHECK(emd({0, 0, 0, 2, 0, 0}, {1, 0, 0, 3, 0, 0}) == doctest::Approx(1.0));
    std::vector<double> p = random_cloud(3, 10);
    CHECK(emd(p, permute_cloud(p, 4)) == doctest::Approx(0.0));
    std::vector<double> q = random_cloud(5, 10);
    CHECK(emd(p, q) == doctest::Approx(emd(q, p)));
    CHECK_THROWS_AS(emd(p, random_cloud(6, 9)), MetricError);
}

TEST_CASE("emd respects the centroid-distance lower bound") {
    for (uint64_t trial = 0; trial < 20; ++trial) {
        const size_t n = 8;
        std::vector<double> p = random_cloud(40 + trial, n);
        std::vector<double> q = random_cloud(80 + trial, n);
        double cp[3] = {0, 0, 0}, cq[3] = {0, 0, 0};
        for (size_t i = 0; i < n; ++i)
            for (int k = 0; k < 3; ++k) {
                cp[k] += p[3 * i + k] / n;
                cq[k] += q[3 * i + k] / n;
            }
        double d2 = 0;
        for (int k = 0; k < 3; ++k) d2 += (cp[k] - cq[k]) * (cp[k] - cq[k]);
        CHECK(emd(p, q) >= std::sqrt(d2) - 1e-12);
    }
}

TEST_CASE("pmd is order-sensitive while cd and emd are not") {
    std::vector<double> p = random_cloud(13, 16);
    std::vector<double> shuffled = permute_cloud(p, 14);
    REQUIRE(shuffled != p);
    CHECK(pmd(p, shuffled) > 1e-3);
    CHECK(chamfer(p, shuffled) == doctest::Approx(0.0));
    CHECK(emd(p, shuffled) == doctest::Approx(0.0));
}

TEST_CASE("metrics are invariant under a common rigid rotation") {
    std::vector<double> p = random_cloud(15, 10);
    std::vector<double> q = random_cloud(16, 10);
    std::vector<double> pr = rotate_cloud(p), qr = rotate_cloud(q);
    CHECK(pmd(pr, qr) == doctest::Approx(pmd(p, q)).epsilon(1e-5));
    CHECK(chamfer(pr, qr) == doctest::Approx(chamfer(p, q)).epsilon(1e-5));
    CHECK(emd(pr, qr) == doctest::Approx(emd(p, q)).epsilon(1e-5));
}

TEST_CASE("solve_assignment: exact minimum, error cases") {
    std::vector<int> row_to_col;
    // unique optimum picks the anti-diagonal
    const double total = solve_assignment({{10, 1}, {1, 10}}, row_to_col);
    CHECK(total == doctest::Approx(2.0));
    CHECK(row_to_col == std::vector<int>{1, 0});

    CHECK_THROWS_AS(solve_assignment({}, row_to_col), MetricError);
    CHECK_THROWS_AS(solve_assignment({{1.0, 2.0}}, row_to_col), MetricError);
}

TEST_CASE("evaluate_pair fills the report consistently") {
    std::vector<double> pred = random_cloud(17, 6);
    std::vector<double> gt = random_cloud(18, 6);
    MetricReport r = evaluate_pair(pred, gt);
    CHECK(r.n_points == 6);
    CHECK(r.pmd == doctest::Approx(pmd(pred, gt)));
    CHECK(r.cd == doctest::Approx(chamfer(pred, gt)));
    CHECK(r.emd == doctest::Approx(emd(pred, gt)));
    CHECK(r.pmd >= 0.0);
    CHECK(r.cd >= 0.0);
    CHECK(r.emd >= 0.0);
    CHECK(r.seconds >= 0.0);
}
