#include "mapcon/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace mapcon {

namespace {

size_t point_count(const char* op, const std::vector<double>& p) {
    if (p.empty() || p.size() % 3 != 0)
        throw MetricError(std::string(op) + ": point array must be non-empty N x 3");
    return p.size() / 3;
}

double sq_dist(const double* a, const double* b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

// minimal exact 3-d k-d tree over an index array
class KdTree {
public:
    explicit KdTree(const std::vector<double>& pts) : pts_(pts), idx_(pts.size() / 3) {
        std::iota(idx_.begin(), idx_.end(), size_t{0});
        nodes_.reserve(idx_.size());
        root_ = build(0, idx_.size(), 0);
    }

    double nearest_sq(const double* query) const {
        double best = std::numeric_limits<double>::infinity();
        search(root_, query, best);
        return best;
    }

private:
    struct Node {
        size_t point;
        int left = -1, right = -1;
        int axis = 0;
    };

    int build(size_t lo, size_t hi, int depth) {
        if (lo >= hi) return -1;
        const int axis = depth % 3;
        const size_t mid = (lo + hi) / 2;
        std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi,
                         [&](size_t a, size_t b) { return pts_[3 * a + axis] < pts_[3 * b + axis]; });
        Node n;
        n.point = idx_[mid];
        n.axis = axis;
        const int self = static_cast<int>(nodes_.size());
        nodes_.push_back(n);
        nodes_[self].left = build(lo, mid, depth + 1);
        nodes_[self].right = build(mid + 1, hi, depth + 1);
        return self;
    }

    void search(int node, const double* query, double& best) const {
        if (node < 0) return;
        const Node& n = nodes_[node];
        const double* p = pts_.data() + 3 * n.point;
        best = std::min(best, sq_dist(query, p));
        const double delta = query[n.axis] - p[n.axis];
        const int near = delta < 0 ? n.left : n.right;
        const int far = delta < 0 ? n.right : n.left;
        search(near, query, best);
        if (delta * delta < best) search(far, query, best);
    }

    const std::vector<double>& pts_;
    std::vector<size_t> idx_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

double mean_nn_sq_brute(const std::vector<double>& from, const std::vector<double>& to) {
    const size_t n = from.size() / 3, m = to.size() / 3;
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < m; ++j)
            best = std::min(best, sq_dist(from.data() + 3 * i, to.data() + 3 * j));
        acc += best;
    }
    return acc / static_cast<double>(n);
}

double mean_nn_sq_tree(const std::vector<double>& from, const KdTree& tree) {
    const size_t n = from.size() / 3;
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += tree.nearest_sq(from.data() + 3 * i);
    return acc / static_cast<double>(n);
}

constexpr size_t kBruteForceLimit = 256;

} // namespace

double pmd(const std::vector<double>& pred, const std::vector<double>& gt) {
    const size_t n = point_count("pmd", pred);
    if (pred.size() != gt.size())
        throw MetricError("pmd: size mismatch " + std::to_string(pred.size() / 3) + " vs " +
                          std::to_string(gt.size() / 3));
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - gt[i];
        acc += d * d;
    }
    return acc / static_cast<double>(3 * n);
}

double chamfer_bruteforce(const std::vector<double>& p, const std::vector<double>& q) {
    point_count("chamfer", p);
    point_count("chamfer", q);
    return mean_nn_sq_brute(p, q) + mean_nn_sq_brute(q, p);
}

double chamfer_kdtree(const std::vector<double>& p, const std::vector<double>& q) {
    point_count("chamfer", p);
    point_count("chamfer", q);
    KdTree tp(p), tq(q);
    return mean_nn_sq_tree(p, tq) + mean_nn_sq_tree(q, tp);
}

double chamfer(const std::vector<double>& p, const std::vector<double>& q) {
    const size_t n = point_count("chamfer", p);
    const size_t m = point_count("chamfer", q);
    if (n < kBruteForceLimit && m < kBruteForceLimit) return chamfer_bruteforce(p, q);
    return chamfer_kdtree(p, q);
}

// Shortest augmenting path assignment (Jonker-Volgenant style), O(n^3).
double solve_assignment(const std::vector<std::vector<double>>& cost, std::vector<int>& row_to_col) {
    const int n = static_cast<int>(cost.size());
    if (n == 0) throw MetricError("solve_assignment: empty cost matrix");
    for (const auto& row : cost)
        if (static_cast<int>(row.size()) != n)
            throw MetricError("solve_assignment: cost matrix must be square");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    row_to_col.assign(n, -1);
    double total = 0.0;
    for (int j = 1; j <= n; ++j) {
        if (p[j] == 0) continue;
        row_to_col[p[j] - 1] = j - 1;
        total += cost[p[j] - 1][j - 1];
    }
    return total;
}

double emd(const std::vector<double>& p, const std::vector<double>& q) {
    const size_t n = point_count("emd", p);
    const size_t m = point_count("emd", q);
    if (n != m)
        throw MetricError("emd: size mismatch " + std::to_string(n) + " vs " + std::to_string(m));
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            cost[i][j] = std::sqrt(sq_dist(p.data() + 3 * i, q.data() + 3 * j));
    std::vector<int> assign;
    const double total = solve_assignment(cost, assign);
    return total / static_cast<double>(n);
}

MetricReport evaluate_pair(const std::vector<double>& pred, const std::vector<double>& gt) {
    const auto start = std::chrono::steady_clock::now();
    MetricReport r;
    r.n_points = pred.size() / 3;
    r.pmd = pmd(pred, gt);
    r.cd = chamfer(pred, gt);
    r.emd = emd(pred, gt);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

} // namespace mapcon
