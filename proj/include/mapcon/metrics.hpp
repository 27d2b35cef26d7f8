#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mapcon {

struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MetricReport {
    double pmd = 0.0;
    double cd = 0.0;
    double emd = 0.0;
    size_t n_points = 0;
    double seconds = 0.0;
};

// Points are flat row-major N x 3 arrays.

// order-sensitive squared error, same form as the reconstruction loss
double pmd(const std::vector<double>& pred, const std::vector<double>& gt);

// symmetric mean squared nearest-neighbor distance; order-free
double chamfer(const std::vector<double>& p, const std::vector<double>& q);
double chamfer_bruteforce(const std::vector<double>& p, const std::vector<double>& q);
double chamfer_kdtree(const std::vector<double>& p, const std::vector<double>& q);

// exact assignment-based mean Euclidean distance between equal-size clouds
double emd(const std::vector<double>& p, const std::vector<double>& q);

// exact dense linear assignment (shortest augmenting path); returns the
// column assigned to each row and the total cost
double solve_assignment(const std::vector<std::vector<double>>& cost, std::vector<int>& row_to_col);

MetricReport evaluate_pair(const std::vector<double>& pred, const std::vector<double>& gt);

} // namespace mapcon
