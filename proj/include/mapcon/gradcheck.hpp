#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mapcon/fdcheck.hpp"

namespace mapcon {

// One finite-difference gradient check: a named scalar-valued function of a
// single input tensor, with a fixed seeded base point.
struct GradCheckCase {
    std::string name;
    std::string group; // "ops" or "losses"
    Shape shape;
    std::vector<double> x0;
    double h = 1e-5;
    double tol = 1e-4;
    std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)> fn;
};

struct GradCheckResult {
    std::string name;
    std::string group;
    FdReport report;
};

// Full registry: every differentiable kernel and every loss, several shapes
// each. Base points are deterministic functions of the seed.
std::vector<GradCheckCase> gradcheck_cases(uint64_t seed = 1);

// Runs the selected group ("ops", "losses", or "all"). Cases named in
// `corrupted` get a value-only perturbation spliced into their function so the
// analytic gradient no longer matches -- a self-test hook proving the harness
// can actually catch a broken backward pass.
std::vector<GradCheckResult> run_gradchecks(const std::string& which, uint64_t seed = 1,
                                            double tol = 1e-4,
                                            const std::vector<std::string>& corrupted = {});

} // namespace mapcon
