#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mapcon/tensor.hpp"

namespace mapcon {

struct FdReport {
    double max_rel_err = 0.0;
    size_t worst_coord = 0;
    bool pass = false;
};

// Compares the analytic gradient of a scalar-valued function against central
// differences, coordinate by coordinate, in double precision.
//
// f receives a tape and the input tensor and must return a scalar tensor.
inline FdReport finite_difference_check(
    const std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)>& f,
    const Shape& shape, std::vector<double> x0, double h, double tol) {
    Tape<double> tape;
    Tensor<double> x = tape.leaf(shape, x0, true);
    Tensor<double> y = f(tape, x);
    if (y.size() != 1)
        throw TensorError("finite_difference_check: function output is not scalar");
    if (!std::isfinite(y.item()))
        throw TensorError("finite_difference_check: non-finite function value at base point");
    GradMap<double> gm = tape.backward(y);
    const std::vector<double>& analytic = gm.at(x);

    auto eval = [&](const std::vector<double>& v) {
        Tape<double> t;
        Tensor<double> xi = t.leaf(shape, v, false);
        return f(t, xi).item();
    };

    FdReport rep;
    std::vector<double> v = std::move(x0);
    for (size_t i = 0; i < v.size(); ++i) {
        const double orig = v[i];
        v[i] = orig + h;
        const double fp = eval(v);
        v[i] = orig - h;
        const double fm = eval(v);
        v[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw TensorError("finite_difference_check: non-finite evaluation at coordinate " +
                              std::to_string(i));
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
        const double rel = std::abs(a - numeric) / denom;
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.worst_coord = i;
        }
    }
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

} // namespace mapcon
