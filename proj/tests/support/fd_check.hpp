#pragma once

// Central finite-difference gradient checking. The forward closure rebuilds
// its graph from the leaves' current data on every call, so perturbing a leaf
// and re-running gives an independent numerical derivative.

#include <cmath>
#include <functional>
#include <vector>

#include "rhnmt/tensor.hpp"

namespace rhnmt::testing {

struct FdReport {
    double worst_abs_diff = 0.0;
    double worst_rel = 0.0;  // |fd - analytic| / max(|fd|, |analytic|) at the worst entry
    bool ok = true;
};

// Checks d(forward())/d(leaf) for every entry of every leaf against central
// differences. Passes when |fd - analytic| <= rel_tol * max(|fd|, |analytic|)
// or the absolute difference is below abs_floor.
inline FdReport fd_check(const std::vector<TensorPtr>& leaves,
                         const std::function<TensorPtr()>& forward, double eps = 1e-5,
                         double rel_tol = 1e-4, double abs_floor = 1e-7) {
    for (const auto& leaf : leaves) {
        leaf->ensure_grad();
        leaf->zero_grad();
    }
    {
        GraphScope graph;
        TensorPtr loss = forward();
        backward(loss);
    }
    FdReport report;
    for (const auto& leaf : leaves) {
        for (std::size_t i = 0; i < leaf->data.size(); ++i) {
            const double saved = leaf->data[i];
            leaf->data[i] = saved + eps;
            double up = forward()->data[0];
            leaf->data[i] = saved - eps;
            double down = forward()->data[0];
            leaf->data[i] = saved;
            double fd = (up - down) / (2.0 * eps);
            double analytic = leaf->grad[i];
            double diff = std::fabs(fd - analytic);
            double denom = std::max(std::fabs(fd), std::fabs(analytic));
            bool entry_ok = diff <= std::max(rel_tol * denom, abs_floor);
            if (!entry_ok) report.ok = false;
            if (diff > report.worst_abs_diff) report.worst_abs_diff = diff;
            if (denom > 0.0 && diff / denom > report.worst_rel) report.worst_rel = diff / denom;
        }
    }
    return report;
}

}  // namespace rhnmt::testing
