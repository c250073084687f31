#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "milasc/tensor.hpp"

namespace milasc {

/// One tensor whose analytic gradient is to be verified. `value` is perturbed
/// in place during finite differencing; `grad` must hold the analytic gradient
/// produced by the caller's backward pass before grad_check runs.
struct GradCheckTarget {
    std::string name;
    Tensor* value = nullptr;
    const Tensor* grad = nullptr;
};

struct GradCheckOptions {
    double step = 1e-5;
    /// Cap on coordinates checked per tensor; <= 0 checks every coordinate.
    int max_coords_per_tensor = 0;
    std::uint64_t subsample_seed = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_target;
    int worst_coord = -1;
    int coords_checked = 0;
};

/// Compares the analytic gradients in `targets` against central finite
/// differences of `loss` at every (or a seeded subset of) coordinate(s).
/// Relative error per coordinate is |a - n| / max(|a|, |n|, 1); probes are
/// designed so gradients are O(1), making the unit floor a plain absolute
/// check only for near-zero entries. Throws NumericalError if `loss` is
/// non-finite at any probe point.
GradCheckResult grad_check(const std::function<double()>& loss,
                           const std::vector<GradCheckTarget>& targets,
                           const GradCheckOptions& options = {});

} // namespace milasc
