#pragma once

#include "mlc/param_vector.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mlc::diff {

// Callable under test: returns the loss at `params`; when `grad_out` is
// non-null it must also be filled with the analytic gradient in the same
// layout as `params`.
using LossFn = std::function<double(const ParamVector& params, ParamVector* grad_out)>;

struct GradCheckEntry {
    std::string segment;
    std::size_t flat_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct GradCheckReport {
    bool passed = false;
    double max_rel_err = 0.0;
    GradCheckEntry worst;
    std::vector<GradCheckEntry> failures;
};

// Central finite differences against the analytic gradient, coordinate by
// coordinate. rel_err = |a - n| / max(1e-6, |a|, |n|).
GradCheckReport check_gradients(const LossFn& fn, const ParamVector& params, double epsilon = 1e-5,
                                double tolerance = 1e-4);

} // namespace mlc::diff
