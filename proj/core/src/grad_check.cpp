#include "mlc/grad_check.hpp"

#include "mlc/error.hpp"

#include <algorithm>
#include <cmath>

namespace mlc::diff {

GradCheckReport check_gradients(const LossFn& fn, const ParamVector& params, double epsilon,
                                double tolerance) {
    if (epsilon <= 0.0) throw ConfigError("check_gradients: epsilon must be positive");

    ParamVector analytic = ParamVector::zeros_like(params);
    const double base = fn(params, &analytic);
    if (!std::isfinite(base)) {
        throw DivergenceError("check_gradients: loss is not finite at the evaluation point");
    }
    check_same_layout(params, analytic, "check_gradients");

    GradCheckReport report;
    ParamVector probe = params;
    for (std::size_t s = 0; s < params.segments().size(); ++s) {
        const auto& seg = params.segments()[s];
        const auto& aseg = analytic.segments()[s];
        Tensor& pt = probe.segments()[s].tensor;
        for (std::size_t i = 0; i < seg.tensor.size(); ++i) {
            const double saved = pt.at(i);
            pt.at(i) = saved + epsilon;
            const double up = fn(probe, nullptr);
            pt.at(i) = saved - epsilon;
            const double down = fn(probe, nullptr);
            pt.at(i) = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw DivergenceError("check_gradients: loss is not finite near '" + seg.name +
                                      "' flat index " + std::to_string(i));
            }
            const double numeric = (up - down) / (2.0 * epsilon);
            const double a = aseg.tensor.at(i);
            const double scale = std::max({1e-6, std::abs(a), std::abs(numeric)});
            const double rel = std::abs(a - numeric) / scale;

            GradCheckEntry entry{seg.name, i, a, numeric, rel};
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst = entry;
            }
            if (rel > tolerance) report.failures.push_back(entry);
        }
    }
    report.passed = report.failures.empty();
    return report;
}

} // namespace mlc::diff
