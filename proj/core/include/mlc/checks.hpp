#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mlc::checks {

struct CheckResult {
    std::string name;
    bool passed = false;
    double worst = 0.0;     // worst observed error / margin, meaning depends on the check
    std::string detail;
};

// Reverse-mode gradients of the combined training loss (classifier + LCN)
// against central finite differences over random small architectures.
CheckResult check_gradient_oracle(int draws, std::uint64_t seed, double tolerance = 1e-4,
                                  double epsilon = 1e-5);

// The main-model gradient must be identical whether the LCN's soft labels stay
// attached (barriered features) or are replaced by a detached constant copy.
CheckResult check_stop_gradient(int draws, std::uint64_t seed, double tolerance = 1e-12);

// First meta step with k=1 and a zero carry equals the gradient of the
// one-step-unrolled objective L_D(w - lr * grad_w L_train(alpha, w)); compared
// against per-coordinate finite differences of that unrolled objective.
CheckResult check_meta_anchor(int seeds, std::uint64_t seed0, double min_cosine = 0.99,
                              double max_norm_err = 5e-2);

// mixed_hvp_fd against a forward-only double-finite-difference probe of the
// mixed second derivative contracted with v.
CheckResult check_mixed_hvp(int instances, std::uint64_t seed, double tolerance = 1e-2);

std::vector<CheckResult> run_all(std::uint64_t seed);

} // namespace mlc::checks
