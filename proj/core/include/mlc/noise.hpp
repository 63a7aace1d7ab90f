#pragma once

#include "mlc/tensor.hpp"

#include <cstdint>
#include <vector>

namespace mlc::noise {

enum class Kind { Unif, Flip };

// UNIF: with probability rho the label is redrawn uniformly over all classes
// (so it may survive the redraw); P(unchanged) = 1 - rho + rho/C.
// FLIP: with probability rho the label moves to one of the other C-1 classes;
// P(unchanged) = 1 - rho.
struct NoiseSpec {
    Kind kind = Kind::Unif;
    double rho = 0.0;
    int num_classes = 0;
    std::uint64_t seed = 0;

    void validate() const;
};

// entry(i, j) = P(noisy = i | true = j); columns sum to 1.
struct CorruptionMatrix {
    int num_classes = 0;
    Tensor entries;

    double at(int noisy, int true_class) const { return entries.at(noisy, true_class); }
};

std::vector<int> inject(const std::vector<int>& labels, const NoiseSpec& spec);
std::vector<int> inject_unif(const std::vector<int>& labels, const NoiseSpec& spec);
std::vector<int> inject_flip(const std::vector<int>& labels, const NoiseSpec& spec);

CorruptionMatrix empirical_corruption_matrix(const std::vector<int>& true_labels,
                                             const std::vector<int>& noisy_labels, int num_classes);

// Closed-form corruption matrix for a spec (what the empirical one converges to).
CorruptionMatrix analytic_matrix(const NoiseSpec& spec);

} // namespace mlc::noise
