#include "mlc/noise.hpp"

#include "mlc/error.hpp"
#include "mlc/rng.hpp"

#include <string>

namespace mlc::noise {

namespace {

void check_labels(const std::vector<int>& labels, int num_classes, const char* op) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) {
            throw IndexError(std::string(op) + ": label " + std::to_string(labels[i]) + " at position " +
                             std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
        }
    }
}

} // namespace

void NoiseSpec::validate() const {
    if (rho < 0.0 || rho > 1.0) {
        throw ConfigError("noise: rho must lie in [0, 1], got " + std::to_string(rho));
    }
    if (num_classes < 2) {
        throw ConfigError("noise: num_classes must be >= 2, got " + std::to_string(num_classes));
    }
}

std::vector<int> inject_unif(const std::vector<int>& labels, const NoiseSpec& spec) {
    spec.validate();
    if (spec.kind != Kind::Unif) throw ConfigError("inject_unif: spec.kind is not UNIF");
    check_labels(labels, spec.num_classes, "inject_unif");

    std::vector<int> out(labels);
    for (std::size_t i = 0; i < out.size(); ++i) {
        rng::Engine e(rng::mix(spec.seed, i));
        if (e.uniform01() < spec.rho) {
            out[i] = static_cast<int>(e.bounded(static_cast<std::uint64_t>(spec.num_classes)));
        }
    }
    return out;
}

std::vector<int> inject_flip(const std::vector<int>& labels, const NoiseSpec& spec) {
    spec.validate();
    if (spec.kind != Kind::Flip) throw ConfigError("inject_flip: spec.kind is not FLIP");
    check_labels(labels, spec.num_classes, "inject_flip");

    std::vector<int> out(labels);
    for (std::size_t i = 0; i < out.size(); ++i) {
        rng::Engine e(rng::mix(spec.seed, i));
        if (e.uniform01() < spec.rho) {
            int draw = static_cast<int>(e.bounded(static_cast<std::uint64_t>(spec.num_classes - 1)));
            out[i] = draw >= out[i] ? draw + 1 : draw;
        }
    }
    return out;
}

std::vector<int> inject(const std::vector<int>& labels, const NoiseSpec& spec) {
    return spec.kind == Kind::Unif ? inject_unif(labels, spec) : inject_flip(labels, spec);
}

CorruptionMatrix empirical_corruption_matrix(const std::vector<int>& true_labels,
                                             const std::vector<int>& noisy_labels, int num_classes) {
    if (num_classes < 2) {
        throw ConfigError("corruption_matrix: num_classes must be >= 2, got " + std::to_string(num_classes));
    }
    if (true_labels.size() != noisy_labels.size()) {
        throw DataError("corruption_matrix: " + std::to_string(true_labels.size()) + " true labels vs " +
                        std::to_string(noisy_labels.size()) + " noisy labels");
    }
    check_labels(true_labels, num_classes, "corruption_matrix");
    check_labels(noisy_labels, num_classes, "corruption_matrix");

    std::vector<std::size_t> class_counts(static_cast<std::size_t>(num_classes), 0);
    Tensor counts({num_classes, num_classes});
    for (std::size_t i = 0; i < true_labels.size(); ++i) {
        counts.at(noisy_labels[i], true_labels[i]) += 1.0;
        ++class_counts[static_cast<std::size_t>(true_labels[i])];
    }
    for (int j = 0; j < num_classes; ++j) {
        if (class_counts[static_cast<std::size_t>(j)] == 0) {
            throw DataError("corruption_matrix: true class " + std::to_string(j) + " has no examples");
        }
    }

    CorruptionMatrix m{num_classes, Tensor({num_classes, num_classes})};
    for (int i = 0; i < num_classes; ++i) {
        for (int j = 0; j < num_classes; ++j) {
            m.entries.at(i, j) = counts.at(i, j) / static_cast<double>(class_counts[static_cast<std::size_t>(j)]);
        }
    }
    return m;
}

CorruptionMatrix analytic_matrix(const NoiseSpec& spec) {
    spec.validate();
    const int c = spec.num_classes;
    CorruptionMatrix m{c, Tensor({c, c})};
    const double off = spec.kind == Kind::Unif ? spec.rho / c : spec.rho / (c - 1);
    const double diag = spec.kind == Kind::Unif ? 1.0 - spec.rho + spec.rho / c : 1.0 - spec.rho;
    for (int i = 0; i < c; ++i) {
        for (int j = 0; j < c; ++j) {
            m.entries.at(i, j) = i == j ? diag : off;
        }
    }
    return m;
}

} // namespace mlc::noise
