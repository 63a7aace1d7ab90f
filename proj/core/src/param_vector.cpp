#include "mlc/param_vector.hpp"

#include "mlc/error.hpp"

#include <cmath>

namespace mlc {

void check_same_layout(const ParamVector& a, const ParamVector& b, const char* context) {
    if (!a.same_layout(b)) {
        throw ShapeError(std::string(context) + ": parameter vectors have different layouts (" +
                         std::to_string(a.segment_count()) + " vs " + std::to_string(b.segment_count()) +
                         " segments, " + std::to_string(a.total_len()) + " vs " +
                         std::to_string(b.total_len()) + " values)");
    }
}

void ParamVector::add(const std::string& name, Tensor t) {
    if (has(name)) throw ConfigError("param_vector: duplicate segment name '" + name + "'");
    index_.emplace(name, segments_.size());
    total_len_ += t.size();
    segments_.push_back(Segment{name, std::move(t)});
}

Tensor& ParamVector::tensor(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("param_vector: no segment named '" + name + "'");
    return segments_[it->second].tensor;
}

const Tensor& ParamVector::tensor(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("param_vector: no segment named '" + name + "'");
    return segments_[it->second].tensor;
}

std::vector<double> ParamVector::flatten() const {
    std::vector<double> flat;
    flat.reserve(total_len_);
    for (const Segment& s : segments_) {
        flat.insert(flat.end(), s.tensor.values().begin(), s.tensor.values().end());
    }
    return flat;
}

void ParamVector::set_flat(const std::vector<double>& flat) {
    if (flat.size() != total_len_) {
        throw ShapeError("param_vector: set_flat with " + std::to_string(flat.size()) +
                         " values, expected " + std::to_string(total_len_));
    }
    std::size_t off = 0;
    for (Segment& s : segments_) {
        std::size_t n = s.tensor.size();
        for (std::size_t i = 0; i < n; ++i) s.tensor.at(i) = flat[off + i];
        off += n;
    }
}

ParamVector ParamVector::zeros_like(const ParamVector& layout) {
    ParamVector out;
    for (const Segment& s : layout.segments_) {
        out.add(s.name, Tensor::zeros(s.tensor.shape()));
    }
    return out;
}

bool ParamVector::same_layout(const ParamVector& other) const {
    if (segments_.size() != other.segments_.size()) return false;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        if (segments_[i].name != other.segments_[i].name) return false;
        if (segments_[i].tensor.shape() != other.segments_[i].tensor.shape()) return false;
    }
    return true;
}

double ParamVector::dot(const ParamVector& other) const {
    check_same_layout(*this, other, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        const auto& a = segments_[i].tensor.values();
        const auto& b = other.segments_[i].tensor.values();
        for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * b[j];
    }
    return acc;
}

double ParamVector::l2_norm() const { return std::sqrt(dot(*this)); }

void ParamVector::scale(double c) {
    for (Segment& s : segments_) {
        for (double& v : s.tensor.values()) v *= c;
    }
}

void ParamVector::add_scaled(const ParamVector& other, double c) {
    check_same_layout(*this, other, "add_scaled");
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        auto& a = segments_[i].tensor.values();
        const auto& b = other.segments_[i].tensor.values();
        for (std::size_t j = 0; j < a.size(); ++j) a[j] += c * b[j];
    }
}

ParamVector ParamVector::plus_scaled(const ParamVector& other, double c) const {
    ParamVector out = *this;
    out.add_scaled(other, c);
    return out;
}

void ParamVector::fill(double v) {
    for (Segment& s : segments_) {
        for (double& x : s.tensor.values()) x = v;
    }
}

bool ParamVector::all_finite() const {
    for (const Segment& s : segments_) {
        if (!s.tensor.all_finite()) return false;
    }
    return true;
}

double ParamVector::max_abs_diff(const ParamVector& other) const {
    check_same_layout(*this, other, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        const auto& a = segments_[i].tensor.values();
        const auto& b = other.segments_[i].tensor.values();
        for (std::size_t j = 0; j < a.size(); ++j) {
            double d = std::fabs(a[j] - b[j]);
            if (d > m) m = d;
        }
    }
    return m;
}

} // namespace mlc
