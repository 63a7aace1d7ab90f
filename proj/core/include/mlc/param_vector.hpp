#pragma once

#include "mlc/tensor.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace mlc {

// Flat, ordered collection of all trainable values of one network.
// Segment names are unique; vector arithmetic is defined over the flat view
// and requires both operands to share the same layout (names and shapes, in order).
class ParamVector {
public:
    struct Segment {
        std::string name;
        Tensor tensor;
    };

    ParamVector() = default;

    void add(const std::string& name, Tensor t);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    Tensor& tensor(const std::string& name);
    const Tensor& tensor(const std::string& name) const;

    const std::vector<Segment>& segments() const { return segments_; }
    std::vector<Segment>& segments() { return segments_; }
    std::size_t segment_count() const { return segments_.size(); }
    std::size_t total_len() const { return total_len_; }
    bool empty() const { return segments_.empty(); }

    std::vector<double> flatten() const;
    void set_flat(const std::vector<double>& flat);

    static ParamVector zeros_like(const ParamVector& layout);
    bool same_layout(const ParamVector& other) const;

    // Flat-view arithmetic; layouts must match.
    double dot(const ParamVector& other) const;
    double l2_norm() const;
    void scale(double c);
    void add_scaled(const ParamVector& other, double c);  // this += c * other
    ParamVector plus_scaled(const ParamVector& other, double c) const;
    void fill(double v);
    bool all_finite() const;
    double max_abs_diff(const ParamVector& other) const;

private:
    std::vector<Segment> segments_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t total_len_ = 0;
};

void check_same_layout(const ParamVector& a, const ParamVector& b, const char* context);

} // namespace mlc
