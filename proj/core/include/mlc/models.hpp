#pragma once

#include "mlc/graph.hpp"
#include "mlc/param_vector.hpp"
#include "mlc/tensor.hpp"

#include <cstdint>
#include <vector>

namespace mlc {

// Feed-forward classifier: tanh hidden layers, affine head. The activation of
// the last hidden layer doubles as the feature representation handed to the
// correction network.
struct ClassifierConfig {
    int input_dim = 0;
    std::vector<int> hidden_dims;
    int num_classes = 0;
    bool features_pre_activation = false;

    int feature_dim() const { return hidden_dims.empty() ? 0 : hidden_dims.back(); }
    void validate() const;
};

// Label correction network: label embedding concatenated with (barriered)
// classifier features, then affine -> tanh -> affine -> tanh -> affine -> softmax.
struct LcnConfig {
    int num_classes = 0;
    int label_embed_dim = 128;
    int feature_dim = 0;
    int hidden_dim = 64;

    void validate() const;
};

ParamVector init_classifier(const ClassifierConfig& cfg, std::uint64_t seed);
ParamVector init_lcn(const LcnConfig& cfg, std::uint64_t seed);

struct ClassifierOut {
    diff::ValueId logits;
    diff::ValueId features;
};

// Builds the classifier forward pass on `g`. Parameters are registered on the
// graph under their segment names, so several calls against one graph share
// leaves (and therefore gradient accumulation).
ClassifierOut classifier_forward(diff::Graph& g, const ClassifierConfig& cfg, const ParamVector& w,
                                 const Tensor& x);

// Soft labels for a batch of noisy labels. `features` is barriered inside, so
// no gradient ever flows from the correction loss into the classifier.
diff::ValueId lcn_forward(diff::Graph& g, const LcnConfig& cfg, const ParamVector& alpha,
                          diff::ValueId features, const std::vector<int>& noisy_labels);

// Mean over the batch of -sum_c target[c] * log softmax(logits)[c].
// Differentiable through both arguments.
diff::ValueId soft_cross_entropy(diff::Graph& g, diff::ValueId target, diff::ValueId logits);

// Same quantity on plain tensors, for evaluation outside any graph.
double soft_cross_entropy_value(const Tensor& target, const Tensor& logits);

Tensor one_hot(const std::vector<int>& labels, int num_classes);

// Every row must be a probability distribution: entries >= 0, sum within 1e-9 of 1.
void validate_soft_label_rows(const Tensor& rows);

// Row-wise argmax; ties resolve to the lowest class index.
std::vector<int> predict(const Tensor& logits);

// Fraction of rows whose argmax prediction matches the label.
double dataset_accuracy(const ClassifierConfig& cfg, const ParamVector& w, const Tensor& x,
                        const std::vector<int>& labels);

} // namespace mlc
