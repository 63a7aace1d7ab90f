#include "mlc/models.hpp"

#include "mlc/error.hpp"
#include "mlc/rng.hpp"

#include <cmath>
#include <string>

namespace mlc {

namespace {

Tensor xavier_uniform(int fan_in, int fan_out, rng::Engine& e) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor t({fan_in, fan_out});
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = e.uniform(-limit, limit);
    return t;
}

std::string layer_name(const char* prefix, const char* kind, int i) {
    return std::string(prefix) + "/" + kind + std::to_string(i);
}

} // namespace

void ClassifierConfig::validate() const {
    if (input_dim < 1) throw ConfigError("classifier: input_dim must be >= 1, got " + std::to_string(input_dim));
    if (num_classes < 2) throw ConfigError("classifier: num_classes must be >= 2, got " + std::to_string(num_classes));
    if (hidden_dims.empty()) throw ConfigError("classifier: at least one hidden layer is required");
    for (int d : hidden_dims) {
        if (d < 1) throw ConfigError("classifier: hidden dim must be >= 1, got " + std::to_string(d));
    }
}

void LcnConfig::validate() const {
    if (num_classes < 2) throw ConfigError("lcn: num_classes must be >= 2, got " + std::to_string(num_classes));
    if (label_embed_dim < 1) throw ConfigError("lcn: label_embed_dim must be >= 1, got " + std::to_string(label_embed_dim));
    if (feature_dim < 1) throw ConfigError("lcn: feature_dim must be >= 1, got " + std::to_string(feature_dim));
    if (hidden_dim < 1) throw ConfigError("lcn: hidden_dim must be >= 1, got " + std::to_string(hidden_dim));
}

ParamVector init_classifier(const ClassifierConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    rng::Engine e(seed);
    ParamVector w;
    int in = cfg.input_dim;
    int layer = 0;
    for (int out : cfg.hidden_dims) {
        w.add(layer_name("clf", "W", layer), xavier_uniform(in, out, e));
        w.add(layer_name("clf", "b", layer), Tensor::zeros({out}));
        in = out;
        ++layer;
    }
    w.add(layer_name("clf", "W", layer), xavier_uniform(in, cfg.num_classes, e));
    w.add(layer_name("clf", "b", layer), Tensor::zeros({cfg.num_classes}));
    return w;
}

ParamVector init_lcn(const LcnConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    rng::Engine e(seed);
    ParamVector a;
    Tensor embed({cfg.num_classes, cfg.label_embed_dim});
    for (std::size_t i = 0; i < embed.size(); ++i) embed.at(i) = e.normal(0.0, 0.01);
    a.add("lcn/embed", embed);
    const int in0 = cfg.label_embed_dim + cfg.feature_dim;
    a.add("lcn/W0", xavier_uniform(in0, cfg.hidden_dim, e));
    a.add("lcn/b0", Tensor::zeros({cfg.hidden_dim}));
    a.add("lcn/W1", xavier_uniform(cfg.hidden_dim, cfg.hidden_dim, e));
    a.add("lcn/b1", Tensor::zeros({cfg.hidden_dim}));
    a.add("lcn/W2", xavier_uniform(cfg.hidden_dim, cfg.num_classes, e));
    a.add("lcn/b2", Tensor::zeros({cfg.num_classes}));
    return a;
}

ClassifierOut classifier_forward(diff::Graph& g, const ClassifierConfig& cfg, const ParamVector& w,
                                 const Tensor& x) {
    cfg.validate();
    if (x.rank() != 2 || x.cols() != cfg.input_dim) {
        throw ShapeError("classifier_forward: batch " + x.shape_str() + " does not match input_dim " +
                         std::to_string(cfg.input_dim));
    }
    if (!x.all_finite()) throw DataError("classifier_forward: batch contains non-finite values");

    diff::ValueId h = g.input(x);
    diff::ValueId features = -1;
    const int layers = static_cast<int>(cfg.hidden_dims.size());
    for (int i = 0; i < layers; ++i) {
        auto W = g.param(layer_name("clf", "W", i), w.tensor(layer_name("clf", "W", i)));
        auto b = g.param(layer_name("clf", "b", i), w.tensor(layer_name("clf", "b", i)));
        auto z = g.add_bias(g.matmul(h, W), b);
        h = g.tanh(z);
        if (i == layers - 1) features = cfg.features_pre_activation ? z : h;
    }
    auto W = g.param(layer_name("clf", "W", layers), w.tensor(layer_name("clf", "W", layers)));
    auto b = g.param(layer_name("clf", "b", layers), w.tensor(layer_name("clf", "b", layers)));
    auto logits = g.add_bias(g.matmul(h, W), b);
    return ClassifierOut{logits, features};
}

diff::ValueId lcn_forward(diff::Graph& g, const LcnConfig& cfg, const ParamVector& alpha,
                          diff::ValueId features, const std::vector<int>& noisy_labels) {
    cfg.validate();
    const Tensor& f = g.value(features);
    if (f.rank() != 2 || f.cols() != cfg.feature_dim) {
        throw ShapeError("lcn_forward: features " + f.shape_str() + " do not match feature_dim " +
                         std::to_string(cfg.feature_dim));
    }
    if (f.rows() != static_cast<int>(noisy_labels.size())) {
        throw ShapeError("lcn_forward: " + std::to_string(noisy_labels.size()) + " labels for " +
                         std::to_string(f.rows()) + " feature rows");
    }
    for (std::size_t i = 0; i < noisy_labels.size(); ++i) {
        if (noisy_labels[i] < 0 || noisy_labels[i] >= cfg.num_classes) {
            throw IndexError("lcn_forward: label " + std::to_string(noisy_labels[i]) + " at position " +
                             std::to_string(i) + " outside [0, " + std::to_string(cfg.num_classes) + ")");
        }
    }

    auto embed = g.param("lcn/embed", alpha.tensor("lcn/embed"));
    auto W0 = g.param("lcn/W0", alpha.tensor("lcn/W0"));
    auto b0 = g.param("lcn/b0", alpha.tensor("lcn/b0"));
    auto W1 = g.param("lcn/W1", alpha.tensor("lcn/W1"));
    auto b1 = g.param("lcn/b1", alpha.tensor("lcn/b1"));
    auto W2 = g.param("lcn/W2", alpha.tensor("lcn/W2"));
    auto b2 = g.param("lcn/b2", alpha.tensor("lcn/b2"));

    auto in = g.concat_cols(g.embed_rows(embed, noisy_labels), g.stop_gradient(features));
    auto h0 = g.tanh(g.add_bias(g.matmul(in, W0), b0));
    auto h1 = g.tanh(g.add_bias(g.matmul(h0, W1), b1));
    auto out = g.softmax_rows(g.add_bias(g.matmul(h1, W2), b2));
    return out;
}

diff::ValueId soft_cross_entropy(diff::Graph& g, diff::ValueId target, diff::ValueId logits) {
    const Tensor& t = g.value(target);
    const Tensor& z = g.value(logits);
    if (t.rank() != 2 || !t.same_shape(z)) {
        throw ShapeError("soft_cross_entropy: target " + t.shape_str() + " vs logits " + z.shape_str());
    }
    auto ls = g.log_softmax_rows(logits);
    return g.scale(g.mean_all(g.row_sum(g.mul(target, ls))), -1.0);
}

double soft_cross_entropy_value(const Tensor& target, const Tensor& logits) {
    diff::Graph g;
    return g.value(soft_cross_entropy(g, g.input(target), g.input(logits))).item();
}

Tensor one_hot(const std::vector<int>& labels, int num_classes) {
    if (num_classes < 2) throw ConfigError("one_hot: num_classes must be >= 2, got " + std::to_string(num_classes));
    Tensor t({static_cast<int>(labels.size()), num_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) {
            throw IndexError("one_hot: label " + std::to_string(labels[i]) + " at position " +
                             std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
        }
        t.at(static_cast<int>(i), labels[i]) = 1.0;
    }
    return t;
}

void validate_soft_label_rows(const Tensor& rows) {
    if (rows.rank() != 2) throw ShapeError("soft labels must be rank-2, got " + rows.shape_str());
    for (int i = 0; i < rows.rows(); ++i) {
        double sum = 0.0;
        for (int j = 0; j < rows.cols(); ++j) {
            const double v = rows.at(i, j);
            if (!(v >= 0.0)) {
                throw DataError("soft label row " + std::to_string(i) + " has negative entry " +
                                std::to_string(v) + " at class " + std::to_string(j));
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw DataError("soft label row " + std::to_string(i) + " sums to " + std::to_string(sum));
        }
    }
}

double dataset_accuracy(const ClassifierConfig& cfg, const ParamVector& w, const Tensor& x,
                        const std::vector<int>& labels) {
    if (x.rows() != static_cast<int>(labels.size())) {
        throw ShapeError("dataset_accuracy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(x.rows()) + " rows");
    }
    if (labels.empty()) throw DataError("dataset_accuracy: empty dataset");
    diff::Graph g;
    auto out = classifier_forward(g, cfg, w, x);
    const auto preds = predict(g.value(out.logits));
    int hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (preds[i] == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<int> predict(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("predict: logits must be rank-2, got " + logits.shape_str());
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (int i = 0; i < logits.rows(); ++i) {
        int best = 0;
        for (int j = 1; j < logits.cols(); ++j) {
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

} // namespace mlc
