#include "mlc/harness.hpp"

#include "mlc/error.hpp"
#include "mlc/graph.hpp"
#include "mlc/log.hpp"
#include "mlc/params_io.hpp"
#include "mlc/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace mlc::harness {
namespace {

using nlohmann::json;

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

constexpr std::uint64_t kBlobSeedTag = 11;
constexpr std::uint64_t kNoiseSeedTag = 12;

const json& expect_object(const json& v, const std::string& where) {
    if (!v.is_object()) throw ConfigError(where + ": expected a JSON object");
    return v;
}

void reject_unknown_keys(const json& obj, const std::string& where,
                         std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end()) {
            std::string known;
            for (const char* a : allowed) {
                if (!known.empty()) known += ", ";
                known += a;
            }
            throw ConfigError(where + ": unknown key '" + key + "' (known keys: " + known + ")");
        }
    }
}

void read_string(const json& obj, const char* key, std::string& out, const std::string& where) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
    out = v.get<std::string>();
}

void read_bool(const json& obj, const char* key, bool& out, const std::string& where) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_boolean()) throw ConfigError(where + "." + key + ": expected true or false");
    out = v.get<bool>();
}

void read_int(const json& obj, const char* key, int& out, const std::string& where) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
    out = v.get<int>();
}

void read_u64(const json& obj, const char* key, std::uint64_t& out, const std::string& where) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
        throw ConfigError(where + "." + key + ": expected a non-negative integer");
    }
    out = v.get<std::uint64_t>();
}

void read_double(const json& obj, const char* key, double& out, const std::string& where) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
    out = v.get<double>();
}

void read_int_list(const json& obj, const char* key, std::vector<int>& out, const std::string& where) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_array()) throw ConfigError(where + "." + key + ": expected an array of integers");
    out.clear();
    for (const json& e : v) {
        if (!e.is_number_integer()) throw ConfigError(where + "." + key + ": expected an array of integers");
        out.push_back(e.get<int>());
    }
}

void read_string_list(const json& obj, const char* key, std::vector<std::string>& out,
                      const std::string& where) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_array()) throw ConfigError(where + "." + key + ": expected an array of strings");
    out.clear();
    for (const json& e : v) {
        if (!e.is_string()) throw ConfigError(where + "." + key + ": expected an array of strings");
        out.push_back(e.get<std::string>());
    }
}

noise::Kind parse_noise_kind(const std::string& name, const std::string& where) {
    if (name == "unif") return noise::Kind::Unif;
    if (name == "flip") return noise::Kind::Flip;
    throw ConfigError(where + ": unknown noise kind '" + name + "' (use \"unif\" or \"flip\")");
}

std::string noise_kind_name(noise::Kind kind) {
    return kind == noise::Kind::Unif ? "unif" : "flip";
}

bilevel::MetaOpt parse_meta_opt(const std::string& name, const std::string& where) {
    if (name == "sgd_momentum") return bilevel::MetaOpt::SgdMomentum;
    if (name == "adaptive") return bilevel::MetaOpt::Adaptive;
    throw ConfigError(where + ": unknown meta optimizer '" + name +
                      "' (use \"sgd_momentum\" or \"adaptive\")");
}

std::string meta_opt_name(bilevel::MetaOpt kind) {
    return kind == bilevel::MetaOpt::SgdMomentum ? "sgd_momentum" : "adaptive";
}

void parse_data(const json& obj, DataConfig& out, const std::string& where) {
    reject_unknown_keys(obj, where,
                        {"source", "blobs", "csv", "clean_count", "test_fraction", "standardize",
                         "noise", "seed"});
    read_string(obj, "source", out.source, where);
    if (obj.contains("blobs")) {
        const json& b = expect_object(obj.at("blobs"), where + ".blobs");
        reject_unknown_keys(b, where + ".blobs",
                            {"classes", "dim", "per_class", "spread", "center_radius"});
        read_int(b, "classes", out.blobs.classes, where + ".blobs");
        read_int(b, "dim", out.blobs.dim, where + ".blobs");
        read_int(b, "per_class", out.blobs.per_class, where + ".blobs");
        read_double(b, "spread", out.blobs.spread, where + ".blobs");
        read_double(b, "center_radius", out.blobs.center_radius, where + ".blobs");
    }
    if (obj.contains("csv")) {
        const json& c = expect_object(obj.at("csv"), where + ".csv");
        reject_unknown_keys(c, where + ".csv", {"path", "label_column", "feature_columns"});
        read_string(c, "path", out.csv.path, where + ".csv");
        read_string(c, "label_column", out.csv.label_column, where + ".csv");
        read_string_list(c, "feature_columns", out.csv.feature_columns, where + ".csv");
    }
    read_int(obj, "clean_count", out.clean_count, where);
    read_double(obj, "test_fraction", out.test_fraction, where);
    read_bool(obj, "standardize", out.standardize, where);
    if (obj.contains("noise")) {
        const json& n = expect_object(obj.at("noise"), where + ".noise");
        reject_unknown_keys(n, where + ".noise", {"kind", "rho"});
        std::string kind = noise_kind_name(out.noise_kind);
        read_string(n, "kind", kind, where + ".noise");
        out.noise_kind = parse_noise_kind(kind, where + ".noise.kind");
        read_double(n, "rho", out.rho, where + ".noise");
    }
    read_u64(obj, "seed", out.seed, where);
}

void parse_model(const json& obj, ModelConfig& out, const std::string& where) {
    reject_unknown_keys(obj, where,
                        {"hidden_dims", "features_pre_activation", "label_embed_dim", "lcn_hidden_dim"});
    read_int_list(obj, "hidden_dims", out.hidden_dims, where);
    read_bool(obj, "features_pre_activation", out.features_pre_activation, where);
    read_int(obj, "label_embed_dim", out.label_embed_dim, where);
    read_int(obj, "lcn_hidden_dim", out.lcn_hidden_dim, where);
}

void parse_train(const json& obj, bilevel::TrainConfig& out, const std::string& where) {
    reject_unknown_keys(obj, where,
                        {"k", "main_lr", "meta_lr", "main_momentum", "meta_optimizer", "meta_momentum",
                         "batch_size_noisy", "batch_size_clean", "epochs", "seed", "fd_epsilon_scale",
                         "lr_decay", "freeze_lcn_identity"});
    read_int(obj, "k", out.k, where);
    read_double(obj, "main_lr", out.main_lr, where);
    read_double(obj, "meta_lr", out.meta_lr, where);
    read_double(obj, "main_momentum", out.main_momentum, where);
    std::string opt = meta_opt_name(out.meta_optimizer);
    read_string(obj, "meta_optimizer", opt, where);
    out.meta_optimizer = parse_meta_opt(opt, where + ".meta_optimizer");
    read_double(obj, "meta_momentum", out.meta_momentum, where);
    read_int(obj, "batch_size_noisy", out.batch_size_noisy, where);
    read_int(obj, "batch_size_clean", out.batch_size_clean, where);
    read_int(obj, "epochs", out.epochs, where);
    read_u64(obj, "seed", out.seed, where);
    read_double(obj, "fd_epsilon_scale", out.fd_epsilon_scale, where);
    read_bool(obj, "lr_decay", out.lr_decay, where);
    read_bool(obj, "freeze_lcn_identity", out.freeze_lcn_identity, where);
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["run_id"] = cfg.run_id;
    j["method"] = method_name(cfg.method);
    j["output_dir"] = cfg.output_dir;
    j["data"] = {
        {"source", cfg.data.source},
        {"blobs",
         {{"classes", cfg.data.blobs.classes},
          {"dim", cfg.data.blobs.dim},
          {"per_class", cfg.data.blobs.per_class},
          {"spread", cfg.data.blobs.spread},
          {"center_radius", cfg.data.blobs.center_radius}}},
        {"csv",
         {{"path", cfg.data.csv.path},
          {"label_column", cfg.data.csv.label_column},
          {"feature_columns", cfg.data.csv.feature_columns}}},
        {"clean_count", cfg.data.clean_count},
        {"test_fraction", cfg.data.test_fraction},
        {"standardize", cfg.data.standardize},
        {"noise", {{"kind", noise_kind_name(cfg.data.noise_kind)}, {"rho", cfg.data.rho}}},
        {"seed", cfg.data.seed},
    };
    j["model"] = {
        {"hidden_dims", cfg.model.hidden_dims},
        {"features_pre_activation", cfg.model.features_pre_activation},
        {"label_embed_dim", cfg.model.label_embed_dim},
        {"lcn_hidden_dim", cfg.model.lcn_hidden_dim},
    };
    j["train"] = {
        {"k", cfg.train.k},
        {"main_lr", cfg.train.main_lr},
        {"meta_lr", cfg.train.meta_lr},
        {"main_momentum", cfg.train.main_momentum},
        {"meta_optimizer", meta_opt_name(cfg.train.meta_optimizer)},
        {"meta_momentum", cfg.train.meta_momentum},
        {"batch_size_noisy", cfg.train.batch_size_noisy},
        {"batch_size_clean", cfg.train.batch_size_clean},
        {"epochs", cfg.train.epochs},
        {"seed", cfg.train.seed},
        {"fd_epsilon_scale", cfg.train.fd_epsilon_scale},
        {"lr_decay", cfg.train.lr_decay},
        {"freeze_lcn_identity", cfg.train.freeze_lcn_identity},
    };
    return j;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out << content;
        out.flush();
        if (!out) throw IoError("write to '" + tmp + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename '" + tmp + "' -> '" + path + "' failed: " + ec.message());
}

// LCN output distribution for every noisy row, assembled in fixed-size chunks
// to keep graph memory flat.
Tensor corrected_matrix(const ClassifierConfig& ccfg, const LcnConfig& lcfg, const ParamVector& w,
                        const ParamVector& alpha, const data::Split& noisy) {
    const int n = noisy.size();
    const int c = lcfg.num_classes;
    if (n == 0) throw DataError("correction analysis: noisy split is empty");
    Tensor out({n, c});
    const int chunk = 2000;
    for (int start = 0; start < n; start += chunk) {
        const int stop = std::min(n, start + chunk);
        std::vector<int> rows(static_cast<std::size_t>(stop - start));
        std::iota(rows.begin(), rows.end(), start);
        data::Split part = data::take_rows(noisy, rows);
        diff::Graph g;
        auto fwd = classifier_forward(g, ccfg, w, part.x);
        auto soft = lcn_forward(g, lcfg, alpha, fwd.features, part.labels);
        const Tensor& vals = g.value(soft);
        for (int i = start; i < stop; ++i) {
            for (int j = 0; j < c; ++j) out.at(i, j) = vals.at(i - start, j);
        }
    }
    return out;
}

Tensor heatmap_from(const Tensor& corrected, const std::vector<int>& hidden_true, int num_classes) {
    Tensor heat = Tensor::zeros({num_classes, num_classes});
    std::vector<long long> counts(static_cast<std::size_t>(num_classes), 0);
    for (int i = 0; i < corrected.rows(); ++i) {
        const int t = hidden_true[static_cast<std::size_t>(i)];
        ++counts[static_cast<std::size_t>(t)];
        for (int j = 0; j < num_classes; ++j) heat.at(t, j) += corrected.at(i, j);
    }
    for (int t = 0; t < num_classes; ++t) {
        const long long n = counts[static_cast<std::size_t>(t)];
        if (n == 0) {
            throw DataError("correction heatmap: true class " + std::to_string(t) +
                            " has no noisy examples");
        }
        for (int j = 0; j < num_classes; ++j) heat.at(t, j) /= static_cast<double>(n);
    }
    return heat;
}

CorrectionStats stats_from(const Tensor& corrected, const std::vector<int>& noisy_labels,
                           const std::vector<int>& hidden_true) {
    CorrectionStats s;
    double c_prob = 0.0, u_prob = 0.0, c_max = 0.0, u_max = 0.0;
    for (int i = 0; i < corrected.rows(); ++i) {
        const std::size_t u = static_cast<std::size_t>(i);
        const double on_noisy = corrected.at(i, noisy_labels[u]);
        double mx = corrected.at(i, 0);
        for (int j = 1; j < corrected.cols(); ++j) mx = std::max(mx, corrected.at(i, j));
        if (noisy_labels[u] != hidden_true[u]) {
            ++s.corrupted_count;
            c_prob += on_noisy;
            c_max += mx;
        } else {
            ++s.uncorrupted_count;
            u_prob += on_noisy;
            u_max += mx;
        }
    }
    const double nanv = std::numeric_limits<double>::quiet_NaN();
    s.corrupted_mean_prob_on_noisy_label = s.corrupted_count ? c_prob / s.corrupted_count : nanv;
    s.corrupted_mean_max_prob = s.corrupted_count ? c_max / s.corrupted_count : nanv;
    s.uncorrupted_mean_prob_on_noisy_label = s.uncorrupted_count ? u_prob / s.uncorrupted_count : nanv;
    s.uncorrupted_mean_max_prob = s.uncorrupted_count ? u_max / s.uncorrupted_count : nanv;
    return s;
}

bilevel::Baseline baseline_of(Method m) {
    switch (m) {
        case Method::CleanOnly: return bilevel::Baseline::CleanOnly;
        case Method::NoisyOnly: return bilevel::Baseline::NoisyOnly;
        case Method::CleanPlusNoisy: return bilevel::Baseline::CleanPlusNoisy;
        case Method::Mlc: break;
    }
    throw StateError("baseline_of: mlc is not a baseline");
}

json summary_json(const RunReport& report) {
    json j;
    j["run_id"] = report.config.run_id;
    j["method"] = method_name(report.config.method);
    j["failed"] = report.failed;
    j["failure_message"] = report.failure_message;
    j["wall_seconds"] = report.wall_seconds;
    j["epochs_run"] = report.result.history.epochs.size();
    j["meta_updates"] = report.result.history.meta_updates;
    j["final_test_accuracy"] = report.failed ? json() : json(report.eval.accuracy);
    j["per_class_accuracy"] = report.eval.per_class;
    j["confusion"] = report.eval.confusion;
    if (report.has_lcn) {
        j["correction_stats"] = {
            {"corrupted_count", report.correction.corrupted_count},
            {"uncorrupted_count", report.correction.uncorrupted_count},
            {"corrupted_mean_prob_on_noisy_label", report.correction.corrupted_mean_prob_on_noisy_label},
            {"uncorrupted_mean_prob_on_noisy_label",
             report.correction.uncorrupted_mean_prob_on_noisy_label},
            {"corrupted_mean_max_prob", report.correction.corrupted_mean_max_prob},
            {"uncorrupted_mean_max_prob", report.correction.uncorrupted_mean_max_prob},
        };
    }
    j["config"] = config_to_json(report.config);
    return j;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double m = mean_of(v);
    double sq = 0.0;
    for (double x : v) sq += (x - m) * (x - m);
    return std::sqrt(sq / static_cast<double>(v.size()));
}

} // namespace

std::string method_name(Method m) {
    switch (m) {
        case Method::Mlc: return "mlc";
        case Method::CleanOnly: return "clean_only";
        case Method::NoisyOnly: return "noisy_only";
        case Method::CleanPlusNoisy: return "clean_plus_noisy";
    }
    throw StateError("method_name: unreachable");
}

Method parse_method(const std::string& name) {
    if (name == "mlc") return Method::Mlc;
    if (name == "clean_only") return Method::CleanOnly;
    if (name == "noisy_only") return Method::NoisyOnly;
    if (name == "clean_plus_noisy") return Method::CleanPlusNoisy;
    throw ConfigError("unknown method '" + name +
                      "' (use mlc, clean_only, noisy_only or clean_plus_noisy)");
}

void ExperimentConfig::validate() const {
    if (run_id.empty()) throw ConfigError("config: run_id must not be empty");
    for (char ch : run_id) {
        const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                        (ch >= '0' && ch <= '9') || ch == '_' || ch == '-';
        if (!ok) {
            throw ConfigError("config: run_id may only use letters, digits, '_' and '-', got '" +
                              run_id + "'");
        }
    }
    if (data.source == "blobs") {
        data::BlobSpec spec{data.blobs.classes, data.blobs.dim,
                            std::vector<int>(static_cast<std::size_t>(std::max(data.blobs.classes, 1)),
                                             data.blobs.per_class),
                            data.blobs.spread, data.blobs.center_radius, 0};
        spec.validate();
    } else if (data.source == "csv") {
        if (data.csv.path.empty()) throw ConfigError("config: data.csv.path must be set for csv data");
        if (data.csv.label_column.empty()) throw ConfigError("config: data.csv.label_column must not be empty");
    } else {
        throw ConfigError("config: data.source must be \"blobs\" or \"csv\", got '" + data.source + "'");
    }
    if (data.clean_count < 2) {
        throw ConfigError("config: data.clean_count must be >= 2, got " +
                          std::to_string(data.clean_count));
    }
    if (!(data.test_fraction >= 0.0 && data.test_fraction < 1.0)) {
        throw ConfigError("config: data.test_fraction must lie in [0, 1), got " +
                          std::to_string(data.test_fraction));
    }
    if (!(data.rho >= 0.0 && data.rho <= 1.0)) {
        throw ConfigError("config: data.noise.rho must lie in [0, 1], got " + std::to_string(data.rho));
    }
    if (model.hidden_dims.empty()) throw ConfigError("config: model.hidden_dims must not be empty");
    for (int h : model.hidden_dims) {
        if (h < 1) throw ConfigError("config: model.hidden_dims entries must be >= 1");
    }
    if (model.label_embed_dim < 1) throw ConfigError("config: model.label_embed_dim must be >= 1");
    if (model.lcn_hidden_dim < 1) throw ConfigError("config: model.lcn_hidden_dim must be >= 1");
    train.validate();
}

std::string ExperimentConfig::resolved_output_dir() const {
    return output_dir.empty() ? "runs/" + run_id : output_dir;
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(origin + ": " + e.what());
    }
    expect_object(root, origin);
    reject_unknown_keys(root, origin, {"run_id", "method", "output_dir", "data", "model", "train"});

    ExperimentConfig cfg;
    read_string(root, "run_id", cfg.run_id, origin);
    std::string method = method_name(cfg.method);
    read_string(root, "method", method, origin);
    cfg.method = parse_method(method);
    read_string(root, "output_dir", cfg.output_dir, origin);
    if (root.contains("data")) parse_data(expect_object(root.at("data"), origin + ".data"), cfg.data, origin + ".data");
    if (root.contains("model")) parse_model(expect_object(root.at("model"), origin + ".model"), cfg.model, origin + ".model");
    if (root.contains("train")) parse_train(expect_object(root.at("train"), origin + ".train"), cfg.train, origin + ".train");
    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::string serialize_config(const ExperimentConfig& cfg) {
    return config_to_json(cfg).dump(2) + "\n";
}

data::DatasetBundle build_dataset(const DataConfig& dcfg) {
    Tensor x;
    std::vector<int> labels;
    int num_classes = 0;
    if (dcfg.source == "blobs") {
        data::BlobSpec spec{dcfg.blobs.classes, dcfg.blobs.dim,
                            std::vector<int>(static_cast<std::size_t>(dcfg.blobs.classes),
                                             dcfg.blobs.per_class),
                            dcfg.blobs.spread, dcfg.blobs.center_radius,
                            rng::mix(dcfg.seed, kBlobSeedTag)};
        data::Split s = data::gen_blobs(spec);
        x = std::move(s.x);
        labels = std::move(s.labels);
        num_classes = dcfg.blobs.classes;
    } else if (dcfg.source == "csv") {
        data::CsvData d = data::load_csv(dcfg.csv.path, {dcfg.csv.label_column, dcfg.csv.feature_columns});
        x = std::move(d.x);
        labels = std::move(d.labels);
        num_classes = static_cast<int>(d.label_names.size());
    } else {
        throw ConfigError("build_dataset: data.source must be \"blobs\" or \"csv\", got '" +
                          dcfg.source + "'");
    }
    data::BundleSpec spec{dcfg.clean_count, dcfg.test_fraction,
                          noise::NoiseSpec{dcfg.noise_kind, dcfg.rho, num_classes,
                                           rng::mix(dcfg.seed, kNoiseSeedTag)},
                          dcfg.seed, dcfg.standardize};
    return data::make_bundle(x, labels, spec);
}

ClassifierConfig classifier_config(const ExperimentConfig& cfg, const data::DatasetBundle& bundle) {
    return ClassifierConfig{bundle.feature_dim, cfg.model.hidden_dims, bundle.num_classes,
                            cfg.model.features_pre_activation};
}

LcnConfig lcn_config(const ExperimentConfig& cfg, const data::DatasetBundle& bundle) {
    ClassifierConfig ccfg = classifier_config(cfg, bundle);
    return LcnConfig{bundle.num_classes, cfg.model.label_embed_dim, ccfg.feature_dim(),
                     cfg.model.lcn_hidden_dim};
}

EvalResult evaluate(const ClassifierConfig& ccfg, const ParamVector& w, const data::Split& test,
                    int num_classes) {
    if (test.size() == 0) throw DataError("evaluate: test split is empty");
    EvalResult r;
    r.confusion.assign(static_cast<std::size_t>(num_classes),
                       std::vector<long long>(static_cast<std::size_t>(num_classes), 0));
    const int chunk = 4096;
    long long hits = 0;
    for (int start = 0; start < test.size(); start += chunk) {
        const int stop = std::min(test.size(), start + chunk);
        std::vector<int> rows(static_cast<std::size_t>(stop - start));
        std::iota(rows.begin(), rows.end(), start);
        data::Split part = data::take_rows(test, rows);
        diff::Graph g;
        auto fwd = classifier_forward(g, ccfg, w, part.x);
        const std::vector<int> pred = predict(g.value(fwd.logits));
        for (int i = 0; i < part.size(); ++i) {
            const int t = part.labels[static_cast<std::size_t>(i)];
            if (t < 0 || t >= num_classes) {
                throw IndexError("evaluate: label " + std::to_string(t) + " outside [0, " +
                                 std::to_string(num_classes) + ")");
            }
            const int p = pred[static_cast<std::size_t>(i)];
            ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
            if (t == p) ++hits;
        }
    }
    r.accuracy = static_cast<double>(hits) / test.size();
    r.per_class.resize(static_cast<std::size_t>(num_classes));
    for (int t = 0; t < num_classes; ++t) {
        long long row = 0;
        for (int p = 0; p < num_classes; ++p) row += r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
        r.per_class[static_cast<std::size_t>(t)] =
            row == 0 ? std::numeric_limits<double>::quiet_NaN()
                     : static_cast<double>(r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(t)]) /
                           static_cast<double>(row);
    }
    return r;
}

Tensor correction_heatmap(const ClassifierConfig& ccfg, const LcnConfig& lcfg, const ParamVector& w,
                          const ParamVector& alpha, const data::Split& noisy,
                          const std::vector<int>& hidden_true) {
    return heatmap_from(corrected_matrix(ccfg, lcfg, w, alpha, noisy), hidden_true, lcfg.num_classes);
}

CorrectionStats correction_stats(const ClassifierConfig& ccfg, const LcnConfig& lcfg,
                                 const ParamVector& w, const ParamVector& alpha,
                                 const data::Split& noisy, const std::vector<int>& hidden_true) {
    return stats_from(corrected_matrix(ccfg, lcfg, w, alpha, noisy), noisy.labels, hidden_true);
}

RunReport run_experiment(const ExperimentConfig& cfg, const data::DatasetBundle& bundle) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    RunReport report;
    report.config = cfg;

    const ClassifierConfig ccfg = classifier_config(cfg, bundle);
    const LcnConfig lcfg = lcn_config(cfg, bundle);
    const bilevel::TrainData view = bilevel::training_view(bundle);

    log::info("run " + cfg.run_id + ": method " + method_name(cfg.method) + ", seed " +
              std::to_string(cfg.train.seed) + ", clean " + std::to_string(bundle.clean.size()) +
              " noisy " + std::to_string(bundle.noisy.size()) + " test " +
              std::to_string(bundle.test.size()));

    if (cfg.method == Method::Mlc) {
        report.result = bilevel::train_mlc(view, ccfg, lcfg, cfg.train);
    } else {
        report.result = bilevel::train_baseline(baseline_of(cfg.method), view, ccfg, cfg.train);
    }
    report.failed = report.result.diverged;
    report.failure_message = report.result.divergence_message;

    if (!report.failed) {
        report.eval = evaluate(ccfg, report.result.w, view.test, bundle.num_classes);
        if (cfg.method == Method::Mlc && !cfg.train.freeze_lcn_identity) {
            const Tensor corrected =
                corrected_matrix(ccfg, lcfg, report.result.w, report.result.alpha, view.noisy);
            report.heatmap = heatmap_from(corrected, bundle.hidden_true_of_noisy, bundle.num_classes);
            report.correction = stats_from(corrected, view.noisy.labels, bundle.hidden_true_of_noisy);
            report.has_lcn = true;
        }
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

RunReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    return run_experiment(cfg, build_dataset(cfg.data));
}

void export_report(const RunReport& report, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());

    std::string history = "epoch,noisy_loss,clean_loss,test_acc\n";
    for (const auto& e : report.result.history.epochs) {
        history += std::to_string(e.epoch) + "," + fmt17(e.mean_loss_noisy) + "," +
                   fmt17(e.mean_loss_clean) + "," + fmt17(e.test_accuracy) + "\n";
    }
    write_file_atomic(dir + "/history.csv", history);

    if (report.has_lcn) {
        std::string heat;
        for (int i = 0; i < report.heatmap.rows(); ++i) {
            for (int j = 0; j < report.heatmap.cols(); ++j) {
                heat += (j ? "," : "") + fmt17(report.heatmap.at(i, j));
            }
            heat += "\n";
        }
        write_file_atomic(dir + "/heatmap.csv", heat);

        std::string stats = "group,count,mean_prob_on_noisy_label,mean_max_prob\n";
        stats += "corrupted," + std::to_string(report.correction.corrupted_count) + "," +
                 fmt17(report.correction.corrupted_mean_prob_on_noisy_label) + "," +
                 fmt17(report.correction.corrupted_mean_max_prob) + "\n";
        stats += "uncorrupted," + std::to_string(report.correction.uncorrupted_count) + "," +
                 fmt17(report.correction.uncorrupted_mean_prob_on_noisy_label) + "," +
                 fmt17(report.correction.uncorrupted_mean_max_prob) + "\n";
        write_file_atomic(dir + "/correction_stats.csv", stats);
    }

    write_file_atomic(dir + "/config.json", serialize_config(report.config));
    write_file_atomic(dir + "/summary.json", summary_json(report).dump(2) + "\n");

    if (!report.failed) {
        ParamsMeta meta{{"run_id", report.config.run_id},
                        {"method", method_name(report.config.method)},
                        {"train_seed", std::to_string(report.config.train.seed)}};
        const std::string tmp = dir + "/params.txt.tmp";
        save_params(tmp, report.result.w, meta);
        std::filesystem::rename(tmp, dir + "/params.txt", ec);
        if (ec) throw IoError("rename '" + tmp + "' failed: " + ec.message());
        if (report.has_lcn) {
            const std::string ltmp = dir + "/lcn_params.txt.tmp";
            save_params(ltmp, report.result.alpha, meta);
            std::filesystem::rename(ltmp, dir + "/lcn_params.txt", ec);
            if (ec) throw IoError("rename '" + ltmp + "' failed: " + ec.message());
        }
    }
}

RepeatsResult run_repeats(const ExperimentConfig& cfg, int repeats, const std::string& out_dir) {
    cfg.validate();
    if (repeats < 1) throw ConfigError("run_repeats: repeats must be >= 1, got " + std::to_string(repeats));

    const data::DatasetBundle bundle = build_dataset(cfg.data);
    RepeatsResult rr;
    json per_repeat = json::array();
    double wall_total = 0.0;
    for (int i = 0; i < repeats; ++i) {
        ExperimentConfig rc = cfg;
        rc.train.seed = cfg.train.seed + static_cast<std::uint64_t>(i);
        RunReport rep = run_experiment(rc, bundle);
        export_report(rep, out_dir + "/repeat_" + std::to_string(i));
        wall_total += rep.wall_seconds;
        if (rep.failed) {
            ++rr.failures;
            log::error("repeat " + std::to_string(i) + " failed: " + rep.failure_message);
        } else {
            rr.accuracies.push_back(rep.eval.accuracy);
        }
        per_repeat.push_back({{"repeat", i},
                              {"train_seed", rc.train.seed},
                              {"failed", rep.failed},
                              {"test_accuracy", rep.failed ? json() : json(rep.eval.accuracy)},
                              {"wall_seconds", rep.wall_seconds}});
        rr.reports.push_back(std::move(rep));
    }
    rr.mean_accuracy = mean_of(rr.accuracies);
    rr.std_accuracy = std_of(rr.accuracies);

    json j;
    j["run_id"] = cfg.run_id;
    j["method"] = method_name(cfg.method);
    j["repeats"] = repeats;
    j["failures"] = rr.failures;
    j["mean_test_accuracy"] = rr.mean_accuracy;
    j["std_test_accuracy"] = rr.std_accuracy;
    j["wall_seconds_total"] = wall_total;
    j["per_repeat"] = per_repeat;
    j["config"] = config_to_json(cfg);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory '" + out_dir + "': " + ec.message());
    write_file_atomic(out_dir + "/config.json", serialize_config(cfg));
    write_file_atomic(out_dir + "/summary.json", j.dump(2) + "\n");
    return rr;
}

std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const std::vector<double>& rhos,
                                 const std::vector<Method>& methods, int repeats) {
    base.validate();
    if (repeats < 1) throw ConfigError("run_sweep: repeats must be >= 1, got " + std::to_string(repeats));
    if (rhos.empty()) throw ConfigError("run_sweep: rho list is empty");
    if (methods.empty()) throw ConfigError("run_sweep: method list is empty");
    for (double rho : rhos) {
        if (!(rho >= 0.0 && rho <= 1.0)) {
            throw ConfigError("run_sweep: rho must lie in [0, 1], got " + std::to_string(rho));
        }
    }

    std::vector<SweepCell> cells;
    for (double rho : rhos) {
        ExperimentConfig at_rho = base;
        at_rho.data.rho = rho;
        const data::DatasetBundle bundle = build_dataset(at_rho.data);
        for (Method m : methods) {
            SweepCell cell;
            cell.method = m;
            cell.rho = rho;
            cell.repeats = repeats;
            std::vector<double> accs;
            for (int i = 0; i < repeats; ++i) {
                ExperimentConfig rc = at_rho;
                rc.method = m;
                rc.train.seed = base.train.seed + static_cast<std::uint64_t>(i);
                try {
                    RunReport rep = run_experiment(rc, bundle);
                    if (rep.failed) {
                        ++cell.failures;
                        log::error("sweep: " + method_name(m) + " rho=" + fmt17(rho) + " repeat " +
                                                std::to_string(i) + " failed: " + rep.failure_message);
                    } else {
                        accs.push_back(rep.eval.accuracy);
                    }
                } catch (const Error& e) {
                    ++cell.failures;
                    log::error("sweep: " + method_name(m) + " rho=" + fmt17(rho) + " repeat " +
                                            std::to_string(i) + " failed: " + e.what());
                }
            }
            cell.mean_accuracy = mean_of(accs);
            cell.std_accuracy = std_of(accs);
            cells.push_back(cell);
        }
    }
    return cells;
}

void export_sweep(const std::vector<SweepCell>& cells, const std::string& path) {
    const std::filesystem::path parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(parent, ec);
        if (ec) throw IoError("cannot create directory '" + parent.string() + "': " + ec.message());
    }
    std::string out = "method,rho,repeats,mean_test_accuracy,std_test_accuracy,failures\n";
    for (const SweepCell& c : cells) {
        out += method_name(c.method) + "," + fmt17(c.rho) + "," + std::to_string(c.repeats) + "," +
               fmt17(c.mean_accuracy) + "," + fmt17(c.std_accuracy) + "," +
               std::to_string(c.failures) + "\n";
    }
    write_file_atomic(path, out);
}

} // namespace mlc::harness
