#pragma once

#include "mlc/bilevel.hpp"
#include "mlc/data.hpp"
#include "mlc/models.hpp"
#include "mlc/noise.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mlc::harness {

enum class Method { Mlc, CleanOnly, NoisyOnly, CleanPlusNoisy };

std::string method_name(Method m);
Method parse_method(const std::string& name);

struct BlobsConfig {
    int classes = 4;
    int dim = 2;
    int per_class = 3250;
    double spread = 1.0;
    double center_radius = -1.0;  // <= 0 selects 3 * spread
};

struct CsvConfig {
    std::string path;
    std::string label_column = "label";
    std::vector<std::string> feature_columns;  // empty selects all non-label columns
};

// One seed drives everything data-side (generation, shuffling, corruption) so
// that repeats, which vary only train.seed, share the dataset bit for bit.
struct DataConfig {
    std::string source = "blobs";  // "blobs" | "csv"
    BlobsConfig blobs;
    CsvConfig csv;
    int clean_count = 400;
    double test_fraction = 0.2;
    bool standardize = true;
    noise::Kind noise_kind = noise::Kind::Flip;
    double rho = 0.6;
    std::uint64_t seed = 1000;
};

struct ModelConfig {
    std::vector<int> hidden_dims{16, 16};
    bool features_pre_activation = false;
    int label_embed_dim = 16;
    int lcn_hidden_dim = 32;
};

struct ExperimentConfig {
    std::string run_id = "run";
    Method method = Method::Mlc;
    std::string output_dir;  // empty selects runs/<run_id>
    DataConfig data;
    ModelConfig model;
    bilevel::TrainConfig train;

    void validate() const;
    std::string resolved_output_dir() const;
};

// Strict JSON: unknown keys are rejected, absent keys take the defaults above.
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);
ExperimentConfig parse_config_file(const std::string& path);
// Normalized form with every field spelled out; parses back to an equal config.
std::string serialize_config(const ExperimentConfig& cfg);

data::DatasetBundle build_dataset(const DataConfig& dcfg);

ClassifierConfig classifier_config(const ExperimentConfig& cfg, const data::DatasetBundle& bundle);
LcnConfig lcn_config(const ExperimentConfig& cfg, const data::DatasetBundle& bundle);

struct EvalResult {
    double accuracy = 0.0;
    std::vector<double> per_class;                 // accuracy per true class
    std::vector<std::vector<long long>> confusion; // [true][predicted]
};

EvalResult evaluate(const ClassifierConfig& ccfg, const ParamVector& w, const data::Split& test,
                    int num_classes);

// Corrected-label distributions of the trained LCN over the noisy split,
// averaged per hidden true class. Rows are valid distributions.
Tensor correction_heatmap(const ClassifierConfig& ccfg, const LcnConfig& lcfg, const ParamVector& w,
                          const ParamVector& alpha, const data::Split& noisy,
                          const std::vector<int>& hidden_true);

// Mean LCN mass on the given noisy label and mean max mass, split by whether
// the example's label actually got corrupted.
struct CorrectionStats {
    long long corrupted_count = 0;
    long long uncorrupted_count = 0;
    double corrupted_mean_prob_on_noisy_label = 0.0;
    double uncorrupted_mean_prob_on_noisy_label = 0.0;
    double corrupted_mean_max_prob = 0.0;
    double uncorrupted_mean_max_prob = 0.0;
};

CorrectionStats correction_stats(const ClassifierConfig& ccfg, const LcnConfig& lcfg,
                                 const ParamVector& w, const ParamVector& alpha,
                                 const data::Split& noisy, const std::vector<int>& hidden_true);

struct RunReport {
    ExperimentConfig config;  // effective config, repeat seed included
    bilevel::TrainResult result;
    EvalResult eval;
    bool has_lcn = false;     // heatmap/stats filled only for successful MLC runs
    Tensor heatmap;
    CorrectionStats correction;
    double wall_seconds = 0.0;
    bool failed = false;
    std::string failure_message;
};

RunReport run_experiment(const ExperimentConfig& cfg, const data::DatasetBundle& bundle);
RunReport run_experiment(const ExperimentConfig& cfg);

// history.csv, config.json, summary.json, params.txt, and for MLC runs
// heatmap.csv and correction_stats.csv; every file written via temp + rename.
void export_report(const RunReport& report, const std::string& dir);

struct RepeatsResult {
    std::vector<RunReport> reports;
    std::vector<double> accuracies;  // successful repeats only
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;       // population deviation over successes
    int failures = 0;
};

// Repeat i trains with seed train.seed + i on the shared dataset; exports each
// repeat under <out_dir>/repeat_<i> plus an aggregate <out_dir>/summary.json.
RepeatsResult run_repeats(const ExperimentConfig& cfg, int repeats, const std::string& out_dir);

struct SweepCell {
    Method method = Method::Mlc;
    double rho = 0.0;
    int repeats = 0;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    int failures = 0;
};

// One cell per (method, rho), each averaged over repeats; failed repeats are
// counted and skipped, never fatal.
std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const std::vector<double>& rhos,
                                 const std::vector<Method>& methods, int repeats);

void export_sweep(const std::vector<SweepCell>& cells, const std::string& path);

} // namespace mlc::harness
