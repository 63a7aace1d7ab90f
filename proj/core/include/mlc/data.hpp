#pragma once

#include "mlc/noise.hpp"
#include "mlc/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mlc::data {

struct Split {
    Tensor x;                 // [n, feature_dim]
    std::vector<int> labels;  // length n

    int size() const { return static_cast<int>(labels.size()); }
};

Split take_rows(const Split& s, const std::vector<int>& rows);
Split concat_splits(const Split& a, const Split& b);

// Gaussian class clusters with centers laid out deterministically: on a circle
// in the first two dimensions (evenly spaced on a line when dim == 1).
struct BlobSpec {
    int classes = 0;
    int dim = 2;
    std::vector<int> per_class;
    double spread = 1.0;
    double center_radius = -1.0;  // <= 0 selects the default of 3 * spread
    std::uint64_t seed = 0;

    void validate() const;
};

Split gen_blobs(const BlobSpec& spec);

// Class centroids from (train_x, train_labels), then nearest-centroid accuracy
// on the test split. Serves as the Bayes-proxy reference for blob datasets.
double nearest_centroid_accuracy(const Tensor& train_x, const std::vector<int>& train_labels,
                                 const Split& test, int num_classes);

// CSV: first row header, comma-separated, '.' decimal, no quoting.
struct CsvSchema {
    std::string label_column;
    std::vector<std::string> feature_columns;  // empty selects all non-label columns
};

struct CsvData {
    Tensor x;
    std::vector<int> labels;                // dense ids in first-appearance order
    std::vector<std::string> label_names;   // dense id -> original label string
    std::vector<std::string> feature_names;
};

CsvData load_csv(const std::string& path, const CsvSchema& schema);
void save_csv(const std::string& path, const Tensor& x, const std::vector<int>& labels,
              const std::vector<std::string>& feature_names = {}, const std::string& label_column = "label");

// The experiment's data universe. `hidden_true_of_noisy` exists for evaluation
// and analysis only; training code receives splits without it.
struct DatasetBundle {
    Split clean;                          // true labels
    Split noisy;                          // corrupted labels
    Split test;                           // true labels
    std::vector<int> hidden_true_of_noisy;
    std::vector<int> clean_rows;          // provenance: indices into the source rows
    std::vector<int> noisy_rows;
    std::vector<int> test_rows;
    int num_classes = 0;
    int feature_dim = 0;
};

struct BundleSpec {
    int clean_count = 0;
    double test_fraction = 0.2;
    noise::NoiseSpec noise;
    std::uint64_t seed = 0;
    bool standardize = true;
};

// Shuffles, carves out the test split, stratifies the clean split (per-class
// counts differ by at most one), corrupts the remainder, and standardizes
// features using the training portion (clean + noisy) only.
DatasetBundle make_bundle(const Tensor& x, const std::vector<int>& labels, const BundleSpec& spec);

// One epoch of batches: indices 0..n-1 shuffled by (seed, epoch), cut into
// batch_size chunks, short final batch included.
std::vector<std::vector<int>> epoch_batches(int n, int batch_size, std::uint64_t seed, int epoch);

// Streams epoch_batches endlessly across epochs.
class BatchCycler {
public:
    BatchCycler(int n, int batch_size, std::uint64_t seed);

    const std::vector<int>& next();
    int epochs_completed() const { return epoch_; }
    int batches_per_epoch() const;

private:
    int n_;
    int batch_size_;
    std::uint64_t seed_;
    int epoch_ = 0;
    std::size_t cursor_ = 0;
    std::vector<std::vector<int>> batches_;
    std::vector<int> current_;
};

} // namespace mlc::data
