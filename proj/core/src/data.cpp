#include "mlc/data.hpp"

#include "mlc/error.hpp"
#include "mlc/log.hpp"
#include "mlc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mlc::data {

namespace {

void check_features(const Tensor& x, const std::vector<int>& labels, const char* op) {
    if (x.rank() != 2) throw DataError(std::string(op) + ": features must be rank-2, got " + x.shape_str());
    if (x.rows() != static_cast<int>(labels.size())) {
        throw DataError(std::string(op) + ": " + std::to_string(x.rows()) + " feature rows vs " +
                        std::to_string(labels.size()) + " labels");
    }
    if (!x.all_finite()) throw DataError(std::string(op) + ": features contain non-finite values");
}

void shuffle_indices(std::vector<int>& idx, rng::Engine& e) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[static_cast<std::size_t>(e.bounded(i))]);
    }
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

Split take_rows(const Split& s, const std::vector<int>& rows) {
    const int dim = s.x.cols();
    Split out;
    out.x = Tensor({static_cast<int>(rows.size()), dim});
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int r = rows[i];
        if (r < 0 || r >= s.size()) {
            throw IndexError("take_rows: row " + std::to_string(r) + " outside split of size " +
                             std::to_string(s.size()));
        }
        for (int j = 0; j < dim; ++j) out.x.at(static_cast<int>(i), j) = s.x.at(r, j);
        out.labels.push_back(s.labels[static_cast<std::size_t>(r)]);
    }
    return out;
}

Split concat_splits(const Split& a, const Split& b) {
    if (a.x.cols() != b.x.cols()) {
        throw DataError("concat_splits: feature dims disagree, " + a.x.shape_str() + " vs " + b.x.shape_str());
    }
    Split out;
    out.x = Tensor({a.size() + b.size(), a.x.cols()});
    for (std::size_t i = 0; i < a.x.size(); ++i) out.x.at(i) = a.x.at(i);
    for (std::size_t i = 0; i < b.x.size(); ++i) out.x.at(a.x.size() + i) = b.x.at(i);
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
}

void BlobSpec::validate() const {
    if (classes < 2) throw ConfigError("blobs: classes must be >= 2, got " + std::to_string(classes));
    if (dim < 1) throw ConfigError("blobs: dim must be >= 1, got " + std::to_string(dim));
    if (!(spread > 0.0)) throw ConfigError("blobs: spread must be > 0, got " + std::to_string(spread));
    if (static_cast<int>(per_class.size()) != classes) {
        throw ConfigError("blobs: per_class has " + std::to_string(per_class.size()) + " entries for " +
                          std::to_string(classes) + " classes");
    }
    for (int n : per_class) {
        if (n < 1) throw ConfigError("blobs: per-class count must be >= 1, got " + std::to_string(n));
    }
}

Split gen_blobs(const BlobSpec& spec) {
    spec.validate();
    const double radius = spec.center_radius > 0.0 ? spec.center_radius : 3.0 * spec.spread;

    std::vector<std::vector<double>> centers(static_cast<std::size_t>(spec.classes),
                                             std::vector<double>(static_cast<std::size_t>(spec.dim), 0.0));
    for (int c = 0; c < spec.classes; ++c) {
        auto& center = centers[static_cast<std::size_t>(c)];
        if (spec.dim == 1) {
            center[0] = spec.classes == 1 ? 0.0
                                          : radius * (2.0 * c / (spec.classes - 1) - 1.0);
        } else {
            const double angle = 2.0 * 3.14159265358979323846 * c / spec.classes;
            center[0] = radius * std::cos(angle);
            center[1] = radius * std::sin(angle);
        }
    }

    int total = 0;
    for (int n : spec.per_class) total += n;
    Split out;
    out.x = Tensor({total, spec.dim});
    out.labels.reserve(static_cast<std::size_t>(total));
    rng::Engine e(spec.seed);
    int row = 0;
    for (int c = 0; c < spec.classes; ++c) {
        const auto& center = centers[static_cast<std::size_t>(c)];
        for (int i = 0; i < spec.per_class[static_cast<std::size_t>(c)]; ++i) {
            for (int j = 0; j < spec.dim; ++j) {
                out.x.at(row, j) = center[static_cast<std::size_t>(j)] + e.normal(0.0, spec.spread);
            }
            out.labels.push_back(c);
            ++row;
        }
    }
    return out;
}

double nearest_centroid_accuracy(const Tensor& train_x, const std::vector<int>& train_labels,
                                 const Split& test, int num_classes) {
    check_features(train_x, train_labels, "nearest_centroid");
    check_features(test.x, test.labels, "nearest_centroid");
    if (test.size() == 0) throw DataError("nearest_centroid: empty test split");
    const int dim = train_x.cols();

    std::vector<std::vector<double>> centroids(static_cast<std::size_t>(num_classes),
                                               std::vector<double>(static_cast<std::size_t>(dim), 0.0));
    std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
    for (int i = 0; i < train_x.rows(); ++i) {
        const int c = train_labels[static_cast<std::size_t>(i)];
        if (c < 0 || c >= num_classes) {
            throw IndexError("nearest_centroid: label " + std::to_string(c) + " outside [0, " +
                             std::to_string(num_classes) + ")");
        }
        for (int j = 0; j < dim; ++j) centroids[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] += train_x.at(i, j);
        ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < num_classes; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
            throw DataError("nearest_centroid: class " + std::to_string(c) + " has no training examples");
        }
        for (int j = 0; j < dim; ++j) centroids[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] /= counts[static_cast<std::size_t>(c)];
    }

    int hits = 0;
    for (int i = 0; i < test.size(); ++i) {
        int best = 0;
        double best_d = 0.0;
        for (int c = 0; c < num_classes; ++c) {
            double d = 0.0;
            for (int j = 0; j < dim; ++j) {
                const double diff = test.x.at(i, j) - centroids[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
                d += diff * diff;
            }
            if (c == 0 || d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (best == test.labels[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / test.size();
}

CsvData load_csv(const std::string& path, const CsvSchema& schema) {
    if (schema.label_column.empty()) throw ConfigError("load_csv: schema.label_column is empty");
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ":1: missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_line(line);

    int label_idx = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == schema.label_column) label_idx = static_cast<int>(i);
    }
    if (label_idx < 0) {
        throw ParseError(path + ":1: label column '" + schema.label_column + "' not in header");
    }

    std::vector<int> feature_idx;
    CsvData out;
    if (schema.feature_columns.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (static_cast<int>(i) != label_idx) {
                feature_idx.push_back(static_cast<int>(i));
                out.feature_names.push_back(header[i]);
            }
        }
    } else {
        for (const auto& name : schema.feature_columns) {
            int idx = -1;
            for (std::size_t i = 0; i < header.size(); ++i) {
                if (header[i] == name) idx = static_cast<int>(i);
            }
            if (idx < 0) throw ParseError(path + ":1: feature column '" + name + "' not in header");
            feature_idx.push_back(idx);
            out.feature_names.push_back(name);
        }
    }
    if (feature_idx.empty()) throw ParseError(path + ":1: no feature columns selected");

    std::vector<double> values;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size()) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()));
        }
        for (int idx : feature_idx) {
            const std::string& cell = cells[static_cast<std::size_t>(idx)];
            std::size_t consumed = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &consumed);
            } catch (const std::exception&) {
                consumed = 0;
            }
            if (consumed != cell.size() || cell.empty()) {
                throw ParseError(path + ":" + std::to_string(lineno) + ": bad numeric value '" + cell +
                                 "' in column '" + header[static_cast<std::size_t>(idx)] + "'");
            }
            values.push_back(v);
        }
        const std::string& label = cells[static_cast<std::size_t>(label_idx)];
        int id = -1;
        for (std::size_t i = 0; i < out.label_names.size(); ++i) {
            if (out.label_names[i] == label) id = static_cast<int>(i);
        }
        if (id < 0) {
            id = static_cast<int>(out.label_names.size());
            out.label_names.push_back(label);
        }
        out.labels.push_back(id);
    }
    if (out.labels.empty()) throw ParseError(path + ":1: no data rows after the header");
    out.x = Tensor({static_cast<int>(out.labels.size()), static_cast<int>(feature_idx.size())},
                   std::move(values));
    return out;
}

void save_csv(const std::string& path, const Tensor& x, const std::vector<int>& labels,
              const std::vector<std::string>& feature_names, const std::string& label_column) {
    check_features(x, labels, "save_csv");
    if (!feature_names.empty() && static_cast<int>(feature_names.size()) != x.cols()) {
        throw ConfigError("save_csv: " + std::to_string(feature_names.size()) + " feature names for " +
                          std::to_string(x.cols()) + " columns");
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (int j = 0; j < x.cols(); ++j) {
        if (j) out << ',';
        if (feature_names.empty()) {
            out << 'f' << j;
        } else {
            out << feature_names[static_cast<std::size_t>(j)];
        }
    }
    out << ',' << label_column << '\n';
    for (int i = 0; i < x.rows(); ++i) {
        for (int j = 0; j < x.cols(); ++j) {
            if (j) out << ',';
            out << format_value(x.at(i, j));
        }
        out << ',' << labels[static_cast<std::size_t>(i)] << '\n';
    }
    out.flush();
    if (!out) throw IoError("write to '" + path + "' failed");
}

DatasetBundle make_bundle(const Tensor& x, const std::vector<int>& labels, const BundleSpec& spec) {
    check_features(x, labels, "make_bundle");
    const int n = x.rows();
    if (n < 3) throw DataError("make_bundle: need at least 3 rows, got " + std::to_string(n));
    if (spec.test_fraction < 0.0 || spec.test_fraction >= 1.0) {
        throw ConfigError("make_bundle: test_fraction must lie in [0, 1), got " + std::to_string(spec.test_fraction));
    }

    int num_classes = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) throw IndexError("make_bundle: negative label at row " + std::to_string(i));
        num_classes = std::max(num_classes, labels[i] + 1);
    }
    if (num_classes < 2) throw DataError("make_bundle: need at least 2 classes");
    if (spec.noise.num_classes != num_classes) {
        throw ConfigError("make_bundle: noise spec has " + std::to_string(spec.noise.num_classes) +
                          " classes, data has " + std::to_string(num_classes));
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    rng::Engine shuffle_engine(rng::mix(spec.seed, 1));
    shuffle_indices(order, shuffle_engine);

    const int test_count = static_cast<int>(std::llround(spec.test_fraction * n));
    DatasetBundle b;
    b.num_classes = num_classes;
    b.feature_dim = x.cols();
    b.test_rows.assign(order.begin(), order.begin() + test_count);
    std::vector<int> pool(order.begin() + test_count, order.end());

    if (spec.clean_count < num_classes) {
        throw DataError("make_bundle: clean_count " + std::to_string(spec.clean_count) +
                        " cannot cover " + std::to_string(num_classes) +
                        " classes; increase clean_count to at least the class count");
    }
    if (spec.clean_count >= static_cast<int>(pool.size())) {
        throw DataError("make_bundle: clean_count " + std::to_string(spec.clean_count) +
                        " consumes the whole training pool of " + std::to_string(pool.size()));
    }

    // Per-class quotas: base for everyone, the remainder goes to the lowest ids.
    std::vector<int> quota(static_cast<std::size_t>(num_classes), spec.clean_count / num_classes);
    for (int c = 0; c < spec.clean_count % num_classes; ++c) ++quota[static_cast<std::size_t>(c)];

    std::vector<int> taken(static_cast<std::size_t>(num_classes), 0);
    std::vector<char> is_clean(pool.size(), 0);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const int c = labels[static_cast<std::size_t>(pool[i])];
        if (taken[static_cast<std::size_t>(c)] < quota[static_cast<std::size_t>(c)]) {
            is_clean[i] = 1;
            ++taken[static_cast<std::size_t>(c)];
        }
    }
    for (int c = 0; c < num_classes; ++c) {
        if (taken[static_cast<std::size_t>(c)] < quota[static_cast<std::size_t>(c)]) {
            throw DataError("make_bundle: class " + std::to_string(c) + " has only " +
                            std::to_string(taken[static_cast<std::size_t>(c)]) +
                            " pool examples for a clean quota of " +
                            std::to_string(quota[static_cast<std::size_t>(c)]) +
                            "; lower clean_count or provide more data");
        }
    }
    for (std::size_t i = 0; i < pool.size(); ++i) {
        (is_clean[i] ? b.clean_rows : b.noisy_rows).push_back(pool[i]);
    }

    Split all{x, labels};
    b.clean = take_rows(all, b.clean_rows);
    b.test = take_rows(all, b.test_rows);
    Split noisy_true = take_rows(all, b.noisy_rows);
    b.hidden_true_of_noisy = noisy_true.labels;
    b.noisy.x = std::move(noisy_true.x);
    b.noisy.labels = noise::inject(b.hidden_true_of_noisy, spec.noise);

    if (b.clean.size() > b.noisy.size()) {
        log::warn("make_bundle: clean split (" + std::to_string(b.clean.size()) +
                  ") is larger than noisy split (" + std::to_string(b.noisy.size()) + ")");
    }

    if (spec.standardize) {
        const int dim = b.feature_dim;
        std::vector<double> mean(static_cast<std::size_t>(dim), 0.0);
        std::vector<double> var(static_cast<std::size_t>(dim), 0.0);
        const double train_n = b.clean.size() + b.noisy.size();
        for (const Split* s : {&b.clean, &b.noisy}) {
            for (int i = 0; i < s->size(); ++i) {
                for (int j = 0; j < dim; ++j) mean[static_cast<std::size_t>(j)] += s->x.at(i, j);
            }
        }
        for (int j = 0; j < dim; ++j) mean[static_cast<std::size_t>(j)] /= train_n;
        for (const Split* s : {&b.clean, &b.noisy}) {
            for (int i = 0; i < s->size(); ++i) {
                for (int j = 0; j < dim; ++j) {
                    const double d = s->x.at(i, j) - mean[static_cast<std::size_t>(j)];
                    var[static_cast<std::size_t>(j)] += d * d;
                }
            }
        }
        for (int j = 0; j < dim; ++j) var[static_cast<std::size_t>(j)] /= train_n;
        for (Split* s : {&b.clean, &b.noisy, &b.test}) {
            for (int i = 0; i < s->size(); ++i) {
                for (int j = 0; j < dim; ++j) {
                    const double sd = std::sqrt(var[static_cast<std::size_t>(j)]);
                    double v = s->x.at(i, j) - mean[static_cast<std::size_t>(j)];
                    if (sd > 1e-12) v /= sd;
                    s->x.at(i, j) = v;
                }
            }
        }
    }
    return b;
}

std::vector<std::vector<int>> epoch_batches(int n, int batch_size, std::uint64_t seed, int epoch) {
    if (n < 1) throw ConfigError("epoch_batches: split is empty");
    if (batch_size < 1) throw ConfigError("epoch_batches: batch_size must be >= 1, got " + std::to_string(batch_size));
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    rng::Engine e(rng::mix(seed, static_cast<std::uint64_t>(epoch)));
    shuffle_indices(order, e);

    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += batch_size) {
        const int stop = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + stop);
    }
    return batches;
}

BatchCycler::BatchCycler(int n, int batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), seed_(seed) {
    batches_ = epoch_batches(n_, batch_size_, seed_, 0);
}

const std::vector<int>& BatchCycler::next() {
    if (cursor_ == batches_.size()) {
        cursor_ = 0;
        batches_ = epoch_batches(n_, batch_size_, seed_, epoch_);
    }
    current_ = batches_[cursor_++];
    if (cursor_ == batches_.size()) ++epoch_;
    return current_;
}

int BatchCycler::batches_per_epoch() const { return static_cast<int>(batches_.size()); }

} // namespace mlc::data
