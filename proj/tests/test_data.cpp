#include <doctest.h>

#include "mlc/data.hpp"
#include "mlc/error.hpp"
#include "mlc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

using namespace mlc;
using data::BlobSpec;
using data::BundleSpec;
using data::Split;

TEST_CASE("blob generation honors counts, shapes, and the seed") {
    BlobSpec spec{3, 4, {10, 20, 30}, 0.5, -1.0, 99};
    Split s = data::gen_blobs(spec);
    CHECK(s.size() == 60);
    CHECK(s.x.shape() == std::vector<int>{60, 4});

    std::map<int, int> counts;
    for (int l : s.labels) ++counts[l];
    CHECK(counts[0] == 10);
    CHECK(counts[1] == 20);
    CHECK(counts[2] == 30);

    Split again = data::gen_blobs(spec);
    CHECK(s.x.values() == again.x.values());
    CHECK(s.labels == again.labels);

    BlobSpec other = spec;
    other.seed = 100;
    CHECK(data::gen_blobs(other).x.values() != s.x.values());
}

TEST_CASE("blob classes collapse onto their centers as spread shrinks") {
    BlobSpec spec{4, 2, {50, 50, 50, 50}, 1e-9, 3.0, 7};
    Split s = data::gen_blobs(spec);
    // Centers sit on a circle of the given radius in the first two dims.
    for (int i = 0; i < s.size(); ++i) {
        const int c = s.labels[static_cast<std::size_t>(i)];
        const double angle = 2.0 * M_PI * c / 4.0;
        CHECK(s.x.at(i, 0) == doctest::Approx(3.0 * std::cos(angle)).epsilon(1e-6));
        CHECK(s.x.at(i, 1) == doctest::Approx(3.0 * std::sin(angle)).epsilon(1e-6));
    }
    // Tiny spread makes nearest-centroid perfect.
    CHECK(data::nearest_centroid_accuracy(s.x, s.labels, s, 4) == 1.0);
}

TEST_CASE("nearest-centroid accuracy on the experiment geometry sits near 0.9") {
    BlobSpec spec{4, 2, std::vector<int>(4, 1300), 1.0, 2.4, 4242};
    Split s = data::gen_blobs(spec);

    std::vector<int> train_rows, test_rows;
    for (int i = 0; i < s.size(); ++i) (i % 5 == 0 ? test_rows : train_rows).push_back(i);
    Split train = data::take_rows(s, train_rows);
    Split test = data::take_rows(s, test_rows);

    const double acc = data::nearest_centroid_accuracy(train.x, train.labels, test, 4);
    INFO("nearest-centroid accuracy ", acc);
    CHECK(acc > 0.87);
    CHECK(acc < 0.94);
}

TEST_CASE("take_rows and concat_splits") {
    BlobSpec spec{2, 3, {4, 4}, 1.0, -1.0, 1};
    Split s = data::gen_blobs(spec);
    Split sub = data::take_rows(s, {7, 0, 3});
    CHECK(sub.size() == 3);
    CHECK(sub.labels[0] == s.labels[7]);
    for (int j = 0; j < 3; ++j) CHECK(sub.x.at(1, j) == s.x.at(0, j));
    CHECK_THROWS_AS(data::take_rows(s, {8}), IndexError);

    Split joined = data::concat_splits(sub, data::take_rows(s, {1}));
    CHECK(joined.size() == 4);
    CHECK(joined.labels[3] == s.labels[1]);
}

TEST_CASE("csv loading of the committed fixture") {
    const std::string path = std::string(MLC_TEST_FIXTURES) + "/blobs150.csv";
    data::CsvData d = data::load_csv(path, {"shape", {}});
    CHECK(d.x.shape() == std::vector<int>{150, 2});
    CHECK(d.feature_names == std::vector<std::string>{"x0", "x1"});
    // Dense ids follow first appearance: ring, core, halo.
    CHECK(d.label_names == std::vector<std::string>{"ring", "core", "halo"});
    CHECK(d.labels[0] == 0);
    CHECK(d.labels[1] == 1);
    CHECK(d.labels[2] == 2);
    std::map<int, int> counts;
    for (int l : d.labels) ++counts[l];
    for (int c = 0; c < 3; ++c) CHECK(counts[c] == 50);
    CHECK(d.x.at(0, 0) == doctest::Approx(2.619976).epsilon(1e-12));

    SUBCASE("explicit feature subset keeps the requested order") {
        data::CsvData one = data::load_csv(path, {"shape", {"x1"}});
        CHECK(one.x.shape() == std::vector<int>{150, 1});
        CHECK(one.x.at(0, 0) == doctest::Approx(0.774616).epsilon(1e-12));
    }
}

TEST_CASE("csv round-trips through save and load") {
    BlobSpec spec{3, 2, {5, 5, 5}, 1.2, -1.0, 17};
    Split s = data::gen_blobs(spec);
    const std::string path = "csv_roundtrip_tmp.csv";
    data::save_csv(path, s.x, s.labels);

    data::CsvData d = data::load_csv(path, {"label", {}});
    CHECK(d.x.same_shape(s.x));
    CHECK(d.x.values() == s.x.values());
    for (int i = 0; i < s.size(); ++i) {
        const std::size_t u = static_cast<std::size_t>(i);
        CHECK(d.label_names[static_cast<std::size_t>(d.labels[u])] ==
              std::to_string(s.labels[u]));
    }
    std::remove(path.c_str());
}

TEST_CASE("csv parse errors carry the file location") {
    const std::string path = "csv_bad_tmp.csv";
    auto write_file = [&](const std::string& body) {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fwrite(body.data(), 1, body.size(), f);
        std::fclose(f);
    };

    write_file("a,b,label\n1,2,x\n3,oops,y\n");
    try {
        data::load_csv(path, {"label", {}});
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find(path + ":3") != std::string::npos);
    }

    write_file("a,b,label\n1,2\n");
    CHECK_THROWS_AS(data::load_csv(path, {"label", {}}), ParseError);

    write_file("a,b,label\n");
    CHECK_THROWS_AS(data::load_csv(path, {"label", {}}), ParseError);

    write_file("a,b\n1,2\n");
    CHECK_THROWS_AS(data::load_csv(path, {"label", {}}), ParseError);

    CHECK_THROWS_AS(data::load_csv("no_such_file.csv", {"label", {}}), IoError);
    std::remove(path.c_str());
}

TEST_CASE("make_bundle partitions the pool exactly") {
    BlobSpec bspec{3, 2, {40, 40, 40}, 1.0, -1.0, 23};
    Split s = data::gen_blobs(bspec);
    BundleSpec spec{30, 0.25, {noise::Kind::Flip, 0.5, 3, 77}, 5, true};
    data::DatasetBundle b = data::make_bundle(s.x, s.labels, spec);

    CHECK(b.num_classes == 3);
    CHECK(b.feature_dim == 2);
    CHECK(b.test.size() == 30);   // llround(0.25 * 120)
    CHECK(b.clean.size() == 30);
    CHECK(b.noisy.size() == 60);
    CHECK(static_cast<int>(b.hidden_true_of_noisy.size()) == 60);

    // The three row sets cover 0..119 without overlap.
    std::set<int> seen;
    for (const auto* rows : {&b.test_rows, &b.clean_rows, &b.noisy_rows}) {
        for (int r : *rows) {
            CHECK(seen.insert(r).second);
            CHECK(r >= 0);
            CHECK(r < 120);
        }
    }
    CHECK(seen.size() == 120);

    // Stratified clean split: per-class counts differ by at most one.
    std::map<int, int> counts;
    for (int l : b.clean.labels) ++counts[l];
    int lo = 1 << 30, hi = 0;
    for (auto& [c, n] : counts) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
    }
    CHECK(static_cast<int>(counts.size()) == 3);
    CHECK(hi - lo <= 1);

    // Clean and test labels are the source labels of their rows.
    for (int i = 0; i < b.clean.size(); ++i) {
        CHECK(b.clean.labels[static_cast<std::size_t>(i)] ==
              s.labels[static_cast<std::size_t>(b.clean_rows[static_cast<std::size_t>(i)])]);
    }

    // Noisy labels differ from hidden truth for some rows at rho = 0.5...
    int changed = 0;
    for (int i = 0; i < b.noisy.size(); ++i) {
        const std::size_t u = static_cast<std::size_t>(i);
        CHECK(b.hidden_true_of_noisy[u] ==
              s.labels[static_cast<std::size_t>(b.noisy_rows[u])]);
        if (b.noisy.labels[u] != b.hidden_true_of_noisy[u]) ++changed;
    }
    CHECK(changed > 15);
    CHECK(changed < 45);

    SUBCASE("same spec reproduces the bundle exactly") {
        data::DatasetBundle b2 = data::make_bundle(s.x, s.labels, spec);
        CHECK(b2.clean_rows == b.clean_rows);
        CHECK(b2.noisy.labels == b.noisy.labels);
        CHECK(b2.noisy.x.values() == b.noisy.x.values());
    }
}

TEST_CASE("make_bundle at rho = 0 keeps noisy labels equal to the hidden truth") {
    BlobSpec bspec{2, 2, {30, 30}, 1.0, -1.0, 29};
    Split s = data::gen_blobs(bspec);
    BundleSpec spec{10, 0.2, {noise::Kind::Unif, 0.0, 2, 1}, 3, true};
    data::DatasetBundle b = data::make_bundle(s.x, s.labels, spec);
    CHECK(b.noisy.labels == b.hidden_true_of_noisy);
}

TEST_CASE("make_bundle standardizes features on the training portion only") {
    BlobSpec bspec{2, 3, {60, 60}, 2.0, -1.0, 31};
    Split s = data::gen_blobs(bspec);
    BundleSpec spec{20, 0.25, {noise::Kind::Unif, 0.3, 2, 9}, 7, true};
    data::DatasetBundle b = data::make_bundle(s.x, s.labels, spec);

    const int n_train = b.clean.size() + b.noisy.size();
    for (int j = 0; j < 3; ++j) {
        double sum = 0.0, sq = 0.0;
        for (int i = 0; i < b.clean.size(); ++i) sum += b.clean.x.at(i, j);
        for (int i = 0; i < b.noisy.size(); ++i) sum += b.noisy.x.at(i, j);
        const double mean = sum / n_train;
        for (int i = 0; i < b.clean.size(); ++i) sq += std::pow(b.clean.x.at(i, j) - mean, 2);
        for (int i = 0; i < b.noisy.size(); ++i) sq += std::pow(b.noisy.x.at(i, j) - mean, 2);
        CHECK(std::abs(mean) < 1e-12);
        CHECK(std::sqrt(sq / n_train) == doctest::Approx(1.0).epsilon(1e-9));
    }

    SUBCASE("disabled standardization leaves the source values in place") {
        BundleSpec raw = spec;
        raw.standardize = false;
        data::DatasetBundle br = data::make_bundle(s.x, s.labels, raw);
        for (int i = 0; i < br.clean.size(); ++i) {
            for (int j = 0; j < 3; ++j) {
                CHECK(br.clean.x.at(i, j) ==
                      s.x.at(br.clean_rows[static_cast<std::size_t>(i)], j));
            }
        }
    }
}

TEST_CASE("make_bundle input validation") {
    BlobSpec bspec{3, 2, {20, 20, 20}, 1.0, -1.0, 37};
    Split s = data::gen_blobs(bspec);

    BundleSpec tiny{2, 0.2, {noise::Kind::Unif, 0.1, 3, 1}, 1, true};
    CHECK_THROWS_AS(data::make_bundle(s.x, s.labels, tiny), DataError);

    BundleSpec huge{60, 0.2, {noise::Kind::Unif, 0.1, 3, 1}, 1, true};
    CHECK_THROWS_AS(data::make_bundle(s.x, s.labels, huge), DataError);

    BundleSpec wrong_c{10, 0.2, {noise::Kind::Unif, 0.1, 4, 1}, 1, true};
    CHECK_THROWS_AS(data::make_bundle(s.x, s.labels, wrong_c), ConfigError);

    BundleSpec bad_frac{10, 1.0, {noise::Kind::Unif, 0.1, 3, 1}, 1, true};
    CHECK_THROWS_AS(data::make_bundle(s.x, s.labels, bad_frac), ConfigError);
}

TEST_CASE("epoch batches form a permutation and differ across epochs") {
    auto b0 = data::epoch_batches(10, 4, 55, 0);
    REQUIRE(b0.size() == 3);
    CHECK(b0[0].size() == 4);
    CHECK(b0[2].size() == 2);

    std::vector<int> flat;
    for (const auto& b : b0) flat.insert(flat.end(), b.begin(), b.end());
    std::vector<int> sorted = flat;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> want(10);
    std::iota(want.begin(), want.end(), 0);
    CHECK(sorted == want);

    CHECK(data::epoch_batches(10, 4, 55, 0) == b0);
    CHECK(data::epoch_batches(10, 4, 55, 1) != b0);
    CHECK(data::epoch_batches(10, 4, 56, 0) != b0);

    CHECK_THROWS_AS(data::epoch_batches(0, 4, 1, 0), ConfigError);
    CHECK_THROWS_AS(data::epoch_batches(10, 0, 1, 0), ConfigError);
}

TEST_CASE("batch cycler streams epochs seamlessly") {
    data::BatchCycler cyc(7, 3, 91);
    CHECK(cyc.batches_per_epoch() == 3);
    CHECK(cyc.epochs_completed() == 0);

    std::vector<int> first_epoch;
    for (int i = 0; i < 3; ++i) {
        const auto& b = cyc.next();
        first_epoch.insert(first_epoch.end(), b.begin(), b.end());
    }
    std::sort(first_epoch.begin(), first_epoch.end());
    std::vector<int> want(7);
    std::iota(want.begin(), want.end(), 0);
    CHECK(first_epoch == want);
    CHECK(cyc.epochs_completed() == 1);

    const auto& next_batch = cyc.next();
    CHECK(next_batch == data::epoch_batches(7, 3, 91, 1)[0]);
}
