#include <doctest.h>

#include "mlc/bilevel.hpp"
#include "mlc/data.hpp"
#include "mlc/error.hpp"
#include "mlc/grad_check.hpp"
#include "mlc/models.hpp"
#include "mlc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

using namespace mlc;
using bilevel::TrainConfig;

namespace {

data::Split numbered_split(int n, int dim) {
    data::Split s;
    s.x = Tensor({n, dim});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < dim; ++j) s.x.at(i, j) = i + 0.1 * j;
    }
    s.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) s.labels[static_cast<std::size_t>(i)] = i % 2;
    return s;
}

data::Split empty_split(int dim) {
    data::Split s;
    s.x = Tensor({0, dim});
    return s;
}

ParamVector toy_params(std::initializer_list<double> values) {
    ParamVector p;
    p.add("w", Tensor({static_cast<int>(values.size())}, std::vector<double>(values)));
    return p;
}

struct SmallProblem {
    ClassifierConfig ccfg{2, {4}, 2};
    LcnConfig lcfg{2, 3, 4, 4};
    data::DatasetBundle bundle;
    bilevel::TrainData view;

    explicit SmallProblem(double rho = 0.4, std::uint64_t seed = 5) {
        data::BlobSpec bspec{2, 2, {60, 60}, 0.8, -1.0, seed};
        data::Split s = data::gen_blobs(bspec);
        data::BundleSpec spec{16, 0.2, {noise::Kind::Flip, rho, 2, 11}, 21, true};
        bundle = data::make_bundle(s.x, s.labels, spec);
        view = bilevel::training_view(bundle);
    }
};

} // namespace

TEST_CASE("clean batches split evenly with the odd row going to eval") {
    data::Split batch = numbered_split(8, 2);
    auto s = bilevel::split_clean_batch(batch, 3);
    CHECK(s.eval_half.size() == 4);
    CHECK(s.train_half.size() == 4);

    auto odd = bilevel::split_clean_batch(numbered_split(9, 2), 3);
    CHECK(odd.eval_half.size() == 5);
    CHECK(odd.train_half.size() == 4);

    SUBCASE("the two halves partition the batch") {
        std::multiset<double> seen;
        for (int i = 0; i < s.eval_half.size(); ++i) seen.insert(s.eval_half.x.at(i, 0));
        for (int i = 0; i < s.train_half.size(); ++i) seen.insert(s.train_half.x.at(i, 0));
        std::multiset<double> want;
        for (int i = 0; i < 8; ++i) want.insert(static_cast<double>(i));
        CHECK(seen == want);
    }

    SUBCASE("labels travel with their rows") {
        for (int i = 0; i < s.eval_half.size(); ++i) {
            const int row = static_cast<int>(s.eval_half.x.at(i, 0));
            CHECK(s.eval_half.labels[static_cast<std::size_t>(i)] == row % 2);
        }
    }

    SUBCASE("the split is a function of the seed") {
        auto again = bilevel::split_clean_batch(batch, 3);
        CHECK(again.eval_half.labels == s.eval_half.labels);
        CHECK(again.eval_half.x.values() == s.eval_half.x.values());
        bool differs = false;
        for (std::uint64_t seed = 4; seed < 12 && !differs; ++seed) {
            auto other = bilevel::split_clean_batch(batch, seed);
            differs = other.eval_half.x.values() != s.eval_half.x.values();
        }
        CHECK(differs);
    }

    CHECK_THROWS_AS(bilevel::split_clean_batch(numbered_split(1, 2), 0), DataError);
}

TEST_CASE("train config validation rejects out-of-range fields") {
    TrainConfig ok;
    CHECK_NOTHROW(ok.validate());

    auto expect_bad = [](auto mutate) {
        TrainConfig c;
        mutate(c);
        CHECK_THROWS_AS(c.validate(), ConfigError);
    };
    expect_bad([](TrainConfig& c) { c.k = 0; });
    expect_bad([](TrainConfig& c) { c.k = 101; });
    expect_bad([](TrainConfig& c) { c.main_lr = 0.0; });
    expect_bad([](TrainConfig& c) { c.meta_lr = -0.5; });
    expect_bad([](TrainConfig& c) { c.main_momentum = 1.0; });
    expect_bad([](TrainConfig& c) { c.meta_momentum = -0.1; });
    expect_bad([](TrainConfig& c) { c.batch_size_noisy = 0; });
    expect_bad([](TrainConfig& c) { c.batch_size_clean = 1; });
    expect_bad([](TrainConfig& c) { c.epochs = 0; });
    expect_bad([](TrainConfig& c) { c.fd_epsilon_scale = 0.0; });
}

TEST_CASE("sgd momentum steps") {
    ParamVector w = toy_params({1.0, 2.0, -3.0});
    ParamVector g = toy_params({0.5, -1.0, 2.0});

    SUBCASE("zero learning rate leaves parameters in place") {
        bilevel::SgdMomentum opt(0.0, 0.9, w);
        ParamVector next = opt.step(w, g);
        CHECK(next.max_abs_diff(w) == 0.0);
    }

    SUBCASE("the first step is a plain gradient step") {
        bilevel::SgdMomentum opt(0.1, 0.9, w);
        ParamVector next = opt.step(w, g);
        ParamVector want = w.plus_scaled(g, -0.1);
        CHECK(next.max_abs_diff(want) == 0.0);
    }

    SUBCASE("the second step folds the buffer in") {
        bilevel::SgdMomentum opt(0.1, 0.9, w);
        ParamVector w1 = opt.step(w, g);
        ParamVector g2 = toy_params({1.0, 1.0, 1.0});
        ParamVector w2 = opt.step(w1, g2);
        // buffer = 0.9 * g + g2
        ParamVector buf = g2.plus_scaled(g, 0.9);
        ParamVector want = w1.plus_scaled(buf, -0.1);
        CHECK(w2.max_abs_diff(want) < 1e-15);
    }
}

TEST_CASE("main_step without clean rows trains on the noisy batch alone") {
    SmallProblem p(0.0);
    ParamVector w = init_classifier(p.ccfg, 31);
    ParamVector alpha = init_lcn(p.lcfg, 32);
    bilevel::SgdMomentum opt(0.05, 0.9, w);

    data::Split batch = data::take_rows(p.view.noisy, {0, 1, 2, 3, 4, 5, 6, 7});
    auto out = bilevel::main_step(p.ccfg, p.lcfg, w, alpha, batch, empty_split(2), opt, false);
    CHECK(out.loss == doctest::Approx(out.loss_noisy).epsilon(1e-15));
    CHECK(out.w_next.max_abs_diff(w) > 0.0);
    CHECK(out.g_w.same_layout(w));
    CHECK(out.corrected.rows() == 8);

    SUBCASE("repeated steps shrink the loss on clean labels") {
        ParamVector cur = w;
        bilevel::SgdMomentum sgd(0.1, 0.9, w);
        double first = 0.0, last = 0.0;
        for (int it = 0; it < 30; ++it) {
            auto step = bilevel::main_step(p.ccfg, p.lcfg, cur, alpha, batch, empty_split(2), sgd, false);
            if (it == 0) first = step.loss;
            last = step.loss;
            cur = step.w_next;
        }
        CHECK(last < 0.5 * first);
    }
}

TEST_CASE("main_step flags divergence instead of returning junk") {
    SmallProblem p(0.0);
    ParamVector w = init_classifier(p.ccfg, 41);
    for (auto& seg : w.segments()) {
        for (double& v : seg.tensor.values()) v = 0.0;
    }
    // Zero weights leave only the output bias, so every row of this batch is
    // classified against a 2e9 margin on the wrong side.
    w.tensor("clf/b1") = Tensor({2}, {1e9, -1e9});
    ParamVector alpha = init_lcn(p.lcfg, 42);
    bilevel::SgdMomentum opt(0.05, 0.9, w);
    data::Split batch;
    batch.x = Tensor({3, 2}, {0.5, 0.1, -0.2, 0.3, 1.0, -1.0});
    batch.labels = {1, 1, 1};
    CHECK_THROWS_AS(
        bilevel::main_step(p.ccfg, p.lcfg, w, alpha, batch, empty_split(2), opt, false),
        DivergenceError);
}

TEST_CASE("the lcn-corrected training loss matches its finite-difference gradient") {
    SmallProblem p(0.5);
    ParamVector w = init_classifier(p.ccfg, 51);
    ParamVector alpha = init_lcn(p.lcfg, 52);
    data::Split noisy = data::take_rows(p.view.noisy, {0, 1, 2, 3, 4});
    data::Split clean = data::take_rows(p.view.clean, {0, 1, 2});

    // The feature barrier makes the main gradient treat the corrected labels
    // as constants, so the finite-difference probe has to hold them fixed at
    // their base-point values while w moves.
    Tensor fixed_targets;
    {
        diff::Graph g;
        fixed_targets = bilevel::build_training_loss(g, p.ccfg, p.lcfg, w, alpha, noisy, clean, true)
                            .corrected;
    }
    auto fn_w = [&](const ParamVector& probe, ParamVector* grad_out) {
        if (grad_out) {
            diff::Graph g;
            auto parts =
                bilevel::build_training_loss(g, p.ccfg, p.lcfg, probe, alpha, noisy, clean, true);
            *grad_out = g.backward(parts.loss).in_layout(probe);
            return g.value(parts.loss).item();
        }
        diff::Graph g;
        auto out_n = classifier_forward(g, p.ccfg, probe, noisy.x);
        auto out_c = classifier_forward(g, p.ccfg, probe, clean.x);
        auto ln = soft_cross_entropy(g, g.input(fixed_targets), out_n.logits);
        auto lc = soft_cross_entropy(g, g.input(one_hot(clean.labels, 2)), out_c.logits);
        auto loss = g.scale(g.add(g.scale(ln, 5.0), g.scale(lc, 3.0)), 1.0 / 8.0);
        return g.value(loss).item();
    };
    auto report_w = diff::check_gradients(fn_w, w);
    INFO("w worst ", report_w.worst.segment, " rel ", report_w.max_rel_err);
    CHECK(report_w.passed);

    auto fn_a = [&](const ParamVector& probe, ParamVector* grad_out) {
        diff::Graph g;
        auto parts = bilevel::build_training_loss(g, p.ccfg, p.lcfg, w, probe, noisy, clean, true);
        if (grad_out) *grad_out = g.backward(parts.loss).in_layout(probe);
        return g.value(parts.loss).item();
    };
    auto report_a = diff::check_gradients(fn_a, alpha);
    INFO("alpha worst ", report_a.worst.segment, " rel ", report_a.max_rel_err);
    CHECK(report_a.passed);
}

TEST_CASE("meta loss and gradient on the clean eval half") {
    ClassifierConfig cfg{1, {2}, 2};

    SUBCASE("vanishes at high-margin correct predictions") {
        ParamVector w = init_classifier(cfg, 61);
        w.tensor("clf/W0") = Tensor({1, 2}, {5.0, -5.0});
        w.tensor("clf/b0") = Tensor({2});
        w.tensor("clf/W1") = Tensor({2, 2}, {30.0, -30.0, -30.0, 30.0});
        w.tensor("clf/b1") = Tensor({2});

        data::Split eval;
        eval.x = Tensor({2, 1}, {2.0, -2.0});
        eval.labels = {0, 1};
        auto out = bilevel::meta_loss_grad(cfg, w, eval);
        CHECK(out.loss < 1e-8);
        CHECK(out.grad.l2_norm() < 1e-7);
    }

    SUBCASE("matches finite differences") {
        ParamVector w = init_classifier(cfg, 62);
        data::Split eval;
        eval.x = Tensor({4, 1}, {0.5, -1.0, 2.0, 0.2});
        eval.labels = {0, 1, 0, 1};
        auto fn = [&](const ParamVector& probe, ParamVector* grad_out) {
            auto out = bilevel::meta_loss_grad(cfg, probe, eval);
            if (grad_out) *grad_out = out.grad;
            return out.loss;
        };
        auto report = diff::check_gradients(fn, w);
        CHECK(report.passed);
    }

    SUBCASE("duplicating every row changes nothing") {
        ParamVector w = init_classifier(cfg, 63);
        data::Split eval;
        eval.x = Tensor({3, 1}, {0.5, -1.0, 2.0});
        eval.labels = {0, 1, 0};
        data::Split twice = data::concat_splits(eval, eval);
        auto a = bilevel::meta_loss_grad(cfg, w, eval);
        auto b = bilevel::meta_loss_grad(cfg, w, twice);
        CHECK(b.loss == doctest::Approx(a.loss).epsilon(1e-12));
        CHECK(a.grad.max_abs_diff(b.grad) < 1e-12);
    }

    SUBCASE("an empty eval half is an error") {
        ParamVector w = init_classifier(cfg, 64);
        CHECK_THROWS_AS(bilevel::meta_loss_grad(cfg, w, empty_split(1)), DataError);
    }
}

TEST_CASE("finite-difference mixed hvp") {
    SUBCASE("zero direction short-circuits to zero") {
        ParamVector alpha = toy_params({1.0, 2.0});
        ParamVector w = toy_params({3.0, 4.0});
        ParamVector v = ParamVector::zeros_like(w);
        auto grad_fn = [&](const ParamVector&) { return toy_params({1.0, 1.0}); };
        ParamVector h = bilevel::mixed_hvp_fd(grad_fn, alpha, w, v, 0.01);
        CHECK(h.l2_norm() == 0.0);
    }

    SUBCASE("recovers the identity cross-derivative of L = <alpha, w>") {
        // d(grad_alpha L)/dw = I, so the probe must return v itself.
        ParamVector alpha = toy_params({1.0, -2.0, 0.5});
        ParamVector w = toy_params({0.3, 0.7, -1.1});
        ParamVector v = toy_params({0.2, -0.4, 1.0});
        auto grad_fn = [&](const ParamVector& probe) { return probe; };
        ParamVector h = bilevel::mixed_hvp_fd(grad_fn, alpha, w, v, 0.01);
        CHECK(h.max_abs_diff(v) < 1e-9);
    }

    SUBCASE("perturbation size follows fd_epsilon_scale / |v|") {
        ParamVector alpha = toy_params({0.0});
        ParamVector w = toy_params({10.0});
        ParamVector v = toy_params({4.0});
        std::vector<double> probes;
        auto grad_fn = [&](const ParamVector& probe) {
            probes.push_back(probe.tensor("w").at(std::size_t{0}));
            return ParamVector::zeros_like(alpha);
        };
        bilevel::mixed_hvp_fd(grad_fn, alpha, w, v, 0.01);
        REQUIRE(probes.size() == 2);
        // epsilon = 0.01 / 4, so w is probed at 10 +- 0.01.
        CHECK(std::abs(probes[0] - 10.01) < 1e-12);
        CHECK(std::abs(probes[1] - 9.99) < 1e-12);
    }
}

TEST_CASE("meta-gradient recursion bookkeeping") {
    ParamVector alpha = toy_params({0.5, -0.5});
    ParamVector g_w = toy_params({1.0, 0.0, 0.0});
    ParamVector g_wn = toy_params({1.0, 1.0, 0.0});
    ParamVector hvp1 = toy_params({0.25, -0.75});
    ParamVector hvp2 = toy_params({-1.0, 0.5});

    SUBCASE("a fresh window starts at minus the hvp term") {
        auto state = bilevel::MetaGradState::make(alpha, 2, 0.1);
        bilevel::accumulate_meta_grad(state, g_w, g_wn, hvp1);
        CHECK(state.steps_since_meta_update == 1);
        ParamVector want = ParamVector::zeros_like(alpha);
        want.add_scaled(hvp1, -1.0);
        CHECK(state.prev_meta_grad.max_abs_diff(want) == 0.0);
    }

    SUBCASE("the carry coefficient weights the previous accumulation") {
        auto state = bilevel::MetaGradState::make(alpha, 2, 0.1);
        bilevel::accumulate_meta_grad(state, g_w, g_wn, hvp1);
        bilevel::accumulate_meta_grad(state, g_w, g_wn, hvp2);
        // c = <g_wn, (1 - 0.1) * g_w> / |g_w|^2 = 0.9
        ParamVector want = ParamVector::zeros_like(alpha);
        want.add_scaled(hvp1, -0.9);
        want.add_scaled(hvp2, -1.0);
        CHECK(state.prev_meta_grad.max_abs_diff(want) < 1e-15);
        CHECK(state.steps_since_meta_update == 2);
    }

    SUBCASE("a unit step-size diagonal kills the carry") {
        auto state = bilevel::MetaGradState::make(alpha, 2, 1.0);
        bilevel::accumulate_meta_grad(state, g_w, g_wn, hvp1);
        bilevel::accumulate_meta_grad(state, g_w, g_wn, hvp2);
        ParamVector want = ParamVector::zeros_like(alpha);
        want.add_scaled(hvp2, -1.0);
        CHECK(state.prev_meta_grad.max_abs_diff(want) == 0.0);
    }

    SUBCASE("a vanishing main gradient also kills the carry") {
        auto state = bilevel::MetaGradState::make(alpha, 2, 0.1);
        bilevel::accumulate_meta_grad(state, g_w, g_wn, hvp1);
        bilevel::accumulate_meta_grad(state, ParamVector::zeros_like(g_w), g_wn, hvp2);
        ParamVector want = ParamVector::zeros_like(alpha);
        want.add_scaled(hvp2, -1.0);
        CHECK(state.prev_meta_grad.max_abs_diff(want) == 0.0);
    }

    SUBCASE("accumulating past a full window throws") {
        auto state = bilevel::MetaGradState::make(alpha, 1, 0.1);
        bilevel::accumulate_meta_grad(state, g_w, g_wn, hvp1);
        CHECK_THROWS_AS(bilevel::accumulate_meta_grad(state, g_w, g_wn, hvp2), StateError);
    }
}

TEST_CASE("meta_step applies the window and resets the state") {
    ParamVector alpha = toy_params({0.5, -0.5});
    ParamVector g_w = toy_params({1.0});
    ParamVector hvp = toy_params({0.25, -0.75});

    SUBCASE("mid-window calls are rejected") {
        auto state = bilevel::MetaGradState::make(alpha, 2, 0.1);
        bilevel::MetaOptimizer opt(bilevel::MetaOpt::SgdMomentum, 0.01, 0.9, alpha);
        bilevel::accumulate_meta_grad(state, g_w, g_w, hvp);
        CHECK_THROWS_WITH_AS(bilevel::meta_step(alpha, state, opt),
                             doctest::Contains("1 of 2"), StateError);
    }

    SUBCASE("a complete window takes one optimizer step and resets") {
        auto state = bilevel::MetaGradState::make(alpha, 1, 0.1);
        bilevel::MetaOptimizer opt(bilevel::MetaOpt::SgdMomentum, 0.01, 0.9, alpha);
        bilevel::accumulate_meta_grad(state, g_w, g_w, hvp);
        ParamVector next = bilevel::meta_step(alpha, state, opt);

        // First momentum step is plain sgd: alpha - lr * (-hvp).
        ParamVector want = alpha.plus_scaled(hvp, 0.01);
        CHECK(next.max_abs_diff(want) < 1e-15);
        CHECK(state.steps_since_meta_update == 0);
        CHECK(state.prev_meta_grad.l2_norm() == 0.0);
    }

    SUBCASE("zero meta learning rate still resets the window") {
        auto state = bilevel::MetaGradState::make(alpha, 1, 0.1);
        bilevel::MetaOptimizer opt(bilevel::MetaOpt::SgdMomentum, 0.0, 0.9, alpha);
        bilevel::accumulate_meta_grad(state, g_w, g_w, hvp);
        ParamVector next = bilevel::meta_step(alpha, state, opt);
        CHECK(next.max_abs_diff(alpha) == 0.0);
        CHECK(state.steps_since_meta_update == 0);
    }

    SUBCASE("the adaptive optimizer normalizes the first step to lr") {
        auto state = bilevel::MetaGradState::make(alpha, 1, 0.1);
        bilevel::MetaOptimizer opt(bilevel::MetaOpt::Adaptive, 0.01, 0.9, alpha);
        bilevel::accumulate_meta_grad(state, g_w, g_w, hvp);
        ParamVector next = bilevel::meta_step(alpha, state, opt);
        // Bias-corrected adam moves every coordinate by about lr * sign(grad).
        for (std::size_t i = 0; i < 2; ++i) {
            const double moved = next.tensor("w").at(i) - alpha.tensor("w").at(i);
            CHECK(std::abs(std::abs(moved) - 0.01) < 1e-5);
        }
        CHECK(state.steps_since_meta_update == 0);
    }
}

TEST_CASE("training runs keep the k-step window discipline") {
    SmallProblem p(0.4);
    TrainConfig tcfg;
    tcfg.k = 3;
    tcfg.main_lr = 0.05;
    tcfg.meta_lr = 0.005;
    tcfg.batch_size_noisy = 16;
    tcfg.batch_size_clean = 8;
    tcfg.epochs = 2;
    tcfg.seed = 7;

    std::vector<int> counters;
    std::vector<bool> updates;
    auto observer = [&](const bilevel::StepEvent& e) {
        counters.push_back(e.steps_since_meta_update);
        updates.push_back(e.meta_updated);
    };
    auto result = bilevel::train_mlc(p.view, p.ccfg, p.lcfg, tcfg, observer);
    REQUIRE(!result.diverged);

    const int steps = static_cast<int>(counters.size());
    CHECK(steps == static_cast<int>(result.history.steps.size()));
    int expected_updates = 0;
    for (int i = 0; i < steps; ++i) {
        const bool complete = (i + 1) % 3 == 0;
        if (complete) ++expected_updates;
        CHECK(updates[static_cast<std::size_t>(i)] == complete);
        CHECK(counters[static_cast<std::size_t>(i)] == (complete ? 0 : (i + 1) % 3));
    }
    CHECK(result.history.meta_updates == expected_updates);
    CHECK(expected_updates > 0);

    SUBCASE("epoch records summarize the step records") {
        REQUIRE(result.history.epochs.size() == 2);
        const auto& er = result.history.epochs[0];
        double mean = 0.0;
        int count = 0;
        for (const auto& sr : result.history.steps) {
            if (sr.epoch == 0) {
                mean += sr.loss_noisy;
                ++count;
            }
        }
        mean /= count;
        CHECK(er.mean_loss_noisy == doctest::Approx(mean).epsilon(1e-12));
        CHECK(er.test_accuracy >= 0.0);
        CHECK(er.test_accuracy <= 1.0);
    }
}

TEST_CASE("training with too little clean data is rejected up front") {
    SmallProblem p(0.4);
    TrainConfig tcfg;
    tcfg.batch_size_clean = 10;  // needs 20 clean rows, the bundle has 16
    CHECK_THROWS_AS(bilevel::train_mlc(p.view, p.ccfg, p.lcfg, tcfg), DataError);
}

TEST_CASE("a frozen-identity lcn reproduces the noisy-only baseline exactly") {
    SmallProblem p(0.4);
    TrainConfig tcfg;
    tcfg.main_lr = 0.05;
    tcfg.batch_size_noisy = 16;
    tcfg.batch_size_clean = 4;
    tcfg.epochs = 3;
    tcfg.seed = 13;
    tcfg.freeze_lcn_identity = true;

    auto frozen = bilevel::train_mlc(p.view, p.ccfg, p.lcfg, tcfg);
    auto baseline = bilevel::train_baseline(bilevel::Baseline::NoisyOnly, p.view, p.ccfg, tcfg);
    REQUIRE(!frozen.diverged);
    REQUIRE(!baseline.diverged);
    CHECK(frozen.w.max_abs_diff(baseline.w) == 0.0);
    CHECK(frozen.history.meta_updates == 0);
    CHECK(baseline.history.steps.size() == frozen.history.steps.size());
    for (std::size_t i = 0; i < baseline.history.steps.size(); ++i) {
        CHECK(baseline.history.steps[i].loss_noisy == frozen.history.steps[i].loss_noisy);
        CHECK(std::isnan(baseline.history.steps[i].loss_clean));
    }
}

TEST_CASE("baselines train on their advertised feeds") {
    SmallProblem p(0.0);
    TrainConfig tcfg;
    tcfg.main_lr = 0.1;
    tcfg.batch_size_noisy = 16;
    tcfg.epochs = 8;
    tcfg.seed = 17;

    auto noisy_only = bilevel::train_baseline(bilevel::Baseline::NoisyOnly, p.view, p.ccfg, tcfg);
    REQUIRE(!noisy_only.diverged);
    CHECK(noisy_only.history.epochs.back().test_accuracy > 0.9);
    CHECK(noisy_only.history.epochs.back().mean_loss_noisy <
          noisy_only.history.epochs.front().mean_loss_noisy);

    auto clean_only = bilevel::train_baseline(bilevel::Baseline::CleanOnly, p.view, p.ccfg, tcfg);
    REQUIRE(!clean_only.diverged);
    CHECK(clean_only.history.steps.size() ==
          static_cast<std::size_t>(tcfg.epochs));  // 16 clean rows, one batch per epoch

    auto both = bilevel::train_baseline(bilevel::Baseline::CleanPlusNoisy, p.view, p.ccfg, tcfg);
    REQUIRE(!both.diverged);
    const int pool = p.view.clean.size() + p.view.noisy.size();
    const int per_epoch = static_cast<int>(both.history.steps.size()) / tcfg.epochs;
    CHECK(per_epoch == (pool + 15) / 16);
}

TEST_CASE("the lr schedule decays by 10x then 100x") {
    SmallProblem p(0.0);
    TrainConfig tcfg;
    tcfg.main_lr = 0.05;
    tcfg.batch_size_noisy = 96;  // one step per epoch
    tcfg.epochs = 10;
    tcfg.seed = 19;
    tcfg.main_momentum = 0.0;

    std::vector<ParamVector> ws;
    auto observer = [&](const bilevel::StepEvent& e) { ws.push_back(e.w); };
    auto res = bilevel::train_baseline(bilevel::Baseline::NoisyOnly, p.view, p.ccfg, tcfg, observer);
    REQUIRE(!res.diverged);
    REQUIRE(ws.size() == 10);

    // Without momentum, |w_{t+1} - w_t| = lr * |g|; the drop at 60% and 80% of
    // the run shows up as a sharp fall in step length.
    auto step_len = [&](std::size_t i) { return ws[i].max_abs_diff(ws[i - 1]); };
    const double before_first = step_len(5);
    const double after_first = step_len(6);
    const double after_second = step_len(8);
    CHECK(after_first < 0.5 * before_first);
    CHECK(after_second < 0.5 * after_first);

    SUBCASE("disabling the schedule keeps the step length steady") {
        TrainConfig flat = tcfg;
        flat.lr_decay = false;
        std::vector<ParamVector> fw;
        auto obs = [&](const bilevel::StepEvent& e) { fw.push_back(e.w); };
        auto fres = bilevel::train_baseline(bilevel::Baseline::NoisyOnly, p.view, p.ccfg, flat, obs);
        REQUIRE(!fres.diverged);
        const double l5 = fw[6].max_abs_diff(fw[5]);
        const double l6 = fw[7].max_abs_diff(fw[6]);
        CHECK(l6 > 0.2 * l5);
    }
}

TEST_CASE("meta training actually moves the lcn parameters") {
    SmallProblem p(0.6, 23);
    TrainConfig tcfg;
    tcfg.k = 2;
    tcfg.main_lr = 0.05;
    tcfg.meta_lr = 0.02;
    tcfg.batch_size_noisy = 16;
    tcfg.batch_size_clean = 8;
    tcfg.epochs = 6;
    tcfg.seed = 29;

    auto mlc = bilevel::train_mlc(p.view, p.ccfg, p.lcfg, tcfg);
    REQUIRE(!mlc.diverged);
    CHECK(mlc.history.meta_updates > 0);
    CHECK(mlc.alpha.max_abs_diff(init_lcn(p.lcfg, rng::mix(tcfg.seed, 3))) > 0.0);
}

TEST_CASE("training_view strips the bundle down to what the trainer may see") {
    SmallProblem p(0.4);
    CHECK(p.view.num_classes == p.bundle.num_classes);
    CHECK(p.view.clean.x.values() == p.bundle.clean.x.values());
    CHECK(p.view.noisy.labels == p.bundle.noisy.labels);
    CHECK(p.view.test.labels == p.bundle.test.labels);
}
