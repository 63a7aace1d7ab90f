#include "mlc/checks.hpp"

#include "mlc/bilevel.hpp"
#include "mlc/grad_check.hpp"
#include "mlc/models.hpp"
#include "mlc/rng.hpp"

#include <cmath>
#include <cstdio>

namespace mlc::checks {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

ParamVector merge_params(const ParamVector& a, const ParamVector& b) {
    ParamVector out = a;
    for (const auto& seg : b.segments()) out.add(seg.name, seg.tensor);
    return out;
}

ParamVector subset_by_prefix(const ParamVector& p, const std::string& prefix) {
    ParamVector out;
    for (const auto& seg : p.segments()) {
        if (seg.name.rfind(prefix, 0) == 0) out.add(seg.name, seg.tensor);
    }
    return out;
}

struct Instance {
    ClassifierConfig ccfg;
    LcnConfig lcfg;
    ParamVector w;
    ParamVector alpha;
    data::Split noisy;
    data::Split clean_train;
    data::Split eval;
};

Tensor random_batch(int rows, int cols, rng::Engine& e) {
    Tensor t({rows, cols});
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = e.uniform(-1.5, 1.5);
    return t;
}

std::vector<int> random_labels(int rows, int classes, rng::Engine& e) {
    std::vector<int> out(static_cast<std::size_t>(rows));
    for (int& l : out) l = static_cast<int>(e.bounded(static_cast<std::uint64_t>(classes)));
    return out;
}

// A small random architecture plus batches; `fixed_small` pins the 2-class
// 2-feature shape used by the meta anchor.
Instance make_instance(std::uint64_t seed, bool fixed_small) {
    rng::Engine e(seed);
    Instance inst;
    if (fixed_small) {
        inst.ccfg.input_dim = 2;
        inst.ccfg.hidden_dims = {4};
        inst.ccfg.num_classes = 2;
        inst.lcfg = LcnConfig{2, 4, inst.ccfg.feature_dim(), 6};
    } else {
        inst.ccfg.input_dim = 2 + static_cast<int>(e.bounded(4));
        const int depth = 1 + static_cast<int>(e.bounded(2));
        for (int i = 0; i < depth; ++i) inst.ccfg.hidden_dims.push_back(3 + static_cast<int>(e.bounded(4)));
        inst.ccfg.num_classes = 2 + static_cast<int>(e.bounded(3));
        inst.lcfg = LcnConfig{inst.ccfg.num_classes, 3 + static_cast<int>(e.bounded(5)),
                              inst.ccfg.feature_dim(), 3 + static_cast<int>(e.bounded(5))};
    }
    inst.w = init_classifier(inst.ccfg, rng::mix(seed, 1));
    inst.alpha = init_lcn(inst.lcfg, rng::mix(seed, 2));

    const int bn = fixed_small ? 6 : 2 + static_cast<int>(e.bounded(4));
    const int bc = fixed_small ? 2 : static_cast<int>(e.bounded(4));
    const int be = fixed_small ? 4 : 2 + static_cast<int>(e.bounded(3));
    inst.noisy = {random_batch(bn, inst.ccfg.input_dim, e), random_labels(bn, inst.ccfg.num_classes, e)};
    inst.clean_train = {random_batch(bc, inst.ccfg.input_dim, e), random_labels(bc, inst.ccfg.num_classes, e)};
    inst.eval = {random_batch(be, inst.ccfg.input_dim, e), random_labels(be, inst.ccfg.num_classes, e)};
    return inst;
}

Tensor noisy_features(const Instance& inst, const ParamVector& w) {
    diff::Graph g;
    auto out = classifier_forward(g, inst.ccfg, w, inst.noisy.x);
    return g.value(out.features);
}

// The loss as the function the backward pass actually differentiates: the
// LCN reads a pinned copy of the features, so probing w moves the logits only.
double frozen_feature_loss(const Instance& inst, const ParamVector& w, const ParamVector& alpha,
                           const Tensor& features) {
    diff::Graph g;
    auto noisy_out = classifier_forward(g, inst.ccfg, w, inst.noisy.x);
    auto targets = lcn_forward(g, inst.lcfg, alpha, g.input(features), inst.noisy.labels);
    diff::ValueId loss = soft_cross_entropy(g, targets, noisy_out.logits);
    if (inst.clean_train.size() > 0) {
        auto clean_out = classifier_forward(g, inst.ccfg, w, inst.clean_train.x);
        auto clean_targets = g.input(one_hot(inst.clean_train.labels, inst.ccfg.num_classes));
        auto loss_clean = soft_cross_entropy(g, clean_targets, clean_out.logits);
        const double total = inst.noisy.size() + inst.clean_train.size();
        loss = g.add(g.scale(loss, inst.noisy.size() / total),
                     g.scale(loss_clean, inst.clean_train.size() / total));
    }
    return g.value(loss).item();
}

ParamVector training_loss_grad_w(const Instance& inst, const ParamVector& w, const ParamVector& alpha) {
    diff::Graph g;
    auto parts = bilevel::build_training_loss(g, inst.ccfg, inst.lcfg, w, alpha, inst.noisy,
                                              inst.clean_train, true);
    return g.backward(parts.loss).in_layout(w);
}

} // namespace

CheckResult check_gradient_oracle(int draws, std::uint64_t seed, double tolerance, double epsilon) {
    CheckResult r;
    r.name = "gradient_oracle";
    double worst = 0.0;
    std::string worst_at;
    for (int d = 0; d < draws; ++d) {
        Instance inst = make_instance(rng::mix(seed, static_cast<std::uint64_t>(d)), false);
        Tensor h0 = noisy_features(inst, inst.w);
        ParamVector combined = merge_params(inst.w, inst.alpha);
        auto fn = [&](const ParamVector& p, ParamVector* grad_out) {
            ParamVector w = subset_by_prefix(p, "clf/");
            ParamVector alpha = subset_by_prefix(p, "lcn/");
            if (grad_out) {
                diff::Graph g;
                auto parts = bilevel::build_training_loss(g, inst.ccfg, inst.lcfg, w, alpha,
                                                          inst.noisy, inst.clean_train, true);
                *grad_out = g.backward(parts.loss).in_layout(p);
                return g.value(parts.loss).item();
            }
            return frozen_feature_loss(inst, w, alpha, h0);
        };
        auto report = diff::check_gradients(fn, combined, epsilon, tolerance);
        if (report.max_rel_err > worst) {
            worst = report.max_rel_err;
            worst_at = "draw " + std::to_string(d) + " segment " + report.worst.segment;
        }
    }
    r.worst = worst;
    r.passed = worst <= tolerance;
    r.detail = std::to_string(draws) + " draws, max rel err " + fmt(worst) +
               (worst_at.empty() ? "" : " at " + worst_at) + ", tolerance " + fmt(tolerance);
    return r;
}

CheckResult check_stop_gradient(int draws, std::uint64_t seed, double tolerance) {
    CheckResult r;
    r.name = "stop_gradient";
    double worst = 0.0;
    for (int d = 0; d < draws; ++d) {
        Instance inst = make_instance(rng::mix(seed, 0x57, static_cast<std::uint64_t>(d)), false);

        diff::Graph attached;
        auto parts = bilevel::build_training_loss(attached, inst.ccfg, inst.lcfg, inst.w, inst.alpha,
                                                  inst.noisy, inst.clean_train, true);
        ParamVector g_attached = attached.backward(parts.loss).in_layout(inst.w);

        // Detached oracle: identical forward numbers, but the soft labels are a
        // plain constant, so no path of any kind leads back to the LCN.
        diff::Graph detached;
        auto out = classifier_forward(detached, inst.ccfg, inst.w, inst.noisy.x);
        auto targets = detached.input(parts.corrected);
        auto loss_n = soft_cross_entropy(detached, targets, out.logits);
        diff::ValueId loss;
        if (inst.clean_train.size() > 0) {
            auto cout = classifier_forward(detached, inst.ccfg, inst.w, inst.clean_train.x);
            auto ct = detached.input(one_hot(inst.clean_train.labels, inst.ccfg.num_classes));
            auto loss_c = soft_cross_entropy(detached, ct, cout.logits);
            const double total = inst.noisy.size() + inst.clean_train.size();
            loss = detached.add(detached.scale(loss_n, inst.noisy.size() / total),
                                detached.scale(loss_c, inst.clean_train.size() / total));
        } else {
            loss = loss_n;
        }
        ParamVector g_detached = detached.backward(loss).in_layout(inst.w);

        worst = std::max(worst, g_attached.max_abs_diff(g_detached));
    }
    r.worst = worst;
    r.passed = worst <= tolerance;
    r.detail = std::to_string(draws) + " draws, max |attached - detached| " + fmt(worst) +
               ", tolerance " + fmt(tolerance);
    return r;
}

CheckResult check_meta_anchor(int seeds, std::uint64_t seed0, double min_cosine, double max_norm_err) {
    CheckResult r;
    r.name = "meta_anchor";
    const double lr = 0.1;
    double worst_cos = 1.0;
    double worst_norm = 0.0;
    for (int s = 0; s < seeds; ++s) {
        Instance inst = make_instance(rng::mix(seed0, 0xA0C, static_cast<std::uint64_t>(s)), true);

        // Implemented path: one window of k=1 starting from a zero carry.
        ParamVector g_w = training_loss_grad_w(inst, inst.w, inst.alpha);
        ParamVector w_next = inst.w.plus_scaled(g_w, -lr);
        auto ml = bilevel::meta_loss_grad(inst.ccfg, w_next, inst.eval);
        ParamVector v = ml.grad;
        v.scale(lr);
        ParamVector hvp = bilevel::mixed_hvp_fd(inst.ccfg, inst.lcfg, inst.alpha, inst.w, inst.noisy,
                                                inst.clean_train, v, 0.01);
        bilevel::MetaGradState state = bilevel::MetaGradState::make(inst.alpha, 1, lr);
        bilevel::accumulate_meta_grad(state, g_w, ml.grad, hvp);
        const ParamVector& implemented = state.prev_meta_grad;

        // Oracle: FD over alpha of the fully unrolled one-step objective.
        auto unrolled = [&](const ParamVector& alpha) {
            ParamVector g = training_loss_grad_w(inst, inst.w, alpha);
            ParamVector w1 = inst.w.plus_scaled(g, -lr);
            diff::Graph eg;
            auto eout = classifier_forward(eg, inst.ccfg, w1, inst.eval.x);
            auto et = eg.input(one_hot(inst.eval.labels, inst.ccfg.num_classes));
            return eg.value(soft_cross_entropy(eg, et, eout.logits)).item();
        };
        const double h = 1e-5;
        ParamVector oracle = ParamVector::zeros_like(inst.alpha);
        ParamVector probe = inst.alpha;
        for (std::size_t seg = 0; seg < probe.segments().size(); ++seg) {
            Tensor& t = probe.segments()[seg].tensor;
            for (std::size_t i = 0; i < t.size(); ++i) {
                const double saved = t.at(i);
                t.at(i) = saved + h;
                const double up = unrolled(probe);
                t.at(i) = saved - h;
                const double down = unrolled(probe);
                t.at(i) = saved;
                oracle.segments()[seg].tensor.at(i) = (up - down) / (2.0 * h);
            }
        }

        const double dot = implemented.dot(oracle);
        const double ni = implemented.l2_norm();
        const double no = oracle.l2_norm();
        const double cosine = dot / std::max(1e-30, ni * no);
        const double norm_err = std::abs(ni - no) / std::max(1e-30, no);
        worst_cos = std::min(worst_cos, cosine);
        worst_norm = std::max(worst_norm, norm_err);
    }
    r.worst = worst_cos;
    r.passed = worst_cos >= min_cosine && worst_norm <= max_norm_err;
    r.detail = std::to_string(seeds) + " seeds, min cosine " + fmt(worst_cos) + " (need >= " +
               fmt(min_cosine) + "), max norm err " + fmt(worst_norm) + " (need <= " + fmt(max_norm_err) + ")";
    return r;
}

CheckResult check_mixed_hvp(int instances, std::uint64_t seed, double tolerance) {
    CheckResult r;
    r.name = "mixed_hvp";
    double worst = 0.0;
    for (int n = 0; n < instances; ++n) {
        Instance inst = make_instance(rng::mix(seed, 0xF0D, static_cast<std::uint64_t>(n)), true);
        rng::Engine e(rng::mix(seed, 0xB0B, static_cast<std::uint64_t>(n)));
        ParamVector v = ParamVector::zeros_like(inst.w);
        for (auto& seg : v.segments()) {
            for (std::size_t i = 0; i < seg.tensor.size(); ++i) seg.tensor.at(i) = e.normal(0.0, 1.0);
        }

        ParamVector implemented = bilevel::mixed_hvp_fd(inst.ccfg, inst.lcfg, inst.alpha, inst.w,
                                                        inst.noisy, inst.clean_train, v, 0.01);

        // Forward-only oracle: s(alpha) = directional derivative of the loss
        // along v in w (features pinned at the centre, like the update's own
        // gradient), then FD of s over each alpha coordinate.
        const Tensor h0 = noisy_features(inst, inst.w);
        const double dv = 1e-4 / std::max(1e-30, v.l2_norm());
        auto slope = [&](const ParamVector& alpha) {
            const double up = frozen_feature_loss(inst, inst.w.plus_scaled(v, dv), alpha, h0);
            const double down = frozen_feature_loss(inst, inst.w.plus_scaled(v, -dv), alpha, h0);
            return (up - down) / (2.0 * dv);
        };
        const double h = 1e-4;
        ParamVector oracle = ParamVector::zeros_like(inst.alpha);
        ParamVector probe = inst.alpha;
        for (std::size_t seg = 0; seg < probe.segments().size(); ++seg) {
            Tensor& t = probe.segments()[seg].tensor;
            for (std::size_t i = 0; i < t.size(); ++i) {
                const double saved = t.at(i);
                t.at(i) = saved + h;
                const double up = slope(probe);
                t.at(i) = saved - h;
                const double down = slope(probe);
                t.at(i) = saved;
                oracle.segments()[seg].tensor.at(i) = (up - down) / (2.0 * h);
            }
        }

        ParamVector diff = implemented.plus_scaled(oracle, -1.0);
        const double rel = diff.l2_norm() / std::max(1e-30, oracle.l2_norm());
        worst = std::max(worst, rel);
    }
    r.worst = worst;
    r.passed = worst <= tolerance;
    r.detail = std::to_string(instances) + " instances, max relative L2 error " + fmt(worst) +
               ", tolerance " + fmt(tolerance);
    return r;
}

std::vector<CheckResult> run_all(std::uint64_t seed) {
    return {
        check_gradient_oracle(100, seed),
        check_stop_gradient(20, seed),
        check_meta_anchor(20, seed),
        check_mixed_hvp(20, seed),
    };
}

} // namespace mlc::checks
