#include "mlc/bilevel.hpp"

#include "mlc/error.hpp"
#include "mlc/log.hpp"
#include "mlc/rng.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace mlc::bilevel {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

} // namespace

void TrainConfig::validate() const {
    if (k < 1 || k > 100) throw ConfigError("train: k must lie in [1, 100], got " + std::to_string(k));
    if (!(main_lr > 0.0)) throw ConfigError("train: main_lr must be > 0, got " + fmt(main_lr));
    if (!(meta_lr > 0.0)) throw ConfigError("train: meta_lr must be > 0, got " + fmt(meta_lr));
    if (main_momentum < 0.0 || main_momentum >= 1.0) {
        throw ConfigError("train: main_momentum must lie in [0, 1), got " + fmt(main_momentum));
    }
    if (meta_momentum < 0.0 || meta_momentum >= 1.0) {
        throw ConfigError("train: meta_momentum must lie in [0, 1), got " + fmt(meta_momentum));
    }
    if (batch_size_noisy < 1) throw ConfigError("train: batch_size_noisy must be >= 1");
    if (batch_size_clean < 2) throw ConfigError("train: batch_size_clean must be >= 2 (it is split in half)");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1, got " + std::to_string(epochs));
    if (!(fd_epsilon_scale > 0.0)) {
        throw ConfigError("train: fd_epsilon_scale must be > 0, got " + fmt(fd_epsilon_scale));
    }
}

SgdMomentum::SgdMomentum(double lr, double momentum, const ParamVector& layout)
    : lr_(lr), momentum_(momentum), buffer_(ParamVector::zeros_like(layout)) {
    if (lr < 0.0) throw ConfigError("sgd: learning rate must be >= 0, got " + fmt(lr));
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("sgd: momentum must lie in [0, 1), got " + fmt(momentum));
}

ParamVector SgdMomentum::step(const ParamVector& params, const ParamVector& grad) {
    check_same_layout(buffer_, grad, "sgd step");
    buffer_.scale(momentum_);
    buffer_.add_scaled(grad, 1.0);
    return params.plus_scaled(buffer_, -lr_);
}

MetaOptimizer::MetaOptimizer(MetaOpt kind, double lr, double momentum, const ParamVector& layout)
    : kind_(kind), lr_(lr), momentum_(momentum), buffer_(ParamVector::zeros_like(layout)),
      second_(ParamVector::zeros_like(layout)) {
    if (lr < 0.0) throw ConfigError("meta optimizer: learning rate must be >= 0, got " + fmt(lr));
    if (momentum < 0.0 || momentum >= 1.0) {
        throw ConfigError("meta optimizer: momentum must lie in [0, 1), got " + fmt(momentum));
    }
}

ParamVector MetaOptimizer::step(const ParamVector& params, const ParamVector& grad) {
    check_same_layout(buffer_, grad, "meta step");
    if (kind_ == MetaOpt::SgdMomentum) {
        buffer_.scale(momentum_);
        buffer_.add_scaled(grad, 1.0);
        return params.plus_scaled(buffer_, -lr_);
    }
    // Adam-style adaptive update; beta1 comes from the momentum knob.
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    ++t_;
    buffer_.scale(momentum_);
    buffer_.add_scaled(grad, 1.0 - momentum_);
    ParamVector out = params;
    const double bias1 = 1.0 - std::pow(momentum_, static_cast<double>(t_));
    const double bias2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t s = 0; s < out.segments().size(); ++s) {
        auto& ov = out.segments()[s].tensor.values();
        auto& mv = buffer_.segments()[s].tensor.values();
        auto& vv = second_.segments()[s].tensor.values();
        const auto& gv = grad.segments()[s].tensor.values();
        for (std::size_t i = 0; i < ov.size(); ++i) {
            vv[i] = beta2 * vv[i] + (1.0 - beta2) * gv[i] * gv[i];
            const double mhat = mv[i] / bias1;
            const double vhat = vv[i] / bias2;
            ov[i] -= lr_ * mhat / (std::sqrt(vhat) + eps);
        }
    }
    return out;
}

MetaGradState MetaGradState::make(const ParamVector& alpha_layout, int k, double lr) {
    if (k < 1 || k > 100) throw ConfigError("meta state: k must lie in [1, 100], got " + std::to_string(k));
    MetaGradState s;
    s.prev_meta_grad = ParamVector::zeros_like(alpha_layout);
    s.lr_diag = lr;
    s.k = k;
    s.steps_since_meta_update = 0;
    return s;
}

void MetaGradState::reset() {
    prev_meta_grad.fill(0.0);
    steps_since_meta_update = 0;
}

CleanBatchSplit split_clean_batch(const data::Split& clean_batch, std::uint64_t seed) {
    const int n = clean_batch.size();
    if (n < 2) throw DataError("split_clean_batch: batch of " + std::to_string(n) + " cannot be halved");
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    rng::Engine e(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(e.bounded(i))]);
    }
    const int eval_count = (n + 1) / 2;
    std::vector<int> eval_rows(order.begin(), order.begin() + eval_count);
    std::vector<int> train_rows(order.begin() + eval_count, order.end());
    return CleanBatchSplit{data::take_rows(clean_batch, eval_rows), data::take_rows(clean_batch, train_rows)};
}

TrainLossParts build_training_loss(diff::Graph& g, const ClassifierConfig& ccfg, const LcnConfig& lcfg,
                                   const ParamVector& w, const ParamVector& alpha,
                                   const data::Split& noisy_batch, const data::Split& clean_train_half,
                                   bool use_lcn) {
    const int bn = noisy_batch.size();
    const int bc = clean_train_half.size();
    if (bn < 1) throw DataError("training loss: noisy batch is empty");

    auto noisy_out = classifier_forward(g, ccfg, w, noisy_batch.x);
    diff::ValueId targets;
    if (use_lcn) {
        targets = lcn_forward(g, lcfg, alpha, noisy_out.features, noisy_batch.labels);
    } else {
        targets = g.input(one_hot(noisy_batch.labels, ccfg.num_classes));
    }
    auto loss_noisy = soft_cross_entropy(g, targets, noisy_out.logits);

    TrainLossParts parts;
    parts.corrected = g.value(targets);
    validate_soft_label_rows(parts.corrected);
    parts.loss_noisy = g.value(loss_noisy).item();
    if (bc == 0) {
        parts.loss = loss_noisy;
        return parts;
    }

    auto clean_out = classifier_forward(g, ccfg, w, clean_train_half.x);
    auto clean_targets = g.input(one_hot(clean_train_half.labels, ccfg.num_classes));
    auto loss_clean = soft_cross_entropy(g, clean_targets, clean_out.logits);
    const double total = bn + bc;
    parts.loss = g.add(g.scale(loss_noisy, bn / total), g.scale(loss_clean, bc / total));
    return parts;
}

MainStepOut main_step(const ClassifierConfig& ccfg, const LcnConfig& lcfg, const ParamVector& w,
                      const ParamVector& alpha, const data::Split& noisy_batch,
                      const data::Split& clean_train_half, SgdMomentum& opt, bool use_lcn) {
    diff::Graph g;
    auto parts = build_training_loss(g, ccfg, lcfg, w, alpha, noisy_batch, clean_train_half, use_lcn);
    const double loss = g.value(parts.loss).item();
    auto grads = g.backward(parts.loss);
    ParamVector g_w = grads.in_layout(w);
    const double grad_norm = g_w.all_finite() ? g_w.l2_norm() : std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(loss) || loss > 1e6 || !g_w.all_finite()) {
        throw DivergenceError("main_step diverged: loss=" + fmt(loss) + ", |g_w|=" + fmt(grad_norm));
    }

    MainStepOut out;
    out.g_w = std::move(g_w);
    out.w_next = opt.step(w, out.g_w);
    out.loss = loss;
    out.loss_noisy = parts.loss_noisy;
    out.corrected = std::move(parts.corrected);
    return out;
}

MetaLossOut meta_loss_grad(const ClassifierConfig& ccfg, const ParamVector& w,
                           const data::Split& eval_half) {
    if (eval_half.size() == 0) throw DataError("meta_loss_grad: eval half is empty");
    diff::Graph g;
    auto out = classifier_forward(g, ccfg, w, eval_half.x);
    auto targets = g.input(one_hot(eval_half.labels, ccfg.num_classes));
    auto loss = soft_cross_entropy(g, targets, out.logits);
    const double value = g.value(loss).item();
    ParamVector grad = g.backward(loss).in_layout(w);
    if (!std::isfinite(value) || !grad.all_finite()) {
        throw DivergenceError("meta_loss_grad diverged: loss=" + fmt(value));
    }
    return MetaLossOut{value, std::move(grad)};
}

ParamVector mixed_hvp_fd(const AlphaGradFn& alpha_grad, const ParamVector& alpha_layout,
                         const ParamVector& w, const ParamVector& v, double fd_epsilon_scale) {
    if (!(fd_epsilon_scale > 0.0)) {
        throw ConfigError("mixed_hvp_fd: fd_epsilon_scale must be > 0, got " + fmt(fd_epsilon_scale));
    }
    check_same_layout(w, v, "mixed_hvp_fd");
    if (!v.all_finite()) throw DivergenceError("mixed_hvp_fd: perturbation vector is not finite");
    const double norm = v.l2_norm();
    if (norm < 1e-300) return ParamVector::zeros_like(alpha_layout);

    const double eps = fd_epsilon_scale / norm;
    ParamVector up = alpha_grad(w.plus_scaled(v, eps));
    ParamVector down = alpha_grad(w.plus_scaled(v, -eps));
    check_same_layout(up, alpha_layout, "mixed_hvp_fd");
    up.add_scaled(down, -1.0);
    up.scale(1.0 / (2.0 * eps));
    return up;
}

ParamVector mixed_hvp_fd(const ClassifierConfig& ccfg, const LcnConfig& lcfg, const ParamVector& alpha,
                         const ParamVector& w, const data::Split& noisy_batch,
                         const data::Split& clean_train_half, const ParamVector& v,
                         double fd_epsilon_scale) {
    // The probes differentiate the same ∇_w that the main update uses, and that
    // gradient holds the LCN's feature input fixed; so the features stay pinned
    // at the centre w while only the logits see w ± εv.
    Tensor features_at_w;
    {
        diff::Graph g;
        auto out = classifier_forward(g, ccfg, w, noisy_batch.x);
        features_at_w = g.value(out.features);
    }
    AlphaGradFn fn = [&](const ParamVector& w_probe) {
        diff::Graph g;
        auto noisy_out = classifier_forward(g, ccfg, w_probe, noisy_batch.x);
        auto targets = lcn_forward(g, lcfg, alpha, g.input(features_at_w), noisy_batch.labels);
        auto loss = soft_cross_entropy(g, targets, noisy_out.logits);
        const int bn = noisy_batch.size();
        const int bc = clean_train_half.size();
        if (bc > 0) {
            auto clean_out = classifier_forward(g, ccfg, w_probe, clean_train_half.x);
            auto clean_targets = g.input(one_hot(clean_train_half.labels, ccfg.num_classes));
            auto loss_clean = soft_cross_entropy(g, clean_targets, clean_out.logits);
            const double total = bn + bc;
            loss = g.add(g.scale(loss, bn / total), g.scale(loss_clean, bc / total));
        }
        return g.backward(loss).in_layout(alpha);
    };
    return mixed_hvp_fd(fn, alpha, w, v, fd_epsilon_scale);
}

void accumulate_meta_grad(MetaGradState& state, const ParamVector& g_w, const ParamVector& g_w_next,
                          const ParamVector& hvp_term) {
    if (state.steps_since_meta_update >= state.k) {
        throw StateError("accumulate_meta_grad: window already holds " + std::to_string(state.k) +
                         " accumulations; meta_step must fire first");
    }
    check_same_layout(g_w, g_w_next, "accumulate_meta_grad");
    check_same_layout(state.prev_meta_grad, hvp_term, "accumulate_meta_grad");
    if (!g_w.all_finite() || !g_w_next.all_finite() || !hvp_term.all_finite()) {
        throw DivergenceError("accumulate_meta_grad: non-finite input gradients");
    }

    const double gsq = g_w.dot(g_w);
    double c = 0.0;
    if (gsq < 1e-20) {
        log::warn("accumulate_meta_grad: ‖g_w‖² underflow (" + fmt(gsq) + "), dropping the carry term");
    } else {
        c = (1.0 - state.lr_diag) * g_w_next.dot(g_w) / gsq;
    }
    state.prev_meta_grad.scale(c);
    state.prev_meta_grad.add_scaled(hvp_term, -1.0);
    ++state.steps_since_meta_update;
}

ParamVector meta_step(const ParamVector& alpha, MetaGradState& state, MetaOptimizer& opt) {
    if (state.steps_since_meta_update != state.k) {
        throw StateError("meta_step called mid-window: " + std::to_string(state.steps_since_meta_update) +
                         " of " + std::to_string(state.k) + " accumulations done");
    }
    ParamVector next = opt.step(alpha, state.prev_meta_grad);
    state.reset();
    return next;
}

TrainData training_view(const data::DatasetBundle& bundle) {
    return TrainData{bundle.clean, bundle.noisy, bundle.test, bundle.num_classes};
}

namespace {

double scheduled_lr(const TrainConfig& tcfg, int epoch) {
    if (!tcfg.lr_decay) return tcfg.main_lr;
    const int first = static_cast<int>(0.6 * tcfg.epochs);
    const int second = static_cast<int>(0.8 * tcfg.epochs);
    if (epoch >= second) return tcfg.main_lr * 0.01;
    if (epoch >= first) return tcfg.main_lr * 0.1;
    return tcfg.main_lr;
}

struct LoopSpec {
    const data::Split* feed = nullptr;  // stream that plays the noisy role
    bool use_lcn = false;
    bool meta_on = false;
};

TrainResult run_loop(const TrainData& data, const ClassifierConfig& ccfg, const LcnConfig* lcfg,
                     const TrainConfig& tcfg, const LoopSpec& loop, const StepObserver& observer) {
    ccfg.validate();
    tcfg.validate();
    if (loop.feed->size() < 1) throw DataError("train: training feed is empty");
    if (loop.meta_on && data.clean.size() < 2 * tcfg.batch_size_clean) {
        throw DataError("train: clean split of " + std::to_string(data.clean.size()) +
                        " cannot sustain clean batches of " + std::to_string(tcfg.batch_size_clean) +
                        " (need at least twice the batch size)");
    }

    TrainResult result;
    result.w = init_classifier(ccfg, rng::mix(tcfg.seed, 2));
    if (lcfg) {
        lcfg->validate();
        result.alpha = init_lcn(*lcfg, rng::mix(tcfg.seed, 3));
    }

    SgdMomentum main_opt(tcfg.main_lr, tcfg.main_momentum, result.w);
    MetaOptimizer meta_opt(tcfg.meta_optimizer, tcfg.meta_lr, tcfg.meta_momentum, result.alpha);
    MetaGradState state = MetaGradState::make(result.alpha, tcfg.k, tcfg.main_lr);

    data::BatchCycler feed_cycler(loop.feed->size(), tcfg.batch_size_noisy, rng::mix(tcfg.seed, 4));
    data::BatchCycler clean_cycler(loop.meta_on ? data.clean.size() : 1,
                                   loop.meta_on ? tcfg.batch_size_clean : 1, rng::mix(tcfg.seed, 5));
    const int steps_per_epoch = feed_cycler.batches_per_epoch();

    data::Split empty_clean;
    empty_clean.x = Tensor({0, loop.feed->x.cols()});

    const LcnConfig dummy_lcfg{};
    const LcnConfig& lcn_cfg = lcfg ? *lcfg : dummy_lcfg;

    int global_step = 0;
    try {
        for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
            const double lr = scheduled_lr(tcfg, epoch);
            main_opt.set_lr(lr);
            state.lr_diag = lr;

            double sum_noisy = 0.0, sum_clean = 0.0;
            for (int step = 0; step < steps_per_epoch; ++step, ++global_step) {
                data::Split noisy_batch = data::take_rows(*loop.feed, feed_cycler.next());
                double loss_noisy, loss_clean;
                bool meta_updated = false;

                if (loop.meta_on) {
                    data::Split clean_batch = data::take_rows(data.clean, clean_cycler.next());
                    CleanBatchSplit halves =
                        split_clean_batch(clean_batch, rng::mix(tcfg.seed, 6, static_cast<std::uint64_t>(global_step)));

                    MainStepOut ms = main_step(ccfg, lcn_cfg, result.w, result.alpha, noisy_batch,
                                               halves.train_half, main_opt, loop.use_lcn);
                    MetaLossOut ml = meta_loss_grad(ccfg, ms.w_next, halves.eval_half);

                    ParamVector v = ml.grad;
                    v.scale(state.lr_diag);
                    ParamVector hvp = mixed_hvp_fd(ccfg, lcn_cfg, result.alpha, result.w, noisy_batch,
                                                   halves.train_half, v, tcfg.fd_epsilon_scale);
                    accumulate_meta_grad(state, ms.g_w, ml.grad, hvp);
                    if (state.steps_since_meta_update == state.k) {
                        result.alpha = meta_step(result.alpha, state, meta_opt);
                        ++result.history.meta_updates;
                        meta_updated = true;
                    }
                    result.w = std::move(ms.w_next);
                    loss_noisy = ms.loss_noisy;
                    loss_clean = ml.loss;
                } else {
                    MainStepOut ms = main_step(ccfg, lcn_cfg, result.w, result.alpha, noisy_batch,
                                               empty_clean, main_opt, false);
                    result.w = std::move(ms.w_next);
                    loss_noisy = ms.loss;
                    loss_clean = std::numeric_limits<double>::quiet_NaN();
                }

                sum_noisy += loss_noisy;
                sum_clean += loss_clean;
                result.history.steps.push_back(StepRecord{global_step, epoch, loss_noisy, loss_clean});
                if (observer) {
                    observer(StepEvent{global_step, epoch, result.w, result.alpha, loss_noisy, loss_clean,
                                       state.steps_since_meta_update, meta_updated});
                }
            }

            EpochRecord er;
            er.epoch = epoch;
            er.mean_loss_noisy = sum_noisy / steps_per_epoch;
            er.mean_loss_clean = sum_clean / steps_per_epoch;
            er.test_accuracy = data.test.size() > 0
                                   ? dataset_accuracy(ccfg, result.w, data.test.x, data.test.labels)
                                   : std::numeric_limits<double>::quiet_NaN();
            result.history.epochs.push_back(er);
            log::debug("epoch " + std::to_string(epoch) + ": noisy_loss " + fmt(er.mean_loss_noisy) +
                       " clean_loss " + fmt(er.mean_loss_clean) + " test_acc " +
                       fmt(er.test_accuracy));
        }
    } catch (const DivergenceError& e) {
        result.diverged = true;
        result.divergence_message = e.what();
        log::error(std::string("training aborted: ") + e.what());
    }
    return result;
}

} // namespace

TrainResult train_mlc(const TrainData& data, const ClassifierConfig& ccfg, const LcnConfig& lcfg,
                      const TrainConfig& tcfg, const StepObserver& observer) {
    LoopSpec loop;
    loop.feed = &data.noisy;
    loop.use_lcn = !tcfg.freeze_lcn_identity;
    loop.meta_on = !tcfg.freeze_lcn_identity;
    return run_loop(data, ccfg, &lcfg, tcfg, loop, observer);
}

TrainResult train_baseline(Baseline method, const TrainData& data, const ClassifierConfig& ccfg,
                           const TrainConfig& tcfg, const StepObserver& observer) {
    data::Split feed;
    switch (method) {
    case Baseline::CleanOnly: feed = data.clean; break;
    case Baseline::NoisyOnly: feed = data.noisy; break;
    case Baseline::CleanPlusNoisy: feed = data::concat_splits(data.clean, data.noisy); break;
    }
    LoopSpec loop;
    loop.feed = &feed;
    return run_loop(data, ccfg, nullptr, tcfg, loop, observer);
}

} // namespace mlc::bilevel
