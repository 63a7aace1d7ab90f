#pragma once

#include "mlc/data.hpp"
#include "mlc/models.hpp"
#include "mlc/param_vector.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mlc::bilevel {

enum class MetaOpt { SgdMomentum, Adaptive };

struct TrainConfig {
    int k = 1;                        // main steps per meta update
    double main_lr = 0.1;
    double meta_lr = 0.01;
    double main_momentum = 0.9;
    MetaOpt meta_optimizer = MetaOpt::SgdMomentum;
    double meta_momentum = 0.9;
    int batch_size_noisy = 100;
    int batch_size_clean = 32;
    int epochs = 10;
    std::uint64_t seed = 0;
    double fd_epsilon_scale = 0.01;
    bool lr_decay = true;             // x0.1 at 60% and x0.01 at 80% of epochs
    bool freeze_lcn_identity = false; // corrected labels pinned to one-hot(y'); meta machinery off

    void validate() const;
};

class SgdMomentum {
public:
    SgdMomentum(double lr, double momentum, const ParamVector& layout);

    ParamVector step(const ParamVector& params, const ParamVector& grad);
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

private:
    double lr_;
    double momentum_;
    ParamVector buffer_;
};

class MetaOptimizer {
public:
    MetaOptimizer(MetaOpt kind, double lr, double momentum, const ParamVector& layout);

    ParamVector step(const ParamVector& params, const ParamVector& grad);

private:
    MetaOpt kind_;
    double lr_;
    double momentum_;
    ParamVector buffer_;   // momentum buffer / first moment
    ParamVector second_;   // adaptive second moment
    long long t_ = 0;
};

// Rolling state of the meta-gradient recursion across one k-step window.
// steps_since_meta_update counts completed accumulations: 0 at a window start,
// k when the window is complete and the meta step may fire.
struct MetaGradState {
    ParamVector prev_meta_grad;
    double lr_diag = 0.0;  // the uniform diagonal of the step-size matrix
    int k = 1;
    int steps_since_meta_update = 0;

    static MetaGradState make(const ParamVector& alpha_layout, int k, double lr);
    void reset();
};

// Deterministic 50/50 split of a clean batch; the eval half takes the extra
// example when the batch is odd.
struct CleanBatchSplit {
    data::Split eval_half;
    data::Split train_half;
};
CleanBatchSplit split_clean_batch(const data::Split& clean_batch, std::uint64_t seed);

struct TrainLossParts {
    diff::ValueId loss;     // mean soft cross-entropy over noisy ∪ clean_train rows
    double loss_noisy;      // the noisy-rows part alone
    Tensor corrected;       // soft targets used for the noisy rows [B, C]
};

// Shared forward construction for main_step and the HVP probes: the noisy rows
// train against LCN-corrected soft labels (or one-hot noisy labels when
// use_lcn is false), the clean train half against one-hot true labels.
TrainLossParts build_training_loss(diff::Graph& g, const ClassifierConfig& ccfg, const LcnConfig& lcfg,
                                   const ParamVector& w, const ParamVector& alpha,
                                   const data::Split& noisy_batch, const data::Split& clean_train_half,
                                   bool use_lcn);

struct MainStepOut {
    ParamVector w_next;
    ParamVector g_w;        // plain gradient at w (pre-momentum), for the recursion
    double loss;
    double loss_noisy;
    Tensor corrected;
};

MainStepOut main_step(const ClassifierConfig& ccfg, const LcnConfig& lcfg, const ParamVector& w,
                      const ParamVector& alpha, const data::Split& noisy_batch,
                      const data::Split& clean_train_half, SgdMomentum& opt, bool use_lcn);

struct MetaLossOut {
    double loss;
    ParamVector grad;       // over w
};

// Mean one-hot cross-entropy on the clean eval half and its gradient in w.
MetaLossOut meta_loss_grad(const ClassifierConfig& ccfg, const ParamVector& w,
                           const data::Split& eval_half);

// Gradient (over alpha) of the training loss at the given main-model weights.
using AlphaGradFn = std::function<ParamVector(const ParamVector& w)>;

// Central-difference probe of the mixed second derivative: perturbs w by
// ±epsilon·v with epsilon = fd_epsilon_scale / ‖v‖ and differences the alpha
// gradients. ‖v‖ = 0 short-circuits to zero (meta loss already stationary).
ParamVector mixed_hvp_fd(const AlphaGradFn& alpha_grad, const ParamVector& alpha_layout,
                         const ParamVector& w, const ParamVector& v, double fd_epsilon_scale);

ParamVector mixed_hvp_fd(const ClassifierConfig& ccfg, const LcnConfig& lcfg, const ParamVector& alpha,
                         const ParamVector& w, const data::Split& noisy_batch,
                         const data::Split& clean_train_half, const ParamVector& v,
                         double fd_epsilon_scale);

// One recursion step:
//   c = <g_w', (1 - lr_diag) * g_w> / ‖g_w‖²
//   prev_meta_grad <- c * prev_meta_grad - hvp_term
// with c forced to 0 when ‖g_w‖² underflows (logged).
void accumulate_meta_grad(MetaGradState& state, const ParamVector& g_w, const ParamVector& g_w_next,
                          const ParamVector& hvp_term);

// Applies the accumulated meta-gradient after a complete window and resets the
// state; throws when called mid-window.
ParamVector meta_step(const ParamVector& alpha, MetaGradState& state, MetaOptimizer& opt);

// What the trainer may see: no hidden true labels.
struct TrainData {
    data::Split clean;
    data::Split noisy;
    data::Split test;
    int num_classes = 0;
};

TrainData training_view(const data::DatasetBundle& bundle);

struct StepRecord {
    int step = 0;
    int epoch = 0;
    double loss_noisy = 0.0;
    double loss_clean = 0.0;
};

struct EpochRecord {
    int epoch = 0;
    double mean_loss_noisy = 0.0;
    double mean_loss_clean = 0.0;
    double test_accuracy = 0.0;
};

struct History {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
    int meta_updates = 0;
};

struct StepEvent {
    int step = 0;
    int epoch = 0;
    const ParamVector& w;
    const ParamVector& alpha;
    double loss_noisy = 0.0;
    double loss_clean = 0.0;
    int steps_since_meta_update = 0;
    bool meta_updated = false;
};
using StepObserver = std::function<void(const StepEvent&)>;

struct TrainResult {
    ParamVector w;
    ParamVector alpha;
    History history;
    bool diverged = false;
    std::string divergence_message;
};

enum class Baseline { CleanOnly, NoisyOnly, CleanPlusNoisy };

TrainResult train_mlc(const TrainData& data, const ClassifierConfig& ccfg, const LcnConfig& lcfg,
                      const TrainConfig& tcfg, const StepObserver& observer = {});

TrainResult train_baseline(Baseline method, const TrainData& data, const ClassifierConfig& ccfg,
                           const TrainConfig& tcfg, const StepObserver& observer = {});

} // namespace mlc::bilevel
