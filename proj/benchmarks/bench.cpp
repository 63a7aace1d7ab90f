#include "mlc/bilevel.hpp"
#include "mlc/graph.hpp"
#include "mlc/models.hpp"
#include "mlc/noise.hpp"
#include "mlc/rng.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace mlc;

Tensor random_tensor(std::vector<int> shape, rng::Engine& e) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = e.uniform(-1.0, 1.0);
    return t;
}

struct Workload {
    ClassifierConfig ccfg;
    LcnConfig lcfg;
    ParamVector w;
    ParamVector alpha;
    data::Split noisy;
    data::Split clean;
};

Workload make_workload(int batch) {
    Workload wl;
    wl.ccfg = ClassifierConfig{2, {16, 16}, 4, false};
    wl.lcfg = LcnConfig{4, 16, wl.ccfg.feature_dim(), 32};
    wl.w = init_classifier(wl.ccfg, 11);
    wl.alpha = init_lcn(wl.lcfg, 12);
    rng::Engine e(13);
    wl.noisy.x = random_tensor({batch, 2}, e);
    wl.clean.x = random_tensor({batch / 5, 2}, e);
    for (int i = 0; i < batch; ++i) wl.noisy.labels.push_back(static_cast<int>(e.bounded(4)));
    for (int i = 0; i < batch / 5; ++i) wl.clean.labels.push_back(static_cast<int>(e.bounded(4)));
    return wl;
}

void bm_matmul_forward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    rng::Engine e(1);
    Tensor a = random_tensor({n, n}, e);
    Tensor b = random_tensor({n, n}, e);
    for (auto _ : state) {
        diff::Graph g;
        auto out = g.matmul(g.input(a), g.input(b));
        benchmark::DoNotOptimize(g.value(out).at(0, 0));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * n * n);
}
BENCHMARK(bm_matmul_forward)->Arg(32)->Arg(128);

void bm_matmul_backward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    rng::Engine e(2);
    Tensor a = random_tensor({n, n}, e);
    Tensor b = random_tensor({n, n}, e);
    for (auto _ : state) {
        diff::Graph g;
        auto out = g.mean_all(g.matmul(g.param("a", a), g.param("b", b)));
        auto grads = g.backward(out);
        benchmark::DoNotOptimize(grads.at("a").at(0, 0));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * n * n);
}
BENCHMARK(bm_matmul_backward)->Arg(32)->Arg(128);

void bm_training_loss_backward(benchmark::State& state) {
    Workload wl = make_workload(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        diff::Graph g;
        auto parts = bilevel::build_training_loss(g, wl.ccfg, wl.lcfg, wl.w, wl.alpha, wl.noisy,
                                                  wl.clean, true);
        auto grads = g.backward(parts.loss);
        benchmark::DoNotOptimize(grads.in_layout(wl.w).l2_norm());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_training_loss_backward)->Arg(100)->Arg(500);

void bm_main_step(benchmark::State& state) {
    Workload wl = make_workload(static_cast<int>(state.range(0)));
    bilevel::SgdMomentum opt(0.1, 0.9, wl.w);
    for (auto _ : state) {
        auto out = bilevel::main_step(wl.ccfg, wl.lcfg, wl.w, wl.alpha, wl.noisy, wl.clean, opt, true);
        benchmark::DoNotOptimize(out.loss);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_main_step)->Arg(100)->Arg(500);

void bm_mixed_hvp(benchmark::State& state) {
    Workload wl = make_workload(static_cast<int>(state.range(0)));
    rng::Engine e(3);
    ParamVector v = ParamVector::zeros_like(wl.w);
    for (auto& seg : v.segments()) {
        for (std::size_t i = 0; i < seg.tensor.size(); ++i) seg.tensor.at(i) = e.normal(0.0, 1.0);
    }
    for (auto _ : state) {
        ParamVector h = bilevel::mixed_hvp_fd(wl.ccfg, wl.lcfg, wl.alpha, wl.w, wl.noisy, wl.clean,
                                              v, 0.01);
        benchmark::DoNotOptimize(h.l2_norm());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_mixed_hvp)->Arg(100)->Arg(500);

void bm_noise_inject(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    rng::Engine e(4);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int& l : labels) l = static_cast<int>(e.bounded(10));
    noise::NoiseSpec spec{noise::Kind::Flip, 0.6, 10, 99};
    for (auto _ : state) {
        auto noisy = noise::inject(labels, spec);
        benchmark::DoNotOptimize(noisy.back());
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_noise_inject)->Arg(10000)->Arg(100000);

} // namespace

BENCHMARK_MAIN();
