// Serial reference vs OpenMP kernel on the same inputs; set OMP_NUM_THREADS
// to choose the parallel width.

#include <benchmark/benchmark.h>

#include <random>

#include "cts/crf.hpp"
#include "cts/parallel.hpp"
#include "cts/recommenders.hpp"
#include "cts/simulator.hpp"

using namespace cts;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::Parallel : Exec::Serial; }

SimConfig sim(std::size_t n) {
    SimConfig c;
    c.n_conversations = n;
    c.suggestion_weights = default_target_distribution();
    return c;
}

const Corpus& labeled() {
    static const Corpus c = [] {
        Corpus out = generate_corpus(sim(2000));
        for (Conversation& conv : out.conversations) conv = assign_training_labels(conv);
        return out;
    }();
    return c;
}

void BM_CrfNll(benchmark::State& state) {
    static const std::vector<crf::Sequence> data = crf::build_dataset(labeled(), {});
    crf::CrfModel m = crf::CrfModel::make(fv_layout::kDim);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> w(0, 0.1);
    for (double& x : m.weights) x = w(rng);
    std::vector<double> g(m.n_weights());
    for (auto _ : state) benchmark::DoNotOptimize(crf::nll_and_gradient(m, data, 0.01, g, exec_of(state)));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * data.size()));
}

void BM_Knn(benchmark::State& state) {
    static const std::vector<TrainingUser> users = [] {
        std::vector<TrainingUser> u = build_training_users(labeled());
        std::vector<TrainingUser> big;
        for (int rep = 0; rep < 25; ++rep)
            for (TrainingUser t : u) {
                t.id += "#" + std::to_string(rep);
                big.push_back(std::move(t));
            }
        return big;
    }();
    const Conversation& probe = labeled().conversations.front();
    const UserVector u = build_user_vector(probe, static_cast<int>(probe.turns.size()));
    for (auto _ : state) benchmark::DoNotOptimize(knn_neighbors(u, users, kDefaultNeighbors, exec_of(state)));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * users.size()));
}

void BM_GenerateCorpus(benchmark::State& state) {
    const SimConfig cfg = sim(2000);
    for (auto _ : state) benchmark::DoNotOptimize(generate_corpus(cfg, exec_of(state)));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * cfg.n_conversations));
}

}  // namespace

BENCHMARK(BM_CrfNll)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Knn)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GenerateCorpus)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
