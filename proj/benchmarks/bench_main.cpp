#include <benchmark/benchmark.h>

#include "pftopics/eval.hpp"
#include "pftopics/inference.hpp"
#include "pftopics/model.hpp"

namespace {

using namespace pftopics;

// K topics on disjoint blocks of the first 80% of the vocabulary, background
// on the rest.
struct Fixture {
  ModelConfig config;
  ModelParams truth;
  Corpus corpus;

  Fixture(int K, int V, std::size_t docs) {
    config.num_topics = K;
    config.switch_prior = 0.2;
    config.target_kind = TargetKind::real;
    const int relevant = V * 4 / 5;
    truth.beta = Eigen::MatrixXd::Constant(K, V, 0.0);
    for (int k = 0; k < K; ++k) {
      for (int v = 0; v < relevant; ++v) truth.beta(k, v) = v % K == k ? 1.0 : 0.05;
      truth.beta.row(k) /= truth.beta.row(k).sum();
    }
    truth.pi = Eigen::VectorXd::Zero(V);
    truth.pi.tail(V - relevant).setConstant(1.0 / (V - relevant));
    truth.eta = Eigen::VectorXd::LinSpaced(K, -2.0, 2.0);
    truth.delta = 0.5;
    std::vector<std::string> terms;
    for (int v = 0; v < V; ++v) terms.push_back("w" + std::to_string(v));
    corpus = sample_corpus(config, truth, Vocabulary(terms), docs, 100, 3).corpus;
  }
};

void BM_ElboGradient(benchmark::State& state) {
  const Fixture f(static_cast<int>(state.range(0)), 500, 400);
  const auto u = init_unconstrained(f.config, 500, 1, &f.corpus);
  GradientOptions opts;
  for (auto _ : state) benchmark::DoNotOptimize(elbo_gradient(f.corpus, f.config, u, opts));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.corpus.num_documents()));
}
BENCHMARK(BM_ElboGradient)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_HeldoutInference(benchmark::State& state) {
  const Fixture f(10, 500, 50);
  const Eigen::VectorXd varphi = Eigen::VectorXd::Constant(500, 0.7);
  TrainOptions opts;
  for (auto _ : state) {
    for (const auto& doc : f.corpus.documents)
      benchmark::DoNotOptimize(infer_heldout(doc, f.truth, f.config, varphi, opts));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.corpus.num_documents()));
}
BENCHMARK(BM_HeldoutInference)->Unit(benchmark::kMillisecond);

void BM_Coherence(benchmark::State& state) {
  const Fixture f(10, 2000, 1000);
  const CooccurrenceTable table(f.corpus);
  for (auto _ : state) benchmark::DoNotOptimize(coherence(f.truth.beta, table, {50, false}));
}
BENCHMARK(BM_Coherence)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
