#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "lsf/feature_pipeline.hpp"
#include "lsf/lsfnet.hpp"
#include "lsf/similarity_index.hpp"

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

std::vector<int> round_robin(std::size_t n, int classes) {
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
  return out;
}

void BM_Encode(benchmark::State& state) {
  const auto model = lsf::init_model({426, 256, 128}, 6, 1);
  const auto rows = gaussian(state.range(0), 426, 2, 0.05);
  for (auto _ : state) benchmark::DoNotOptimize(lsf::encode(model, rows));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Encode)->Arg(50)->Arg(500)->Unit(benchmark::kMicrosecond);

void BM_TrainStepPair(benchmark::State& state) {
  auto model = lsf::init_model({426, 256, 128}, 6, 3);
  const auto rows = gaussian(state.range(0), 426, 4, 0.05);
  const auto labels = round_robin(static_cast<std::size_t>(state.range(0)), 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lsf::train_step_ae(model, rows, 1e-3));
    benchmark::DoNotOptimize(lsf::train_step_cls(model, rows, labels, 1e-2));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStepPair)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_FisherScores(benchmark::State& state) {
  const auto features = gaussian(state.range(0), 128, 5);
  const auto labels = round_robin(static_cast<std::size_t>(state.range(0)), 6);
  for (auto _ : state) benchmark::DoNotOptimize(lsf::fisher_scores(features, labels, 6));
}
BENCHMARK(BM_FisherScores)->Arg(600)->Arg(6000)->Unit(benchmark::kMicrosecond);

// Index query against the exhaustive scan it replaces.
struct IndexFixture {
  explicit IndexFixture(Eigen::Index members) : features(gaussian(members, 64, 6)) {
    labels = round_robin(static_cast<std::size_t>(members), 6);
    for (Eigen::Index i = 0; i < members; ++i) ids.push_back("v" + std::to_string(i));
  }
  Eigen::MatrixXd features;
  std::vector<int> labels;
  std::vector<std::string> ids;
};

void BM_QueryKnn(benchmark::State& state) {
  const IndexFixture f(state.range(0));
  const auto index = lsf::build_index(f.features, f.labels, f.ids, state.range(1), 7, 6);
  const Eigen::VectorXd q = gaussian(64, 1, 8).col(0);
  for (auto _ : state) benchmark::DoNotOptimize(lsf::classify(index, q, 64));
}
BENCHMARK(BM_QueryKnn)->Args({600, 10})->Args({600, 50})->Args({6000, 30})->Unit(benchmark::kMicrosecond);

void BM_BruteForce1NN(benchmark::State& state) {
  const IndexFixture f(state.range(0));
  const Eigen::VectorXd q = gaussian(64, 1, 8).col(0);
  for (auto _ : state) {
    Eigen::Index best = 0;
    (f.features.rowwise() - q.transpose()).rowwise().squaredNorm().minCoeff(&best);
    benchmark::DoNotOptimize(f.labels[static_cast<std::size_t>(best)]);
  }
}
BENCHMARK(BM_BruteForce1NN)->Arg(600)->Arg(6000)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
