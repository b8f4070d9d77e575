// Serial reference kernels against their OpenMP versions.
//
//   build/kernels_bench --benchmark_filter=Split

#include <benchmark/benchmark.h>

#include "rulecast/ensemble.hpp"
#include "rulecast/kernels.hpp"
#include "rulecast/rng.hpp"
#include "rulecast/rule_dsl.hpp"

using namespace rulecast;

namespace {

constexpr std::size_t kDim = 16;

Dataset gaussian_data(std::size_t n) {
  Rng rng(7);
  Dataset d;
  d.dimension = kDim;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.id = i;
    for (std::size_t f = 0; f < kDim; ++f) s.features.push_back(rng.normal());
    s.label = static_cast<int>(rng.below(2));
    d.samples.push_back(std::move(s));
  }
  return d;
}

// Threshold rules on random features, anchored at random samples, rbf similarity.
MixtureClassifier mixture(const Dataset& d, std::size_t n_rules) {
  Rng rng(11);
  MixtureClassifier m;
  m.hist = LinearModel(kDim);
  for (auto& w : m.hist.weights) w = rng.normal();
  m.feedback.similarity = SimilarityConfig::rbf(2.0);
  for (std::size_t i = 0; i < n_rules; ++i) {
    const auto f = rng.below(kDim);
    const RuleAst rule = RuleAst::branch(RuleAst::compare(f, CmpOp::Greater, rng.normal()),
                                         RuleAst::leaf(Verdict::Class1), RuleAst::leaf(Verdict::Class0));
    const auto& anchor = d.samples[rng.below(d.size())];
    m.feedback = add_rule(std::move(m.feedback), make_feedback_rule(rule, "r" + std::to_string(i), "b", anchor.id, i),
                          rng.normal(), anchor.features);
  }
  return m;
}

struct SplitInput {
  std::vector<double> values;
  std::vector<int> labels;
  std::vector<std::size_t> rows;
};

SplitInput split_input(std::size_t n) {
  const Dataset d = gaussian_data(n);
  SplitInput in;
  for (const auto& s : d.samples) {
    in.values.insert(in.values.end(), s.features.begin(), s.features.end());
    in.labels.push_back(*s.label);
    in.rows.push_back(in.rows.size());
  }
  return in;
}

template <bool Parallel>
void BM_Split(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const SplitInput in = split_input(n);
  const kernels::FeatureMatrix x{in.values, n, kDim};
  for (auto _ : state) {
    auto best = Parallel ? kernels::best_split_parallel(x, in.labels, in.rows, 1)
                         : kernels::best_split_serial(x, in.labels, in.rows, 1);
    benchmark::DoNotOptimize(best);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

template <bool Parallel>
void BM_Predict(benchmark::State& state) {
  const Dataset d = gaussian_data(static_cast<std::size_t>(state.range(0)));
  const MixtureClassifier m = mixture(d, 64);
  for (auto _ : state) {
    auto p = Parallel ? kernels::predict_batch_parallel(m, d) : kernels::predict_batch_serial(m, d);
    benchmark::DoNotOptimize(p.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_Votes(benchmark::State& state) {
  const Dataset d = gaussian_data(static_cast<std::size_t>(state.range(0)));
  const MixtureClassifier m = mixture(d, 64);
  for (auto _ : state) {
    auto v = Parallel ? kernels::vote_matrix_parallel(m.feedback, d) : kernels::vote_matrix_serial(m.feedback, d);
    benchmark::DoNotOptimize(v.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_Bootstrap(benchmark::State& state) {
  Rng rng(3);
  std::vector<std::uint8_t> correct(static_cast<std::size_t>(state.range(0)));
  for (auto& c : correct) c = static_cast<std::uint8_t>(rng.below(2));
  for (auto _ : state) {
    auto a = Parallel ? kernels::bootstrap_accuracies_parallel(correct, 1000, 5)
                      : kernels::bootstrap_accuracies_serial(correct, 1000, 5);
    benchmark::DoNotOptimize(a.data());
  }
}

}  // namespace

BENCHMARK(BM_Split<false>)->Name("Split/serial")->Arg(1000)->Arg(20000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Split<true>)->Name("Split/parallel")->Arg(1000)->Arg(20000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Predict<false>)->Name("Predict/serial")->Arg(2000)->Arg(50000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Predict<true>)->Name("Predict/parallel")->Arg(2000)->Arg(50000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Votes<false>)->Name("Votes/serial")->Arg(2000)->Arg(50000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Votes<true>)->Name("Votes/parallel")->Arg(2000)->Arg(50000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Bootstrap<false>)->Name("Bootstrap/serial")->Arg(400)->Arg(10000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Bootstrap<true>)->Name("Bootstrap/parallel")->Arg(400)->Arg(10000)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
