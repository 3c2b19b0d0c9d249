#include <benchmark/benchmark.h>

#include <random>

#include "streamvb/design.hpp"
#include "streamvb/mfvb.hpp"
#include "streamvb/secure_sum.hpp"
#include "streamvb/suffstats.hpp"
#include "streamvb/synthdata.hpp"

using namespace streamvb;

namespace {

struct GroupedProblem {
  ModelSpec spec;
  SufficientStats stats;
  QState state;
};

GroupedProblem grouped_problem(std::size_t groups) {
  synth::GroupedConfig gc;
  gc.groups = groups;
  gc.n = 25 * groups;
  GroupedProblem p{synth::grouped_spec(gc), SufficientStats(0), {}};
  const Design d(p.spec);
  p.stats = d.stats(synth::gen_grouped_stream(1, gc));
  p.state = QState::initial(p.spec);
  p.state.mu_inv_sigeps = 4.0;
  return p;
}

void BM_SigmaDense(benchmark::State& st) {
  const auto p = grouped_problem(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(sigma_dense(p.stats, p.state, p.spec));
}

void BM_SigmaBlockFast(benchmark::State& st) {
  const auto p = grouped_problem(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(sigma_block_fast(p.stats, p.state, p.spec));
}

void BM_Accumulate(benchmark::State& st) {
  const auto P = static_cast<Eigen::Index>(st.range(0));
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  Eigen::VectorXd c(P);
  for (auto& v : c) v = z(rng);
  SufficientStats s(static_cast<std::size_t>(P));
  for (auto _ : st) {
    s.add(c, 0.5);
    benchmark::ClobberMemory();
  }
  st.SetItemsProcessed(st.iterations());
}

void BM_SecureMerge(benchmark::State& st) {
  const auto B = static_cast<std::size_t>(st.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  std::vector<SufficientStats> parties;
  Eigen::VectorXd c(20);
  for (std::size_t b = 0; b < B; ++b) {
    SufficientStats s(20);
    for (int i = 0; i < 50; ++i) {
      for (auto& v : c) v = z(rng);
      s.add(c, z(rng));
    }
    parties.push_back(s);
  }
  std::uint64_t seed = 0;
  for (auto _ : st) benchmark::DoNotOptimize(secure_merge(parties, ++seed));
}

}  // namespace

BENCHMARK(BM_SigmaDense)->Arg(20)->Arg(100)->Arg(200)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SigmaBlockFast)->Arg(20)->Arg(100)->Arg(200)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Accumulate)->Arg(10)->Arg(50)->Arg(200);
BENCHMARK(BM_SecureMerge)->Arg(3)->Arg(10)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
