#include <benchmark/benchmark.h>

#include <random>

#include "chameleon/netmodel.hpp"
#include "chameleon/oracle.hpp"
#include "chameleon/pe_array.hpp"
#include "chameleon/proto_learn.hpp"
#include "chameleon/quant.hpp"
#include "chameleon/scheduler.hpp"

namespace {

using namespace chameleon;

pe::Sequence random_input(int n, int channels, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_int_distribution<int> d(0, quant::kActMax);
  pe::Sequence s(static_cast<std::size_t>(n));
  for (auto& t : s)
    for (int c = 0; c < channels; ++c) t.emplace_back(d(g));
  return s;
}

void BM_ShiftMac(benchmark::State& state) {
  std::int64_t sum = 0;
  for (auto _ : state) {
    for (unsigned code = 0; code < 16; ++code)
      for (int a = 0; a <= quant::kActMax; ++a)
        sum += quant::shift_mac(quant::QAct(a), quant::LogWeight::from_code(code)).value();
    benchmark::DoNotOptimize(sum);
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_ShiftMac);

void BM_GreedySchedule(benchmark::State& state) {
  const auto cfg = net::presets::raw_audio_kws();
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    const auto deps = sched::dependency_sets(cfg, n);
    benchmark::DoNotOptimize(sched::greedy_schedule(deps, cfg));
  }
}
BENCHMARK(BM_GreedySchedule)->Arg(16000)->Arg(32000)->Unit(benchmark::kMillisecond);

void BM_EngineInference(benchmark::State& state) {
  const auto cfg = net::presets::mfcc_kws();
  const auto mode = state.range(0) == 4 ? pe::ArrayMode::m4x4 : pe::ArrayMode::m16x16;
  pe::Engine engine(net::generate_checkpoint(cfg, 1), mode);
  const auto input = random_input(static_cast<int>(net::receptive_field(cfg)), cfg.input_channels, 2);
  for (auto _ : state) benchmark::DoNotOptimize(engine.run(input));
}
BENCHMARK(BM_EngineInference)->Arg(16)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_DenseOracle(benchmark::State& state) {
  const auto cfg = net::presets::mfcc_kws();
  const auto ckpt = net::generate_checkpoint(cfg, 1);
  const auto input = random_input(static_cast<int>(net::receptive_field(cfg)), cfg.input_channels, 2);
  for (auto _ : state) benchmark::DoNotOptimize(oracle::dense_forward(ckpt, input));
}
BENCHMARK(BM_DenseOracle)->Unit(benchmark::kMillisecond);

void BM_LearnClass(benchmark::State& state) {
  const int dim = 48;
  const int k = static_cast<int>(state.range(0));
  const auto shots = random_input(k, dim, 3);
  for (auto _ : state) {
    proto::Learner l(dim);
    benchmark::DoNotOptimize(l.learn_class(0, shots));
  }
}
BENCHMARK(BM_LearnClass)->Arg(1)->Arg(5)->Arg(20);

void BM_Classify(benchmark::State& state) {
  const int dim = 48;
  const int ways = static_cast<int>(state.range(0));
  proto::Learner l(dim);
  for (int w = 0; w < ways; ++w) l.learn_class(w, random_input(5, dim, 10 + static_cast<std::uint64_t>(w)));
  const auto q = random_input(1, dim, 99)[0];
  for (auto _ : state) benchmark::DoNotOptimize(l.classify(q));
}
BENCHMARK(BM_Classify)->Arg(5)->Arg(20)->Arg(250);

}  // namespace

BENCHMARK_MAIN();
