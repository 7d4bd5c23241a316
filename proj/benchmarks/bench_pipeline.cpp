#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "aot/cluster_rank.hpp"
#include "aot/config.hpp"
#include "aot/corpus.hpp"
#include "aot/model.hpp"
#include "aot/rng.hpp"
#include "aot/training.hpp"

namespace {

aot::ModelConfig bench_config() {
  aot::ModelConfig mc;
  mc.d_e = 32;
  mc.d_model = 48;
  mc.gru_width = 16;
  mc.gru_layers = 1;
  mc.salience_hidden = 8;
  mc.enc_layers = 1;
  mc.enc_heads = 2;
  mc.dec_layers = 1;
  mc.dec_heads = 2;
  mc.ffn_hidden = 16;
  mc.max_tags = 8;
  mc.max_decode_len = 30;
  return mc;
}

std::vector<aot::Item> bench_corpus() {
  aot::SynthSpec spec;
  spec.n_items = 4;
  spec.min_reviews = 12;
  spec.max_reviews = 16;
  spec.seed = 42;
  return aot::synthesize_corpus(spec);
}

struct BenchSetup {
  std::vector<aot::Item> items = bench_corpus();
  aot::TrainConfig tc;
  aot::AotModel model;
  aot::PipelineFlags flags;

  BenchSetup() {
    tc.seed = 42;
    model = aot::make_model(items, bench_config(), tc.seed);
    flags = aot::pipeline_flags(tc);
  }

  std::uint64_t stream(const aot::Item& item) const {
    return aot::item_stream(item.item_id, tc.seed);
  }
};

BenchSetup& setup() {
  static BenchSetup s;
  return s;
}

void BM_encode_item(benchmark::State& state) {
  auto& s = setup();
  const aot::Item& item = s.items[0];
  for (auto _ : state) {
    auto enc = aot::encode_item(s.model, item, s.flags, s.stream(item));
    benchmark::DoNotOptimize(enc.memory.v().sum());
  }
}
BENCHMARK(BM_encode_item)->Unit(benchmark::kMillisecond);

void BM_item_losses(benchmark::State& state) {
  auto& s = setup();
  const aot::Item& item = s.items[0];
  for (auto _ : state) {
    auto enc = aot::encode_item(s.model, item, s.flags, s.stream(item));
    auto losses = aot::item_losses(s.model, item, enc, s.flags, 0.1);
    benchmark::DoNotOptimize(losses.gen.item());
  }
}
BENCHMARK(BM_item_losses)->Unit(benchmark::kMillisecond);

void BM_train_step(benchmark::State& state) {
  auto& s = setup();
  const aot::Item& item = s.items[0];
  aot::AdamState adam;
  adam.init(s.model.ps.total_size());
  for (auto _ : state) {
    s.model.ps.zero_grad();
    auto enc = aot::encode_item(s.model, item, s.flags, s.stream(item));
    auto losses = aot::item_losses(s.model, item, enc, s.flags, 0.1);
    auto joint = aot::multitask_loss(losses.cla, losses.aln, losses.gen, s.tc);
    aot::ad::backward(joint);
    adam.update(s.model.ps, 1e-4, s.tc);
  }
}
BENCHMARK(BM_train_step)->Unit(benchmark::kMillisecond);

void BM_infer_item(benchmark::State& state) {
  auto& s = setup();
  const aot::Item& item = s.items[1];
  for (auto _ : state) {
    auto inf = aot::infer_item(s.model, item, s.flags, s.stream(item));
    benchmark::DoNotOptimize(inf.trace.tokens.size());
  }
}
BENCHMARK(BM_infer_item)->Unit(benchmark::kMillisecond);

void BM_cluster_and_rank(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  aot::Rng rng(7);
  aot::ad::Mat points(m, 48);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < 48; ++c) points(r, c) = rng.normal();
  const int k = aot::choose_k(m);
  for (auto _ : state) {
    auto clusters = aot::cluster_and_rank(points, k, 11);
    benchmark::DoNotOptimize(clusters.size());
  }
}
BENCHMARK(BM_cluster_and_rank)->Arg(60)->Arg(240)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
