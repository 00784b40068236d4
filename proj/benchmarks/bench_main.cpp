// Copyright 2026 The otafl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include "otafl/channel.hpp"
#include "otafl/datagen.hpp"
#include "otafl/model.hpp"
#include "otafl/protocol.hpp"

namespace {

using namespace otafl;

const ModelSpec kLogistic{ModelKind::MulticlassLogistic, 20, 5, {}, Activation::Tanh};

ClientShard bench_shard(int n) {
  return ClientShard{gen_synthetic_classification(n, 20, 5, 2.0, 7), 0, 1.0};
}

void BM_FullBatchGradient(benchmark::State& state) {
  ClientShard shard = bench_shard(static_cast<int>(state.range(0)));
  ParamVector theta = init_params(kLogistic, 3);
  for (auto _ : state) {
    ParamVector g = local_grad(theta, shard, kLogistic);
    benchmark::DoNotOptimize(g.values.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FullBatchGradient)->Arg(256)->Arg(1024)->Arg(4096);

void BM_LocalSolveSgd(benchmark::State& state) {
  ClientShard shard = bench_shard(256);
  ParamVector theta = init_params(kLogistic, 3);
  ProxConfig cfg{0.4, 0.05, 8, 64};
  const int epochs = static_cast<int>(state.range(0));
  for (auto _ : state) {
    ParamVector out = local_solve_sgd(shard, theta, cfg, epochs, kLogistic, 11);
    benchmark::DoNotOptimize(out.values.data());
  }
}
BENCHMARK(BM_LocalSolveSgd)->Arg(1)->Arg(3)->Arg(8);

void BM_MacSuperpose(benchmark::State& state) {
  const int clients = 30;
  const std::size_t dim = static_cast<std::size_t>(state.range(0));
  std::vector<std::vector<double>> inputs(clients, std::vector<double>(dim, 0.25));
  Rng rng(5);
  for (auto _ : state) {
    auto y = mac_superpose(inputs, 0.1, rng);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * clients * dim);
}
BENCHMARK(BM_MacSuperpose)->Arg(128)->Arg(1024)->Arg(8192);

void BM_PartitionHeterogeneous(benchmark::State& state) {
  Dataset ds = gen_synthetic_classification(static_cast<int>(state.range(0)), 20, 10, 2.0, 9);
  for (auto _ : state) {
    auto part = partition_heterogeneous(ds, {30, 0.5, 13});
    benchmark::DoNotOptimize(part.shards.data());
  }
}
BENCHMARK(BM_PartitionHeterogeneous)->Arg(3000)->Arg(30000);

void BM_RunRound(benchmark::State& state) {
  RunConfig cfg;
  cfg.clients = static_cast<int>(state.range(0));
  cfg.max_epochs = 3;
  cfg.rounds = 1;
  cfg.batch = 64;
  cfg.pi = 0.5;
  cfg.snr_db = 0.0;
  cfg.data.n = 100 * cfg.clients;
  cfg.data.features = 20;
  cfg.data.classes = 5;
  RunConfig resolved = variant_config(cfg.variant, cfg);
  TrainState st = init_train_state(resolved);
  int t = 0;
  for (auto _ : state) {
    RoundRecord rec = run_round(st, ++t);
    benchmark::DoNotOptimize(rec.p_t);
  }
}
BENCHMARK(BM_RunRound)->Arg(10)->Arg(30)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
