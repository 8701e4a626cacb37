#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "swarmsync/cluster.hpp"
#include "swarmsync/data.hpp"
#include "swarmsync/metrics.hpp"
#include "swarmsync/model.hpp"

using namespace swarmsync;

namespace {

ModelSpec small_mlp() {
  ModelSpec spec;
  spec.input_shape = {6};
  spec.num_classes = 3;
  spec.layers = {Dense{6, 8}, Relu{}, Dense{8, 3}};
  return spec;
}

Dataset<double> small_dataset(Index per_class, std::uint64_t seed) {
  return make_synthetic<double>(SyntheticSpec{3, per_class, 6, 0.08, seed});
}

ClusterConfig in_process(int n, std::uint64_t seed,
                         ExecutionMode mode = ExecutionMode::Threads) {
  ClusterConfig c;
  c.n = n;
  c.seed = seed;
  c.execution = mode;
  return c;
}

DataParallelResult<double> run(const ModelSpec& spec, const VecX<double>& init,
                               const std::vector<Dataset<double>>& shards, const RunPlan& plan,
                               const SyncConfig& sync, const ClusterConfig& cluster) {
  auto make_opt = [] { return LocalOptimizer<double>::make_sgd(0.05); };
  return run_data_parallel<double>(spec, init, shards, plan, sync, cluster, "test", make_opt);
}

}  // namespace

TEST_SUITE("cluster") {

TEST_CASE("make_run_plan floors the iteration count") {
  const RunPlan plan = make_run_plan(5, 64, 2500);
  CHECK(plan.iteration_size == 39);
  CHECK(plan.max_t == 195);
  CHECK_THROWS_AS((void)make_run_plan(0, 1, 10), ConfigError);
  CHECK_THROWS_AS((void)make_run_plan(1, 20, 10), ConfigError);
}

TEST_CASE("partition splits evenly with at most one sample of skew") {
  const auto ds = small_dataset(40, 2);  // 120 samples
  const auto shards = partition_dataset(ds, 4, 7);
  REQUIRE(shards.size() == 4);
  for (const auto& s : shards) CHECK(s.size() == 30);

  // 10 samples over 3 shards -> {4,3,3}
  const auto small = head(ds, 10);
  const auto uneven = partition_dataset(small, 3, 7);
  CHECK(uneven[0].size() == 4);
  CHECK(uneven[1].size() == 3);
  CHECK(uneven[2].size() == 3);

  // disjoint and covering: every sample value shows up exactly once
  std::multiset<double> seen, all;
  for (const auto& s : uneven) {
    for (Index i = 0; i < s.size(); ++i) seen.insert(s.images.data[i * 6]);
  }
  for (Index i = 0; i < small.size(); ++i) all.insert(small.images.data[i * 6]);
  CHECK(seen == all);

  const auto whole = partition_dataset(ds, 1, 9);
  CHECK(whole[0].size() == 120);

  CHECK_THROWS_AS((void)partition_dataset(head(ds, 3), 4, 1), ConfigError);
}

TEST_CASE("partition is deterministic in the seed") {
  const auto ds = small_dataset(20, 3);
  const auto a = partition_dataset(ds, 3, 11);
  const auto b = partition_dataset(ds, 3, 11);
  const auto c = partition_dataset(ds, 3, 12);
  for (int i = 0; i < 3; ++i) CHECK(a[i].images.data == b[i].images.data);
  bool differs = false;
  for (int i = 0; i < 3; ++i) {
    if (a[i].images.data != c[i].images.data) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("step beyond max_t reproduces independent local runs bitwise") {
  const ModelSpec spec = small_mlp();
  const auto ds = small_dataset(30, 4);  // 90 samples
  const int n = 3;
  const std::uint64_t seed = 500;
  const auto shards = partition_dataset(ds, n, seed);
  const RunPlan plan = make_run_plan(3, 10, shards[2].size());
  const auto init = init_params<double>(spec, seed);

  SyncConfig sync;
  sync.strategy = Strategy::PSOPS;
  sync.step = plan.max_t + 1;

  const auto together = run(spec, init, shards, plan, sync, in_process(n, seed));
  CHECK(together.sync_rounds == 0);
  CHECK_FALSE(together.gbest.has_value());

  for (int w = 0; w < n; ++w) {
    const auto solo = run(spec, init, {shards[static_cast<std::size_t>(w)]}, plan, sync,
                          in_process(1, seed + static_cast<std::uint64_t>(w)));
    CHECK(solo.workers[0].particle.position == together.workers[static_cast<std::size_t>(w)].particle.position);
  }
}

TEST_CASE("step-1 parameter averaging tracks doubled-batch sgd within 1e-9") {
  const ModelSpec spec = small_mlp();
  const auto ds = small_dataset(100, 6);  // 300 samples -> 150 per shard
  const std::uint64_t seed = 900;
  const auto shards = partition_dataset(ds, 2, seed);
  const RunPlan plan = make_run_plan(10, 15, shards[1].size());  // 10 x 10 = 100 iterations
  REQUIRE(plan.max_t == 100);
  const auto init = init_params<double>(spec, seed);

  SyncConfig sync;
  sync.strategy = Strategy::PA;
  sync.step = 1;
  const auto pa = run(spec, init, shards, plan, sync, in_process(2, seed));

  // reference: single sgd trajectory over the per-iteration doubled batches,
  // rebuilt from the same per-worker seeded batch streams
  RngStream stream0(seed + 0), stream1(seed + 1);
  VecX<double> w = init;
  const SgdConfig<double> opt{0.05};
  for (long epoch = 1; epoch <= plan.epoch_size; ++epoch) {
    const auto b0 = batches(shards[0], plan.batch_size, stream0.next_u64());
    const auto b1 = batches(shards[1], plan.batch_size, stream1.next_u64());
    for (long it = 0; it < plan.iteration_size; ++it) {
      const auto& x0 = b0[static_cast<std::size_t>(it)];
      const auto& x1 = b1[static_cast<std::size_t>(it)];
      Batch<double> doubled;
      doubled.inputs = Tensor<double>::zeros({2 * plan.batch_size, 6});
      doubled.inputs.data.segment(0, plan.batch_size * 6) = x0.inputs.data;
      doubled.inputs.data.segment(plan.batch_size * 6, plan.batch_size * 6) = x1.inputs.data;
      doubled.labels.resize(2 * plan.batch_size);
      doubled.labels.segment(0, plan.batch_size) = x0.labels;
      doubled.labels.segment(plan.batch_size, plan.batch_size) = x1.labels;
      auto [loss, grad] = loss_and_grad(spec, w, doubled);
      w = sgd_step(w, grad, opt);
    }
  }

  for (const auto& worker : pa.workers) {
    CHECK((worker.particle.position - w).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("pso-ps round zero is a no-op for identical clones") {
  const ModelSpec spec = small_mlp();
  const auto ds = small_dataset(10, 8);
  const auto shards = partition_dataset(ds, 2, 1);
  const RunPlan plan = make_run_plan(1, 5, shards[1].size());
  const auto init = init_params<double>(spec, 3);

  SyncConfig sync;
  sync.strategy = Strategy::PSOPS;
  sync.step = 1;  // every iteration is a rendezvous; no local step ever runs
  const auto out = run(spec, init, shards, plan, sync, in_process(2, 1));
  for (const auto& w : out.workers) {
    CHECK(w.particle.position == init);
    CHECK(w.particle.velocity == VecX<double>::Zero(init.size()));
  }
}

TEST_CASE("threads and round-robin execution produce bitwise-identical runs") {
  const ModelSpec spec = small_mlp();
  const auto ds = small_dataset(30, 10);
  const auto shards = partition_dataset(ds, 3, 21);
  const RunPlan plan = make_run_plan(2, 9, shards[2].size());
  const auto init = init_params<double>(spec, 21);

  for (Strategy s : {Strategy::PA, Strategy::SSGD, Strategy::PSOPS}) {
    SyncConfig sync;
    sync.strategy = s;
    sync.step = 3;
    sync.ssgd_alpha = 0.05;
    const auto threaded = run(spec, init, shards, plan, sync, in_process(3, 21));
    const auto serial = run(spec, init, shards, plan, sync,
                            in_process(3, 21, ExecutionMode::RoundRobin));
    REQUIRE(threaded.workers.size() == serial.workers.size());
    for (std::size_t w = 0; w < threaded.workers.size(); ++w) {
      CHECK(threaded.workers[w].particle.position == serial.workers[w].particle.position);
    }
    std::vector<MetricsRecord> mt, ms;
    for (const auto& w : threaded.workers) mt.insert(mt.end(), w.metrics.begin(), w.metrics.end());
    for (const auto& w : serial.workers) ms.insert(ms.end(), w.metrics.begin(), w.metrics.end());
    CHECK(metrics_csv(mt) == metrics_csv(ms));
  }
}

TEST_CASE("fixed seeds give bitwise-identical reruns") {
  const ModelSpec spec = small_mlp();
  const auto ds = small_dataset(40, 12);
  const auto shards = partition_dataset(ds, 4, 33);
  const RunPlan plan = make_run_plan(2, 7, shards[3].size());
  const auto init = init_params<double>(spec, 33);

  SyncConfig sync;
  sync.strategy = Strategy::PSOPS;
  sync.step = 4;
  const auto a = run(spec, init, shards, plan, sync, in_process(4, 33));
  const auto b = run(spec, init, shards, plan, sync, in_process(4, 33));
  for (std::size_t w = 0; w < 4; ++w) {
    CHECK(a.workers[w].particle.position == b.workers[w].particle.position);
    CHECK(a.workers[w].particle.pbest_loss == b.workers[w].particle.pbest_loss);
  }
}

TEST_CASE("metrics cover every iteration with aligned sync rounds") {
  const ModelSpec spec = small_mlp();
  const auto ds = small_dataset(30, 14);
  const int n = 3;
  const auto shards = partition_dataset(ds, n, 44);
  const RunPlan plan = make_run_plan(2, 10, shards[2].size());
  const auto init = init_params<double>(spec, 44);

  SyncConfig sync;
  sync.strategy = Strategy::PSOPS;
  sync.step = 3;
  const auto out = run(spec, init, shards, plan, sync, in_process(n, 44));

  std::map<long, int> sync_rows;
  for (const auto& w : out.workers) {
    REQUIRE(w.metrics.size() == static_cast<std::size_t>(plan.max_t));
    long prev_t = 0;
    for (const auto& rec : w.metrics) {
      CHECK(rec.t == prev_t + 1);  // strictly increasing, one row per iteration
      prev_t = rec.t;
      CHECK(rec.epoch == (rec.t - 1) / plan.iteration_size + 1);
      if (rec.sync_phase) {
        CHECK(rec.t % sync.step == 0);
        CHECK(rec.gbest_worker.has_value());
        ++sync_rows[rec.t];
      }
      CHECK(rec.inertia.has_value());
      CHECK(rec.lambda.has_value());
    }
  }
  for (const auto& [t, count] : sync_rows) CHECK(count == n);
  CHECK(out.sync_rounds == static_cast<long>(sync_rows.size()));
}

TEST_CASE("ssgd at step 1 keeps replicas identical and matches pa") {
  const ModelSpec spec = small_mlp();
  const auto ds = small_dataset(60, 16);
  const auto shards = partition_dataset(ds, 2, 55);
  const RunPlan plan = make_run_plan(3, 10, shards[1].size());
  const auto init = init_params<double>(spec, 55);

  SyncConfig pa_sync;
  pa_sync.strategy = Strategy::PA;
  pa_sync.step = 1;
  SyncConfig ssgd_sync;
  ssgd_sync.strategy = Strategy::SSGD;
  ssgd_sync.step = 1;
  ssgd_sync.ssgd_alpha = 0.05;  // equals the local eta

  const auto pa = run(spec, init, shards, plan, pa_sync, in_process(2, 55));
  const auto ssgd = run(spec, init, shards, plan, ssgd_sync, in_process(2, 55));

  CHECK((ssgd.workers[0].particle.position - ssgd.workers[1].particle.position).cwiseAbs().maxCoeff() ==
        0.0);
  for (std::size_t w = 0; w < 2; ++w) {
    CHECK((pa.workers[w].particle.position - ssgd.workers[w].particle.position).cwiseAbs().maxCoeff() <
          1e-12);
  }
}

TEST_CASE("a failing worker aborts the whole run") {
  const ModelSpec spec = small_mlp();
  const auto ds = small_dataset(30, 18);
  auto shards = partition_dataset(ds, 3, 66);
  shards[1].labels[0] = 99;  // invalid label -> contract violation mid-run

  const RunPlan plan = make_run_plan(1, 10, shards[2].size());
  const auto init = init_params<double>(spec, 66);
  SyncConfig sync;
  sync.strategy = Strategy::PA;
  sync.step = 2;
  CHECK_THROWS_AS((void)run(spec, init, shards, plan, sync, in_process(3, 66)), ContractError);
}

}  // TEST_SUITE
