#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "swarmsync/cluster.hpp"
#include "swarmsync/config.hpp"
#include "swarmsync/data.hpp"
#include "swarmsync/metrics.hpp"

namespace swarmsync {

struct EvalOutcome {
  double loss = 0.0;
  double accuracy = 0.0;
};

template <typename Scalar>
struct ExperimentResult {
  std::string run_id;
  std::vector<EvalOutcome> worker_eval;  // final model of each worker on the test set
  std::optional<EvalOutcome> gbest_eval;
  std::optional<int> gbest_worker;
  std::vector<MetricsRecord> metrics;
  std::vector<EvalRecord> eval_records;
  std::vector<VecX<Scalar>> final_params;
  long sync_rounds = 0;
  long dropped_per_epoch = 0;  // per-worker batching remainder
  RunPlan plan;
};

// Whole-dataset evaluation in fixed-size chunks; deterministic.
template <typename Scalar>
EvalOutcome evaluate(const ModelSpec& spec, const VecX<Scalar>& params, const Dataset<Scalar>& data,
                     Index chunk = 256) {
  double loss_sum = 0.0;
  double correct = 0.0;
  const Index n = data.size();
  std::vector<Index> rows;
  for (Index start = 0; start < n; start += chunk) {
    const Index count = std::min(chunk, n - start);
    rows.resize(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) rows[static_cast<std::size_t>(i)] = start + i;
    const Batch<Scalar> batch = make_batch(data, rows);
    auto [logits, cache] = forward(spec, params, batch);
    loss_sum += softmax_cross_entropy(logits, batch.labels) * static_cast<double>(count);
    correct += accuracy(logits, batch.labels) * static_cast<double>(count);
  }
  return {loss_sum / static_cast<double>(n), correct / static_cast<double>(n)};
}

inline std::string make_run_id(const ExperimentConfig& cfg) {
  return strategy_name(cfg.strategy) + "_n" + std::to_string(cfg.n) + "_seed" +
         std::to_string(cfg.seed);
}

template <typename Scalar>
ExperimentResult<Scalar> run_experiment(const ExperimentConfig& cfg, const Dataset<Scalar>& train,
                                        const Dataset<Scalar>& test) {
  cfg.validate();
  const ModelSpec spec = cfg.build_model_spec();
  validate_spec(spec);
  if (train.sample_numel() != numel(spec.input_shape)) {
    throw ConfigError("training samples have " + std::to_string(train.sample_numel()) +
                      " values but the model expects " + std::to_string(numel(spec.input_shape)));
  }

  const SyncConfig sync = cfg.build_sync_config();
  ClusterConfig cluster;
  cluster.n = cfg.n;
  cluster.seed = cfg.seed;
  cluster.transport = cfg.transport;
  cluster.tcp.listen_addrs = cfg.tcp_addrs;
  cluster.tcp.timeout_sec = cfg.tcp_timeout;
  cluster.execution = cfg.execution;

  const auto shards = partition_dataset(train, cfg.n, cfg.seed);
  Index min_shard = shards.front().size();
  for (const auto& s : shards) min_shard = std::min(min_shard, s.size());
  if (min_shard < cfg.batch_size) {
    throw ConfigError("run.batch_size: a shard of " + std::to_string(min_shard) +
                      " samples cannot fill a batch of " + std::to_string(cfg.batch_size));
  }
  const RunPlan plan = make_run_plan(cfg.epoch_size, cfg.batch_size, train.size());

  const VecX<Scalar> init = init_params<Scalar>(spec, cfg.seed);
  const std::string run_id = make_run_id(cfg);

  auto make_optimizer = [&]() {
    if (cfg.optimizer == OptimizerKind::Sgd) {
      return LocalOptimizer<Scalar>::make_sgd(static_cast<Scalar>(cfg.learning_rate));
    }
    AdamConfig<Scalar> adam;
    adam.eta = static_cast<Scalar>(cfg.learning_rate);
    return LocalOptimizer<Scalar>::make_adam(adam, init.size());
  };

  EvalHook<Scalar> eval_hook;
  if (cfg.eval_every > 0) {
    eval_hook = [&spec, &test, &run_id](int worker, long epoch, const VecX<Scalar>& position) {
      const EvalOutcome out = evaluate(spec, position, test);
      return EvalRecord{run_id, worker, epoch, out.loss, out.accuracy};
    };
  }

  auto dp = run_data_parallel<Scalar>(spec, init, shards, plan, sync, cluster, run_id, make_optimizer,
                                      eval_hook, cfg.eval_every);

  ExperimentResult<Scalar> result;
  result.run_id = run_id;
  result.plan = plan;
  result.sync_rounds = dp.sync_rounds;
  // remainder a worker leaves unused per pass over its shard
  result.dropped_per_epoch = min_shard % plan.batch_size;
  for (auto& w : dp.workers) {
    result.worker_eval.push_back(evaluate(spec, w.particle.position, test));
    result.final_params.push_back(w.particle.position);
    for (auto& m : w.metrics) result.metrics.push_back(std::move(m));
    for (auto& e : w.evals) result.eval_records.push_back(std::move(e));
  }
  if (dp.gbest) {
    result.gbest_eval = evaluate(spec, dp.gbest->position, test);
    result.gbest_worker = dp.gbest->worker_index;
  }
  return result;
}

// Convenience loader honoring [data]: IDX files or the synthetic generator.
template <typename Scalar>
std::pair<Dataset<Scalar>, Dataset<Scalar>> load_datasets(const ExperimentConfig& cfg) {
  if (cfg.data_source == "mnist") {
    Dataset<Scalar> train = load_idx_files<Scalar>(cfg.train_images, cfg.train_labels, "mnist-train");
    Dataset<Scalar> test = load_idx_files<Scalar>(cfg.test_images, cfg.test_labels, "mnist-test");
    return {head(train, static_cast<Index>(cfg.limit_train)),
            head(test, static_cast<Index>(cfg.limit_test))};
  }
  // One generator call so train and test share class centroids; each class
  // block is split train-first.
  const Index per_train = static_cast<Index>(cfg.synth_train_per_class);
  const Index per_test = static_cast<Index>(cfg.synth_test_per_class);
  SyntheticSpec spec{cfg.classes, per_train + per_test, cfg.synth_input_dim, cfg.synth_spread,
                     cfg.synth_seed};
  const Dataset<Scalar> all = make_synthetic<Scalar>(spec);
  const Index d = all.sample_numel();
  Dataset<Scalar> train, test;
  train.name = "synthetic-train";
  test.name = "synthetic-test";
  train.images = Tensor<Scalar>::zeros({cfg.classes * per_train, d});
  test.images = Tensor<Scalar>::zeros({cfg.classes * per_test, d});
  Index tr = 0, te = 0;
  for (Index c = 0; c < cfg.classes; ++c) {
    const Index block = c * (per_train + per_test);
    for (Index i = 0; i < per_train; ++i, ++tr) {
      train.images.data.segment(tr * d, d) = all.images.data.segment((block + i) * d, d);
      train.labels.push_back(static_cast<int>(c));
    }
    for (Index i = 0; i < per_test; ++i, ++te) {
      test.images.data.segment(te * d, d) = all.images.data.segment((block + per_train + i) * d, d);
      test.labels.push_back(static_cast<int>(c));
    }
  }
  return {head(train, static_cast<Index>(cfg.limit_train)),
          head(test, static_cast<Index>(cfg.limit_test))};
}

}  // namespace swarmsync
