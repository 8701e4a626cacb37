#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "swarmsync/data.hpp"
#include "swarmsync/errors.hpp"
#include "swarmsync/metrics.hpp"
#include "swarmsync/model.hpp"
#include "swarmsync/optim.hpp"
#include "swarmsync/sync.hpp"
#include "swarmsync/tcp_transport.hpp"
#include "swarmsync/transport.hpp"

namespace swarmsync {

enum class TransportKind { InProcess, Tcp };
enum class ExecutionMode { Threads, RoundRobin };

// There is no server process: every worker gathers everything and computes
// the aggregate redundantly and identically.
struct ClusterConfig {
  int n = 1;
  std::uint64_t seed = 0;
  TransportKind transport = TransportKind::InProcess;
  TcpConfig tcp;
  ExecutionMode execution = ExecutionMode::Threads;

  bool operator==(const ClusterConfig&) const = default;
};

// iteration_size counts mini-batch iterations per epoch over the training
// set as a whole, so max_t does not shrink as workers are added; each worker
// cycles through reshuffles of its own shard to feed that many iterations.
struct RunPlan {
  long epoch_size = 1;
  long batch_size = 1;
  long iteration_size = 1;  // floor(training_size / batch_size)
  long max_t = 1;           // epoch_size * iteration_size
};

inline RunPlan make_run_plan(long epoch_size, long batch_size, Index training_size) {
  if (epoch_size < 1) throw ConfigError("epoch_size must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (training_size < batch_size) {
    throw ConfigError("training set of " + std::to_string(training_size) +
                      " samples cannot fill a batch of " + std::to_string(batch_size));
  }
  RunPlan plan;
  plan.epoch_size = epoch_size;
  plan.batch_size = batch_size;
  plan.iteration_size = static_cast<long>(training_size) / batch_size;
  plan.max_t = plan.epoch_size * plan.iteration_size;
  return plan;
}

// Seeded permutation split into n contiguous chunks; sizes differ by at most
// one (the first size%n shards carry the extra sample), so nothing is
// dropped here.
template <typename Scalar>
std::vector<Dataset<Scalar>> partition_dataset(const Dataset<Scalar>& dataset, int n,
                                               std::uint64_t seed) {
  if (n < 1) throw ConfigError("partition: n must be >= 1");
  if (dataset.size() < n) {
    throw ConfigError("partition: dataset of " + std::to_string(dataset.size()) +
                      " samples is smaller than n = " + std::to_string(n));
  }
  std::vector<Index> perm(static_cast<std::size_t>(dataset.size()));
  for (Index i = 0; i < dataset.size(); ++i) perm[static_cast<std::size_t>(i)] = i;
  RngStream rng(seed);
  rng.shuffle(perm);

  const Index base = dataset.size() / n;
  const Index extra = dataset.size() % n;
  const Index d = dataset.sample_numel();
  std::vector<Dataset<Scalar>> shards;
  shards.reserve(static_cast<std::size_t>(n));
  std::size_t cursor = 0;
  for (int s = 0; s < n; ++s) {
    const Index sz = base + (s < extra ? 1 : 0);
    Dataset<Scalar> shard;
    shard.name = dataset.name + "/shard" + std::to_string(s);
    std::vector<Index> shape = dataset.images.shape;
    shape[0] = sz;
    shard.images = Tensor<Scalar>::zeros(shape);
    shard.labels.resize(static_cast<std::size_t>(sz));
    for (Index i = 0; i < sz; ++i, ++cursor) {
      const Index src = perm[cursor];
      shard.images.data.segment(i * d, d) = dataset.images.data.segment(src * d, d);
      shard.labels[static_cast<std::size_t>(i)] = dataset.labels[static_cast<std::size_t>(src)];
    }
    shards.push_back(std::move(shard));
  }
  return shards;
}

template <typename Scalar>
struct WorkerOutcome {
  Particle<Scalar> particle;  // position holds the final weights
  std::vector<MetricsRecord> metrics;
  std::vector<EvalRecord> evals;
  double last_train_loss = 0.0;
  long bytes_cum = 0;
};

template <typename Scalar>
struct DataParallelResult {
  std::vector<WorkerOutcome<Scalar>> workers;
  std::optional<GBest<Scalar>> gbest;  // from the final sync round (PSO-PS)
  long sync_rounds = 0;
};

// Per-epoch test evaluation hook: (worker, epoch, position) -> EvalRecord.
template <typename Scalar>
using EvalHook = std::function<EvalRecord(int, long, const VecX<Scalar>&)>;

// ---------------------------------------------------------------------------
// One worker's training loop, written as a resumable segment machine so the
// same code runs under real threads (parked at the transport barrier) and
// under single-threaded round-robin stepping. Between sync points a worker
// touches only its own state.
// ---------------------------------------------------------------------------

template <typename Scalar>
class WorkerRunner {
 public:
  WorkerRunner(const ModelSpec& spec, VecX<Scalar> init, Dataset<Scalar> shard, const RunPlan& plan,
               const SyncConfig& sync, LocalOptimizer<Scalar> opt, int worker_index, int n,
               std::uint64_t data_seed, std::uint64_t pso_seed, std::string run_id,
               EvalHook<Scalar> eval_hook = nullptr, long eval_every = 0)
      : spec_(spec),
        shard_(std::move(shard)),
        plan_(plan),
        sync_(sync),
        opt_(std::move(opt)),
        worker_(worker_index),
        n_(n),
        data_rng_(data_seed),
        pso_rng_(pso_seed),
        run_id_(std::move(run_id)),
        eval_hook_(std::move(eval_hook)),
        eval_every_(eval_every),
        particle_(Particle<Scalar>::clone_from(init, worker_index)) {
    if (sync_.step < 1) throw ConfigError("sync step must be >= 1");
    shard_batches_ = shard_.size() / plan_.batch_size;
    if (shard_batches_ < 1) {
      throw ConfigError("worker " + std::to_string(worker_) + ": shard of " +
                        std::to_string(shard_.size()) + " samples cannot fill a batch of " +
                        std::to_string(plan_.batch_size));
    }
  }

  // Runs local iterations until the next rendezvous; returns the entry to
  // gather, or nullopt when the run has completed.
  std::optional<GatherEntry<Scalar>> run_to_sync() {
    while (t_ <= plan_.max_t) {
      const Batch<Scalar>& batch = next_batch();
      auto [loss, grad] = loss_and_grad(spec_, particle_.position, batch);
      last_loss_ = loss;
      const bool is_sync = (t_ % sync_.step) == 0;

      switch (sync_.strategy) {
        case Strategy::PA:
          // PA trains every iteration and averages the post-step weights.
          particle_.position = opt_.step(particle_.position, grad);
          if (is_sync) return GatherEntry<Scalar>{worker_, loss, particle_.position};
          break;
        case Strategy::SSGD:
          if (is_sync) return GatherEntry<Scalar>{worker_, loss, std::move(grad)};
          particle_.position = opt_.step(particle_.position, grad);
          break;
        case Strategy::PSOPS:
          if (is_sync) {
            particle_ = update_pbest(particle_, loss);
            return GatherEntry<Scalar>{worker_, loss, particle_.position};
          }
          particle_.position = opt_.step(particle_.position, grad);
          break;
      }
      finish_iteration(false);
    }
    return std::nullopt;
  }

  // Completes the sync iteration begun by run_to_sync.
  void finish_sync(const std::vector<GatherEntry<Scalar>>& gathered) {
    bytes_cum_ += Transport<Scalar>::bytes_per_round(n_, particle_.position.size());
    switch (sync_.strategy) {
      case Strategy::PA:
        particle_.position = pa_aggregate(gathered);
        break;
      case Strategy::SSGD: {
        // The averaged gradient goes through the local optimizer, scaled so
        // that with plain SGD the update is exactly w - alpha * mean(grads).
        const double alpha = sync_.ssgd_alpha > 0 ? sync_.ssgd_alpha : local_eta();
        VecX<Scalar> mean_grad = pa_aggregate(gathered);
        const double ratio = alpha / local_eta();
        if (ratio != 1.0) mean_grad *= static_cast<Scalar>(ratio);
        particle_.position = opt_.step(particle_.position, mean_grad);
        break;
      }
      case Strategy::PSOPS: {
        GBest<Scalar> round_best = global_search(gathered);
        if (sync_.pso.gbest_mode == GBestMode::Historical && historical_best_ &&
            historical_best_->loss < round_best.loss) {
          round_best = *historical_best_;
        }
        if (sync_.pso.gbest_mode == GBestMode::Historical) historical_best_ = round_best;
        last_gbest_ = round_best;
        const double m = inertia(t_, plan_.max_t, sync_.pso);
        const long lambda =
            sync_.pso.lambda_mode == LambdaMode::CurrentEpoch ? epoch_of(t_) : plan_.epoch_size;
        const auto coeffs = draw_pso_coeffs<Scalar>(sync_.pso, particle_.position.size(), pso_rng_);
        particle_ = pso_update(particle_, round_best, m, lambda, sync_.pso, coeffs);
        break;
      }
    }
    ++rounds_done_;
    finish_iteration(true);
  }

  long current_round() const { return t_ / sync_.step; }
  bool finished() const { return t_ > plan_.max_t; }
  const std::optional<GBest<Scalar>>& last_gbest() const { return last_gbest_; }
  long rounds_done() const { return rounds_done_; }

  WorkerOutcome<Scalar> take_outcome() {
    WorkerOutcome<Scalar> out;
    out.particle = particle_;
    out.metrics = std::move(metrics_);
    out.evals = std::move(evals_);
    out.last_train_loss = last_loss_;
    out.bytes_cum = bytes_cum_;
    return out;
  }

 private:
  long epoch_of(long t) const { return (t - 1) / plan_.iteration_size + 1; }

  double local_eta() const {
    return opt_.kind == OptimizerKind::Sgd ? static_cast<double>(opt_.sgd.eta)
                                           : static_cast<double>(opt_.adam.eta);
  }

  // Consumes the shard in reshuffled passes of shard_batches_ batches; the
  // pass cycle is independent of the epoch bookkeeping.
  const Batch<Scalar>& next_batch() {
    const long pass = (t_ - 1) / shard_batches_;
    if (pass_batches_.empty() || pass != current_pass_) {
      pass_batches_ = batches(shard_, plan_.batch_size, data_rng_.next_u64());
      current_pass_ = pass;
    }
    return pass_batches_[static_cast<std::size_t>((t_ - 1) % shard_batches_)];
  }

  void finish_iteration(bool sync_phase) {
    MetricsRecord rec;
    rec.run_id = run_id_;
    rec.worker_index = worker_;
    rec.t = t_;
    rec.epoch = epoch_of(t_);
    rec.sync_phase = sync_phase;
    rec.strategy = strategy_name(sync_.strategy);
    rec.train_loss = last_loss_;
    rec.bytes_cum = bytes_cum_;
    if (sync_.strategy == Strategy::PSOPS) {
      rec.inertia = inertia(t_, plan_.max_t, sync_.pso);
      rec.lambda = sync_.pso.lambda_mode == LambdaMode::CurrentEpoch ? epoch_of(t_) : plan_.epoch_size;
      if (sync_phase && last_gbest_) rec.gbest_worker = last_gbest_->worker_index;
    }
    metrics_.push_back(std::move(rec));

    const long epoch = epoch_of(t_);
    const bool epoch_end = (t_ % plan_.iteration_size) == 0;
    if (epoch_end && eval_hook_ && eval_every_ > 0 && (epoch % eval_every_) == 0) {
      evals_.push_back(eval_hook_(worker_, epoch, particle_.position));
    }
    ++t_;
  }

  ModelSpec spec_;
  Dataset<Scalar> shard_;
  RunPlan plan_;
  SyncConfig sync_;
  LocalOptimizer<Scalar> opt_;
  int worker_;
  int n_;
  RngStream data_rng_;
  RngStream pso_rng_;
  std::string run_id_;
  EvalHook<Scalar> eval_hook_;
  long eval_every_ = 0;

  Particle<Scalar> particle_;
  std::optional<GBest<Scalar>> last_gbest_;
  std::optional<GBest<Scalar>> historical_best_;
  std::vector<Batch<Scalar>> pass_batches_;
  long shard_batches_ = 1;
  long current_pass_ = -1;
  long t_ = 1;
  double last_loss_ = 0.0;
  long bytes_cum_ = 0;
  long rounds_done_ = 0;
  std::vector<MetricsRecord> metrics_;
  std::vector<EvalRecord> evals_;
};

// ---------------------------------------------------------------------------
// Orchestration. Worker w draws data from stream seed+w and PSO coefficients
// from stream seed+1000000+w, so toggling r_mode never perturbs the data
// shuffles.
// ---------------------------------------------------------------------------

constexpr std::uint64_t kPsoSeedOffset = 1000000;

template <typename Scalar>
DataParallelResult<Scalar> run_data_parallel(const ModelSpec& spec, const VecX<Scalar>& init,
                                             const std::vector<Dataset<Scalar>>& shards,
                                             const RunPlan& plan, const SyncConfig& sync,
                                             const ClusterConfig& cluster,
                                             const std::string& run_id,
                                             std::function<LocalOptimizer<Scalar>()> make_optimizer,
                                             EvalHook<Scalar> eval_hook = nullptr,
                                             long eval_every = 0) {
  const int n = cluster.n;
  if (n < 1) throw ConfigError("cluster: n must be >= 1");
  if (shards.size() != static_cast<std::size_t>(n)) {
    throw ConfigError("cluster: expected " + std::to_string(n) + " shards, got " +
                      std::to_string(shards.size()));
  }
  if (cluster.transport == TransportKind::Tcp &&
      cluster.tcp.listen_addrs.size() != static_cast<std::size_t>(n)) {
    throw ConfigError("cluster: tcp transport needs one listen address per worker");
  }

  std::vector<std::unique_ptr<WorkerRunner<Scalar>>> runners;
  runners.reserve(static_cast<std::size_t>(n));
  for (int w = 0; w < n; ++w) {
    runners.push_back(std::make_unique<WorkerRunner<Scalar>>(
        spec, init, shards[static_cast<std::size_t>(w)], plan, sync, make_optimizer(), w, n,
        cluster.seed + static_cast<std::uint64_t>(w),
        cluster.seed + kPsoSeedOffset + static_cast<std::uint64_t>(w), run_id, eval_hook, eval_every));
  }

  if (cluster.execution == ExecutionMode::RoundRobin) {
    if (cluster.transport == TransportKind::Tcp) {
      throw ConfigError("cluster: round-robin execution is in-process only");
    }
    for (;;) {
      std::vector<GatherEntry<Scalar>> gathered;
      int pending = 0;
      for (auto& r : runners) {
        auto e = r->run_to_sync();
        if (e) {
          gathered.push_back(std::move(*e));
          ++pending;
        }
      }
      if (pending == 0) break;
      if (pending != n) throw ContractError("round-robin: workers disagree on sync schedule");
      for (auto& r : runners) r->finish_sync(gathered);
    }
  } else {
    auto hub = std::make_shared<InProcessHub<Scalar>>(n);
    std::vector<std::thread> threads;
    std::mutex err_mu;
    std::exception_ptr first_error;
    for (int w = 0; w < n; ++w) {
      threads.emplace_back([&, w] {
        try {
          std::unique_ptr<Transport<Scalar>> transport;
          if (cluster.transport == TransportKind::Tcp) {
            transport = std::make_unique<TcpTransport<Scalar>>(w, cluster.tcp);
          } else {
            transport = std::make_unique<InProcessTransport<Scalar>>(hub);
          }
          auto& runner = *runners[static_cast<std::size_t>(w)];
          for (;;) {
            auto e = runner.run_to_sync();
            if (!e) break;
            auto gathered = transport->allgather(runner.current_round(), std::move(*e));
            runner.finish_sync(gathered);
          }
        } catch (...) {
          {
            std::lock_guard lk(err_mu);
            if (!first_error) first_error = std::current_exception();
          }
          hub->abort("worker " + std::to_string(w) + " failed");
        }
      });
    }
    for (auto& th : threads) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  DataParallelResult<Scalar> result;
  result.sync_rounds = runners.front()->rounds_done();
  result.gbest = runners.front()->last_gbest();
  for (auto& r : runners) result.workers.push_back(r->take_outcome());
  return result;
}

}  // namespace swarmsync
