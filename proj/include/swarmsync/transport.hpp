#pragma once

#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "swarmsync/errors.hpp"
#include "swarmsync/sync.hpp"

namespace swarmsync {

// Collective gather. Deposits the caller's entry for `round` and returns all
// n entries ordered by worker index; acts as a full barrier. Every worker of
// a round must pass the same round number.
template <typename Scalar>
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::vector<GatherEntry<Scalar>> allgather(long round, GatherEntry<Scalar> local) = 0;
  // Message bytes a worker sends plus receives per round, matching the TCP
  // wire format (16-byte header + 8-byte loss + 8 bytes per value).
  static long bytes_per_round(int n, Index dim) {
    const long msg = 16 + 8 + 8 * static_cast<long>(dim);
    return 2L * (n - 1) * msg;
  }
};

// Shared-memory rendezvous for n workers in one process. A generation
// counter doubles as the barrier: the last depositor of a generation
// publishes the ordered snapshot and wakes the rest.
template <typename Scalar>
class InProcessHub {
 public:
  explicit InProcessHub(int n) : n_(n), slots_(static_cast<std::size_t>(n)), deposited_(static_cast<std::size_t>(n), false), rounds_(static_cast<std::size_t>(n), -1) {
    if (n < 1) throw ConfigError("hub requires n >= 1");
  }

  std::vector<GatherEntry<Scalar>> allgather(long round, GatherEntry<Scalar> local) {
    std::unique_lock lk(mu_);
    if (!abort_reason_.empty()) throw TransportError(abort_reason_);
    const int w = local.worker_index;
    if (w < 0 || w >= n_) throw TransportError("allgather: worker index " + std::to_string(w) + " out of range");
    if (deposited_[static_cast<std::size_t>(w)]) {
      fail(lk, "allgather: worker " + std::to_string(w) + " deposited twice in one round");
    }
    deposited_[static_cast<std::size_t>(w)] = true;
    rounds_[static_cast<std::size_t>(w)] = round;
    slots_[static_cast<std::size_t>(w)] = std::move(local);
    ++arrived_;

    const long my_gen = generation_;
    if (arrived_ == n_) {
      for (int i = 0; i < n_; ++i) {
        if (rounds_[static_cast<std::size_t>(i)] != rounds_[0]) {
          fail(lk, "allgather: round mismatch (worker 0 at round " + std::to_string(rounds_[0]) +
                       ", worker " + std::to_string(i) + " at round " +
                       std::to_string(rounds_[static_cast<std::size_t>(i)]) + ")");
        }
      }
      published_ = slots_;
      arrived_ = 0;
      std::fill(deposited_.begin(), deposited_.end(), false);
      ++generation_;
      cv_.notify_all();
    } else {
      cv_.wait(lk, [&] { return generation_ != my_gen || !abort_reason_.empty(); });
      if (generation_ == my_gen && !abort_reason_.empty()) throw TransportError(abort_reason_);
    }
    return published_;
  }

  // Unblocks every waiter with a TransportError; used when a worker dies.
  void abort(const std::string& reason) {
    std::lock_guard lk(mu_);
    if (abort_reason_.empty()) abort_reason_ = "run aborted: " + reason;
    cv_.notify_all();
  }

 private:
  void fail(std::unique_lock<std::mutex>& lk, const std::string& reason) {
    abort_reason_ = reason;
    cv_.notify_all();
    lk.unlock();
    throw TransportError(reason);
  }

  int n_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<GatherEntry<Scalar>> slots_;
  std::vector<GatherEntry<Scalar>> published_;
  std::vector<bool> deposited_;
  std::vector<long> rounds_;
  int arrived_ = 0;
  long generation_ = 0;
  std::string abort_reason_;
};

template <typename Scalar>
class InProcessTransport : public Transport<Scalar> {
 public:
  explicit InProcessTransport(std::shared_ptr<InProcessHub<Scalar>> hub) : hub_(std::move(hub)) {}
  std::vector<GatherEntry<Scalar>> allgather(long round, GatherEntry<Scalar> local) override {
    return hub_->allgather(round, std::move(local));
  }

 private:
  std::shared_ptr<InProcessHub<Scalar>> hub_;
};

}  // namespace swarmsync
