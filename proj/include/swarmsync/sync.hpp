#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "swarmsync/errors.hpp"
#include "swarmsync/rng.hpp"
#include "swarmsync/tensor.hpp"

namespace swarmsync {

// ---------------------------------------------------------------------------
// Synchronization strategies applied at each rendezvous: parameter
// averaging, synchronous SGD, and the swarm-based update with a linearly
// declining inertia weight and epoch-indexed damping of the attraction
// terms.
// ---------------------------------------------------------------------------

enum class Strategy { PA, SSGD, PSOPS };

inline std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::PA: return "pa";
    case Strategy::SSGD: return "ssgd";
    case Strategy::PSOPS: return "pso-ps";
  }
  return "?";
}

enum class LambdaMode { CurrentEpoch, FixedEpochSize };
enum class RMode { ScalarPerParticle, PerDimension };
enum class GBestMode { CurrentRound, Historical };

struct PsoConfig {
  double m_max = 0.9;
  double m_min = 0.3;
  double c1 = 0.2;
  double c2 = 0.9;
  LambdaMode lambda_mode = LambdaMode::CurrentEpoch;
  RMode r_mode = RMode::ScalarPerParticle;
  GBestMode gbest_mode = GBestMode::CurrentRound;

  bool operator==(const PsoConfig&) const = default;
};

struct SyncConfig {
  Strategy strategy = Strategy::PSOPS;
  long step = 10;  // synchronization period in local iterations
  PsoConfig pso;
  double ssgd_alpha = 0.0;  // <= 0 means "use the local learning rate"

  bool operator==(const SyncConfig&) const = default;
};

// One worker's swarm state. All three vectors share the model's parameter
// layout; velocity starts at zero and pbest_loss at +inf.
template <typename Scalar>
struct Particle {
  VecX<Scalar> position;
  VecX<Scalar> velocity;
  VecX<Scalar> pbest_position;
  double pbest_loss = std::numeric_limits<double>::infinity();
  int worker_index = 0;

  static Particle clone_from(const VecX<Scalar>& weights, int worker_index) {
    Particle p;
    p.position = weights;
    p.velocity = VecX<Scalar>::Zero(weights.size());
    p.pbest_position = weights;
    p.worker_index = worker_index;
    return p;
  }
};

template <typename Scalar>
struct GBest {
  VecX<Scalar> position;
  double loss = std::numeric_limits<double>::infinity();
  int worker_index = 0;
};

// The (worker, values, loss) triple moved by the collective gather.
template <typename Scalar>
struct GatherEntry {
  int worker_index = 0;
  double loss = 0.0;
  VecX<Scalar> values;
};

// Linearly declining inertia weight: m = m_max - t * (m_max - m_min) / t_max.
inline double inertia(long t, long t_max, const PsoConfig& cfg) {
  if (t_max < 1) throw ContractError("inertia: t_max must be >= 1");
  if (t < 0 || t > t_max) {
    throw ContractError("inertia: t = " + std::to_string(t) + " outside [0, " + std::to_string(t_max) + "]");
  }
  return cfg.m_max - static_cast<double>(t) * (cfg.m_max - cfg.m_min) / static_cast<double>(t_max);
}

// Random attraction coefficients for one particle update; size 1 under
// ScalarPerParticle, one per coordinate under PerDimension. r1 is drawn
// fully before r2.
template <typename Scalar>
struct PsoCoeffs {
  VecX<Scalar> r1;
  VecX<Scalar> r2;
};

template <typename Scalar>
PsoCoeffs<Scalar> draw_pso_coeffs(const PsoConfig& cfg, Index dim, RngStream& rng) {
  const Index n = cfg.r_mode == RMode::ScalarPerParticle ? 1 : dim;
  PsoCoeffs<Scalar> c;
  c.r1.resize(n);
  c.r2.resize(n);
  for (Index i = 0; i < n; ++i) c.r1[i] = static_cast<Scalar>(rng.uniform());
  for (Index i = 0; i < n; ++i) c.r2[i] = static_cast<Scalar>(rng.uniform());
  return c;
}

// v' = m v + (c1 r1 / lambda)(pbest - w) + (c2 r2 / lambda)(gbest - w)
// w' = w + v'
// pbest fields are left untouched.
template <typename Scalar>
Particle<Scalar> pso_update(const Particle<Scalar>& particle, const GBest<Scalar>& gbest, double m,
                            long lambda, const PsoConfig& cfg, const PsoCoeffs<Scalar>& coeffs) {
  const Index dim = particle.position.size();
  if (particle.velocity.size() != dim || particle.pbest_position.size() != dim ||
      gbest.position.size() != dim) {
    throw ShapeError("pso_update: particle/gbest vector layouts differ");
  }
  if (lambda < 1) throw ContractError("pso_update: lambda must be >= 1");

  const Scalar a1 = static_cast<Scalar>(cfg.c1 / static_cast<double>(lambda));
  const Scalar a2 = static_cast<Scalar>(cfg.c2 / static_cast<double>(lambda));

  Particle<Scalar> out = particle;
  if (cfg.r_mode == RMode::ScalarPerParticle || coeffs.r1.size() == 1) {
    out.velocity = static_cast<Scalar>(m) * particle.velocity +
                   (a1 * coeffs.r1[0]) * (particle.pbest_position - particle.position) +
                   (a2 * coeffs.r2[0]) * (gbest.position - particle.position);
  } else {
    if (coeffs.r1.size() != dim || coeffs.r2.size() != dim) {
      throw ShapeError("pso_update: per-dimension coefficients do not match layout");
    }
    out.velocity = static_cast<Scalar>(m) * particle.velocity.array() +
                   a1 * coeffs.r1.array() * (particle.pbest_position - particle.position).array() +
                   a2 * coeffs.r2.array() * (gbest.position - particle.position).array();
  }
  out.position = particle.position + out.velocity;

  for (Index i = 0; i < dim; ++i) {
    if (!std::isfinite(static_cast<double>(out.position[i]))) {
      throw NumericError("pso_update: non-finite position at coordinate " + std::to_string(i));
    }
  }
  return out;
}

// Personal-best bookkeeping; strict improvement only.
template <typename Scalar>
Particle<Scalar> update_pbest(const Particle<Scalar>& particle, double current_loss) {
  Particle<Scalar> out = particle;
  if (current_loss < particle.pbest_loss) {
    out.pbest_position = particle.position;
    out.pbest_loss = current_loss;
  }
  return out;
}

// argmin over the gathered losses; ties resolve to the lowest worker index.
template <typename Scalar>
GBest<Scalar> global_search(const std::vector<GatherEntry<Scalar>>& gathered) {
  if (gathered.empty()) throw ContractError("global_search: gathered list is empty");
  std::size_t best = 0;
  for (std::size_t i = 0; i < gathered.size(); ++i) {
    if (!std::isfinite(gathered[i].loss)) {
      throw NumericError("global_search: non-finite loss from worker " +
                         std::to_string(gathered[i].worker_index));
    }
    if (gathered[i].loss < gathered[best].loss) best = i;
  }
  return GBest<Scalar>{gathered[best].values, gathered[best].loss, gathered[best].worker_index};
}

// Elementwise mean of the gathered positions, in list order.
template <typename Scalar>
VecX<Scalar> pa_aggregate(const std::vector<VecX<Scalar>>& positions) {
  if (positions.empty()) throw ContractError("pa_aggregate: empty position list");
  const Index dim = positions.front().size();
  VecX<Scalar> sum = VecX<Scalar>::Zero(dim);
  for (const auto& p : positions) {
    if (p.size() != dim) throw ShapeError("pa_aggregate: position layouts differ");
    sum += p;
  }
  return sum / static_cast<Scalar>(positions.size());
}

template <typename Scalar>
VecX<Scalar> pa_aggregate(const std::vector<GatherEntry<Scalar>>& gathered) {
  if (gathered.empty()) throw ContractError("pa_aggregate: empty gather list");
  const Index dim = gathered.front().values.size();
  VecX<Scalar> sum = VecX<Scalar>::Zero(dim);
  for (const auto& e : gathered) {
    if (e.values.size() != dim) throw ShapeError("pa_aggregate: position layouts differ");
    sum += e.values;
  }
  return sum / static_cast<Scalar>(gathered.size());
}

// w' = w - alpha * mean(grads); the sign descends the loss.
template <typename Scalar>
VecX<Scalar> ssgd_aggregate(const VecX<Scalar>& base, const std::vector<VecX<Scalar>>& grads,
                            double alpha) {
  if (grads.empty()) throw ContractError("ssgd_aggregate: empty gradient list");
  VecX<Scalar> sum = VecX<Scalar>::Zero(base.size());
  for (const auto& g : grads) {
    if (g.size() != base.size()) throw ShapeError("ssgd_aggregate: gradient layouts differ");
    sum += g;
  }
  return base - static_cast<Scalar>(alpha) * (sum / static_cast<Scalar>(grads.size()));
}

template <typename Scalar>
VecX<Scalar> ssgd_aggregate(const VecX<Scalar>& base, const std::vector<GatherEntry<Scalar>>& gathered,
                            double alpha) {
  if (gathered.empty()) throw ContractError("ssgd_aggregate: empty gather list");
  VecX<Scalar> sum = VecX<Scalar>::Zero(base.size());
  for (const auto& e : gathered) {
    if (e.values.size() != base.size()) throw ShapeError("ssgd_aggregate: gradient layouts differ");
    sum += e.values;
  }
  return base - static_cast<Scalar>(alpha) * (sum / static_cast<Scalar>(gathered.size()));
}

}  // namespace swarmsync
