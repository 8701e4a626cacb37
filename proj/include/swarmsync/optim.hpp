#pragma once

#include <cmath>
#include <string>

#include "swarmsync/errors.hpp"
#include "swarmsync/tensor.hpp"

namespace swarmsync {

template <typename Scalar>
struct SgdConfig {
  Scalar eta = Scalar(0.01);
};

template <typename Scalar>
struct AdamConfig {
  Scalar eta = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
};

template <typename Scalar>
struct AdamState {
  VecX<Scalar> m;
  VecX<Scalar> v;
  long step = 0;

  static AdamState zero(Index dim) {
    return AdamState{VecX<Scalar>::Zero(dim), VecX<Scalar>::Zero(dim), 0};
  }
};

namespace detail {
inline void check_layouts(Index a, Index b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": parameter/gradient layouts differ (" + std::to_string(a) +
                     " vs " + std::to_string(b) + ")");
  }
}
}  // namespace detail

// w' = w - eta * g
template <typename Scalar>
VecX<Scalar> sgd_step(const VecX<Scalar>& params, const VecX<Scalar>& grad, const SgdConfig<Scalar>& cfg) {
  detail::check_layouts(params.size(), grad.size(), "sgd_step");
  if (!(cfg.eta > Scalar(0))) throw ConfigError("sgd: eta must be positive");
  return params - cfg.eta * grad;
}

// Bias-corrected Adam; advances `state` by one step.
template <typename Scalar>
VecX<Scalar> adam_step(const VecX<Scalar>& params, const VecX<Scalar>& grad, const AdamConfig<Scalar>& cfg,
                       AdamState<Scalar>& state) {
  detail::check_layouts(params.size(), grad.size(), "adam_step");
  detail::check_layouts(params.size(), state.m.size(), "adam_step");
  if (!(cfg.eta > Scalar(0))) throw ConfigError("adam: eta must be positive");
  state.step += 1;
  state.m = cfg.beta1 * state.m + (Scalar(1) - cfg.beta1) * grad;
  state.v.array() = cfg.beta2 * state.v.array() + (Scalar(1) - cfg.beta2) * grad.array().square();
  const Scalar bc1 = Scalar(1) - static_cast<Scalar>(std::pow(static_cast<double>(cfg.beta1), state.step));
  const Scalar bc2 = Scalar(1) - static_cast<Scalar>(std::pow(static_cast<double>(cfg.beta2), state.step));
  return params.array() -
         cfg.eta * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + cfg.eps);
}

enum class OptimizerKind { Sgd, Adam };

// Per-worker local optimizer; owns its state exclusively.
template <typename Scalar>
struct LocalOptimizer {
  OptimizerKind kind = OptimizerKind::Sgd;
  SgdConfig<Scalar> sgd;
  AdamConfig<Scalar> adam;
  AdamState<Scalar> state;

  static LocalOptimizer make_sgd(Scalar eta) {
    LocalOptimizer o;
    o.kind = OptimizerKind::Sgd;
    o.sgd.eta = eta;
    return o;
  }

  static LocalOptimizer make_adam(AdamConfig<Scalar> cfg, Index dim) {
    LocalOptimizer o;
    o.kind = OptimizerKind::Adam;
    o.adam = cfg;
    o.state = AdamState<Scalar>::zero(dim);
    return o;
  }

  VecX<Scalar> step(const VecX<Scalar>& params, const VecX<Scalar>& grad) {
    if (kind == OptimizerKind::Sgd) return sgd_step(params, grad, sgd);
    return adam_step(params, grad, adam, state);
  }
};

}  // namespace swarmsync
