#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "swarmsync/errors.hpp"
#include "swarmsync/rng.hpp"
#include "swarmsync/tensor.hpp"

namespace swarmsync {

// ---------------------------------------------------------------------------
// Layer descriptors and model specification.
//
// Shape conventions (per sample, batch dimension excluded):
//   Dense      [in]        -> [out]
//   Relu       any         -> same
//   Conv2d     [C, H, W]   -> [out_ch, (H-k)/s+1, (W-k)/s+1]   (valid padding)
//   MaxPool    [C, H, W]   -> [C, H/k, W/k]                    (stride == k)
//   Flatten    any         -> [prod]
// ---------------------------------------------------------------------------

struct Dense {
  Index in = 0;
  Index out = 0;
};
struct Relu {};
struct Conv2d {
  Index in_ch = 0;
  Index out_ch = 0;
  Index kernel = 0;
  Index stride = 1;
};
struct MaxPool {
  Index k = 0;
};
struct Flatten {};

using Layer = std::variant<Dense, Relu, Conv2d, MaxPool, Flatten>;

struct ModelSpec {
  std::vector<Layer> layers;
  std::vector<Index> input_shape;  // per-sample
  Index num_classes = 0;
};

inline std::string layer_name(const Layer& layer) {
  struct Visitor {
    std::string operator()(const Dense& d) const {
      return "Dense{" + std::to_string(d.in) + "," + std::to_string(d.out) + "}";
    }
    std::string operator()(const Relu&) const { return "ReLU"; }
    std::string operator()(const Conv2d& c) const {
      return "Conv2D{" + std::to_string(c.in_ch) + "," + std::to_string(c.out_ch) + ",k" +
             std::to_string(c.kernel) + ",s" + std::to_string(c.stride) + "}";
    }
    std::string operator()(const MaxPool& p) const { return "MaxPool{" + std::to_string(p.k) + "}"; }
    std::string operator()(const Flatten&) const { return "Flatten"; }
  };
  return std::visit(Visitor{}, layer);
}

// Per-sample output shape of one layer; throws ShapeError naming the layer.
inline std::vector<Index> layer_output_shape(const Layer& layer, const std::vector<Index>& in,
                                             Index layer_index) {
  auto fail = [&](const std::string& why) -> std::vector<Index> {
    throw ShapeError("layer " + std::to_string(layer_index) + " (" + layer_name(layer) + "): " + why +
                     ", input shape " + shape_string(in));
  };
  if (const auto* d = std::get_if<Dense>(&layer)) {
    if (d->in <= 0 || d->out <= 0) return fail("dimensions must be positive");
    if (in.size() != 1 || in[0] != d->in) return fail("expects a flat input of size " + std::to_string(d->in));
    return {d->out};
  }
  if (std::get_if<Relu>(&layer)) {
    if (in.empty()) return fail("needs an input");
    return in;
  }
  if (const auto* c = std::get_if<Conv2d>(&layer)) {
    if (c->in_ch <= 0 || c->out_ch <= 0 || c->kernel <= 0 || c->stride <= 0)
      return fail("dimensions must be positive");
    if (in.size() != 3) return fail("expects a [C,H,W] input");
    if (in[0] != c->in_ch) return fail("expects " + std::to_string(c->in_ch) + " input channels");
    if (in[1] < c->kernel || in[2] < c->kernel) return fail("kernel larger than spatial input");
    const Index ho = (in[1] - c->kernel) / c->stride + 1;
    const Index wo = (in[2] - c->kernel) / c->stride + 1;
    return {c->out_ch, ho, wo};
  }
  if (const auto* p = std::get_if<MaxPool>(&layer)) {
    if (p->k <= 0) return fail("window must be positive");
    if (in.size() != 3) return fail("expects a [C,H,W] input");
    if (in[1] < p->k || in[2] < p->k) return fail("window larger than spatial input");
    return {in[0], in[1] / p->k, in[2] / p->k};
  }
  // Flatten
  if (in.empty()) return fail("needs an input");
  return {numel(in)};
}

// Walks the layer chain; returns the final per-sample shape.
inline std::vector<Index> validate_spec(const ModelSpec& spec) {
  if (spec.num_classes <= 0) throw ConfigError("model: num_classes must be positive");
  if (spec.input_shape.empty()) throw ConfigError("model: input_shape must be non-empty");
  for (Index d : spec.input_shape) {
    if (d <= 0) throw ConfigError("model: input_shape dimensions must be positive");
  }
  std::vector<Index> shape = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    shape = layer_output_shape(spec.layers[i], shape, static_cast<Index>(i));
  }
  if (shape.size() != 1 || shape[0] != spec.num_classes) {
    throw ConfigError("model: final output shape " + shape_string(shape) + " does not match num_classes " +
                      std::to_string(spec.num_classes));
  }
  return shape;
}

// ---------------------------------------------------------------------------
// Flat parameter layout: layer index order, weights before biases within a
// layer. flatten/unflatten over this layout is a bijection by construction.
// ---------------------------------------------------------------------------

enum class ParamRole { Weight, Bias };

struct ParamSegment {
  Index layer = 0;
  ParamRole role = ParamRole::Weight;
  std::vector<Index> shape;
  Index offset = 0;
  Index size = 0;
};

struct ParamLayout {
  std::vector<ParamSegment> segments;
  Index total_size = 0;
};

inline ParamLayout make_layout(const ModelSpec& spec) {
  ParamLayout layout;
  Index offset = 0;
  auto push = [&](Index layer, ParamRole role, std::vector<Index> shape) {
    const Index size = numel(shape);
    layout.segments.push_back({layer, role, std::move(shape), offset, size});
    offset += size;
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const Index li = static_cast<Index>(i);
    if (const auto* d = std::get_if<Dense>(&spec.layers[i])) {
      push(li, ParamRole::Weight, {d->in, d->out});
      push(li, ParamRole::Bias, {d->out});
    } else if (const auto* c = std::get_if<Conv2d>(&spec.layers[i])) {
      push(li, ParamRole::Weight, {c->out_ch, c->in_ch, c->kernel, c->kernel});
      push(li, ParamRole::Bias, {c->out_ch});
    }
  }
  layout.total_size = offset;
  return layout;
}

// Unflatten: one tensor per segment, in layout order.
template <typename Scalar>
std::vector<Tensor<Scalar>> unflatten(const ParamLayout& layout, const VecX<Scalar>& params) {
  if (params.size() != layout.total_size) {
    throw ShapeError("parameter vector of size " + std::to_string(params.size()) +
                     " does not match layout size " + std::to_string(layout.total_size));
  }
  std::vector<Tensor<Scalar>> out;
  out.reserve(layout.segments.size());
  for (const auto& seg : layout.segments) {
    out.emplace_back(seg.shape, params.segment(seg.offset, seg.size));
  }
  return out;
}

template <typename Scalar>
VecX<Scalar> flatten(const ParamLayout& layout, const std::vector<Tensor<Scalar>>& tensors) {
  if (tensors.size() != layout.segments.size()) {
    throw ShapeError("tensor list does not match layout segment count");
  }
  VecX<Scalar> params(layout.total_size);
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& seg = layout.segments[i];
    if (tensors[i].shape != seg.shape) {
      throw ShapeError("segment " + std::to_string(i) + " shape mismatch");
    }
    params.segment(seg.offset, seg.size) = tensors[i].data;
  }
  return params;
}

// Glorot-uniform weights, zero biases, deterministic in `seed`. Draws are
// consumed segment by segment in layout order.
template <typename Scalar>
VecX<Scalar> init_params(const ModelSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  const ParamLayout layout = make_layout(spec);
  VecX<Scalar> params = VecX<Scalar>::Zero(layout.total_size);
  RngStream rng(seed);
  for (const auto& seg : layout.segments) {
    if (seg.role != ParamRole::Weight) continue;
    Index fan_in = 0, fan_out = 0;
    if (const auto* d = std::get_if<Dense>(&spec.layers[seg.layer])) {
      fan_in = d->in;
      fan_out = d->out;
    } else if (const auto* c = std::get_if<Conv2d>(&spec.layers[seg.layer])) {
      fan_in = c->in_ch * c->kernel * c->kernel;
      fan_out = c->out_ch * c->kernel * c->kernel;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Index j = 0; j < seg.size; ++j) {
      params[seg.offset + j] = static_cast<Scalar>(rng.uniform(-bound, bound));
    }
  }
  return params;
}

// ---------------------------------------------------------------------------
// Batch and forward/backward evaluation.
// ---------------------------------------------------------------------------

// Inputs are stored flattened per sample ([B, D]); the model interprets D
// through its input_shape (row-major, so no data movement is implied).
template <typename Scalar>
struct Batch {
  Tensor<Scalar> inputs;
  Eigen::VectorXi labels;
};

template <typename Scalar>
struct ActivationCache {
  std::vector<Tensor<Scalar>> inputs;           // input of each layer; inputs[0] is the batch
  std::vector<std::vector<Index>> pool_argmax;  // per layer; flat source index per output value
  Tensor<Scalar> logits;
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> dense_forward(const Tensor<Scalar>& x, const Dense& d, const VecX<Scalar>& params,
                             const ParamSegment& wseg, const ParamSegment& bseg) {
  const Index batch = x.shape[0];
  ConstMatMap<Scalar> w(params.data() + wseg.offset, d.in, d.out);
  Eigen::Map<const Eigen::RowVector<Scalar, Eigen::Dynamic>> b(params.data() + bseg.offset, d.out);
  Tensor<Scalar> y = Tensor<Scalar>::zeros({batch, d.out});
  y.as_matrix(batch, d.out) = (x.as_matrix(batch, d.in) * w).rowwise() + b;
  return y;
}

// im2col with one column per output position: col(q, p) where
// q = (c*k + di)*k + dj and p = i*wo + j.
template <typename Scalar>
MatRM<Scalar> im2col(const Scalar* sample, const Conv2d& c, Index h, Index w, Index ho, Index wo) {
  const Index k = c.kernel;
  MatRM<Scalar> col(c.in_ch * k * k, ho * wo);
  for (Index ch = 0; ch < c.in_ch; ++ch) {
    const Scalar* plane = sample + ch * h * w;
    for (Index di = 0; di < k; ++di) {
      for (Index dj = 0; dj < k; ++dj) {
        const Index q = (ch * k + di) * k + dj;
        for (Index i = 0; i < ho; ++i) {
          const Scalar* row = plane + (i * c.stride + di) * w + dj;
          for (Index j = 0; j < wo; ++j) {
            col(q, i * wo + j) = row[j * c.stride];
          }
        }
      }
    }
  }
  return col;
}

template <typename Scalar>
Tensor<Scalar> conv_forward(const Tensor<Scalar>& x, const Conv2d& c, const VecX<Scalar>& params,
                            const ParamSegment& wseg, const ParamSegment& bseg) {
  const Index batch = x.shape[0], h = x.shape[2], w = x.shape[3];
  const Index ho = (h - c.kernel) / c.stride + 1;
  const Index wo = (w - c.kernel) / c.stride + 1;
  ConstMatMap<Scalar> wmat(params.data() + wseg.offset, c.out_ch, c.in_ch * c.kernel * c.kernel);
  Eigen::Map<const VecX<Scalar>> b(params.data() + bseg.offset, c.out_ch);
  Tensor<Scalar> y = Tensor<Scalar>::zeros({batch, c.out_ch, ho, wo});
  const Index in_stride = x.size() / batch;
  const Index out_stride = c.out_ch * ho * wo;
  for (Index s = 0; s < batch; ++s) {
    const MatRM<Scalar> col = im2col(x.data.data() + s * in_stride, c, h, w, ho, wo);
    MatMap<Scalar> out(y.data.data() + s * out_stride, c.out_ch, ho * wo);
    out = (wmat * col).colwise() + b;
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> maxpool_forward(const Tensor<Scalar>& x, const MaxPool& p, std::vector<Index>& argmax) {
  const Index batch = x.shape[0], ch = x.shape[1], h = x.shape[2], w = x.shape[3];
  const Index ho = h / p.k, wo = w / p.k;
  Tensor<Scalar> y = Tensor<Scalar>::zeros({batch, ch, ho, wo});
  argmax.assign(static_cast<std::size_t>(y.size()), 0);
  Index out_pos = 0;
  for (Index s = 0; s < batch; ++s) {
    for (Index c = 0; c < ch; ++c) {
      const Scalar* plane = x.data.data() + (s * ch + c) * h * w;
      const Index plane_off = (s * ch + c) * h * w;
      for (Index i = 0; i < ho; ++i) {
        for (Index j = 0; j < wo; ++j) {
          // first maximum in row-major scan order wins ties
          Index best = (i * p.k) * w + (j * p.k);
          Scalar best_val = plane[best];
          for (Index di = 0; di < p.k; ++di) {
            for (Index dj = 0; dj < p.k; ++dj) {
              const Index idx = (i * p.k + di) * w + (j * p.k + dj);
              if (plane[idx] > best_val) {
                best_val = plane[idx];
                best = idx;
              }
            }
          }
          y.data[out_pos] = best_val;
          argmax[static_cast<std::size_t>(out_pos)] = plane_off + best;
          ++out_pos;
        }
      }
    }
  }
  return y;
}

}  // namespace detail

template <typename Scalar>
std::pair<Tensor<Scalar>, ActivationCache<Scalar>> forward(const ModelSpec& spec,
                                                           const VecX<Scalar>& params,
                                                           const Batch<Scalar>& batch) {
  validate_spec(spec);
  const ParamLayout layout = make_layout(spec);
  if (params.size() != layout.total_size) {
    throw ShapeError("parameter vector of size " + std::to_string(params.size()) +
                     " does not match model with " + std::to_string(layout.total_size) + " parameters");
  }
  if (batch.inputs.rank() != 2) throw ShapeError("batch inputs must be [B, D]");
  const Index b = batch.inputs.shape[0];
  if (b < 1) throw ShapeError("batch must contain at least one sample");
  if (batch.inputs.shape[1] != numel(spec.input_shape)) {
    throw ShapeError("batch sample size " + std::to_string(batch.inputs.shape[1]) +
                     " does not match model input shape " + shape_string(spec.input_shape));
  }
  if (batch.labels.size() != b) throw ShapeError("batch labels do not match batch size");

  ActivationCache<Scalar> cache;
  cache.pool_argmax.resize(spec.layers.size());

  // Re-tag the flat batch with the model's input shape; data is shared layout.
  std::vector<Index> cur_shape = {b};
  cur_shape.insert(cur_shape.end(), spec.input_shape.begin(), spec.input_shape.end());
  Tensor<Scalar> cur(cur_shape, batch.inputs.data);

  // Segment lookup: parameterized layers consume two segments in order.
  std::size_t seg_idx = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    cache.inputs.push_back(cur);
    const Layer& layer = spec.layers[i];
    if (const auto* d = std::get_if<Dense>(&layer)) {
      const auto& wseg = layout.segments[seg_idx++];
      const auto& bseg = layout.segments[seg_idx++];
      cur = detail::dense_forward(cur, *d, params, wseg, bseg);
    } else if (std::get_if<Relu>(&layer)) {
      cur = Tensor<Scalar>(cur.shape, cur.data.cwiseMax(Scalar(0)));
    } else if (const auto* c = std::get_if<Conv2d>(&layer)) {
      const auto& wseg = layout.segments[seg_idx++];
      const auto& bseg = layout.segments[seg_idx++];
      cur = detail::conv_forward(cur, *c, params, wseg, bseg);
    } else if (const auto* p = std::get_if<MaxPool>(&layer)) {
      cur = detail::maxpool_forward(cur, *p, cache.pool_argmax[i]);
    } else {
      cur = Tensor<Scalar>({b, cur.size() / b}, cur.data);
    }
  }
  cache.logits = cur;
  return {cur, std::move(cache)};
}

// Mean softmax cross-entropy over the batch plus the exact parameter
// gradient via backpropagation. The softmax is max-stabilized, so a
// non-finite loss can only come from non-finite inputs or parameters.
template <typename Scalar>
std::pair<double, VecX<Scalar>> loss_and_grad(const ModelSpec& spec, const VecX<Scalar>& params,
                                              const Batch<Scalar>& batch) {
  auto [logits, cache] = forward(spec, params, batch);
  const Index b = logits.shape[0];
  const Index k = logits.shape[1];
  for (Index s = 0; s < b; ++s) {
    if (batch.labels[s] < 0 || batch.labels[s] >= k) {
      throw ContractError("label " + std::to_string(batch.labels[s]) + " outside [0, " +
                          std::to_string(k) + ")");
    }
  }

  auto lm = logits.as_matrix(b, k);
  Tensor<Scalar> dlogits = Tensor<Scalar>::zeros(logits.shape);
  auto dm = dlogits.as_matrix(b, k);
  double loss = 0.0;
  for (Index s = 0; s < b; ++s) {
    const Scalar row_max = lm.row(s).maxCoeff();
    Eigen::RowVector<Scalar, Eigen::Dynamic> z = lm.row(s).array() - row_max;
    Eigen::RowVector<Scalar, Eigen::Dynamic> e = z.array().exp();
    const Scalar denom = e.sum();
    loss += static_cast<double>(std::log(denom) - z[batch.labels[s]]);
    dm.row(s) = e / (denom * static_cast<Scalar>(b));
    dm(s, batch.labels[s]) -= Scalar(1) / static_cast<Scalar>(b);
  }
  loss /= static_cast<double>(b);
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite loss (check inputs and parameters for overflow)");
  }

  // Backward sweep.
  const ParamLayout layout = make_layout(spec);
  VecX<Scalar> grad = VecX<Scalar>::Zero(layout.total_size);

  // Map each parameterized layer to its segment pair.
  std::vector<std::pair<Index, Index>> seg_of_layer(spec.layers.size(), {-1, -1});
  for (std::size_t s = 0; s < layout.segments.size(); s += 2) {
    seg_of_layer[static_cast<std::size_t>(layout.segments[s].layer)] = {static_cast<Index>(s),
                                                                        static_cast<Index>(s + 1)};
  }

  Tensor<Scalar> dcur = std::move(dlogits);
  for (std::size_t ri = spec.layers.size(); ri-- > 0;) {
    const Layer& layer = spec.layers[ri];
    const Tensor<Scalar>& x = cache.inputs[ri];
    if (const auto* d = std::get_if<Dense>(&layer)) {
      const auto& wseg = layout.segments[seg_of_layer[ri].first];
      const auto& bseg = layout.segments[seg_of_layer[ri].second];
      ConstMatMap<Scalar> w(params.data() + wseg.offset, d->in, d->out);
      MatMap<Scalar> dw(grad.data() + wseg.offset, d->in, d->out);
      Eigen::Map<Eigen::RowVector<Scalar, Eigen::Dynamic>> db(grad.data() + bseg.offset, d->out);
      auto dy = dcur.as_matrix(x.shape[0], d->out);
      dw = x.as_matrix(x.shape[0], d->in).transpose() * dy;
      db = dy.colwise().sum();
      Tensor<Scalar> dx = Tensor<Scalar>::zeros(x.shape);
      dx.as_matrix(x.shape[0], d->in) = dy * w.transpose();
      dcur = std::move(dx);
    } else if (std::get_if<Relu>(&layer)) {
      Tensor<Scalar> dx(x.shape,
                        (x.data.array() > Scalar(0)).select(dcur.data, VecX<Scalar>::Zero(x.size())));
      dcur = std::move(dx);
    } else if (const auto* c = std::get_if<Conv2d>(&layer)) {
      const auto& wseg = layout.segments[seg_of_layer[ri].first];
      const auto& bseg = layout.segments[seg_of_layer[ri].second];
      const Index batch_n = x.shape[0], h = x.shape[2], w_in = x.shape[3];
      const Index ho = (h - c->kernel) / c->stride + 1;
      const Index wo = (w_in - c->kernel) / c->stride + 1;
      ConstMatMap<Scalar> wmat(params.data() + wseg.offset, c->out_ch, c->in_ch * c->kernel * c->kernel);
      MatMap<Scalar> dwmat(grad.data() + wseg.offset, c->out_ch, c->in_ch * c->kernel * c->kernel);
      Eigen::Map<VecX<Scalar>> db(grad.data() + bseg.offset, c->out_ch);
      Tensor<Scalar> dx = Tensor<Scalar>::zeros(x.shape);
      const Index in_stride = x.size() / batch_n;
      const Index out_stride = c->out_ch * ho * wo;
      for (Index s = 0; s < batch_n; ++s) {
        // the col matrix is rebuilt here instead of cached from the forward
        const MatRM<Scalar> col = detail::im2col(x.data.data() + s * in_stride, *c, h, w_in, ho, wo);
        ConstMatMap<Scalar> dy(dcur.data.data() + s * out_stride, c->out_ch, ho * wo);
        dwmat += dy * col.transpose();
        db += dy.rowwise().sum();
        const MatRM<Scalar> dcol = wmat.transpose() * dy;
        // col2im scatter-add
        Scalar* dplane_base = dx.data.data() + s * in_stride;
        for (Index ch = 0; ch < c->in_ch; ++ch) {
          Scalar* dplane = dplane_base + ch * h * w_in;
          for (Index di = 0; di < c->kernel; ++di) {
            for (Index dj = 0; dj < c->kernel; ++dj) {
              const Index q = (ch * c->kernel + di) * c->kernel + dj;
              for (Index i = 0; i < ho; ++i) {
                Scalar* row = dplane + (i * c->stride + di) * w_in + dj;
                for (Index j = 0; j < wo; ++j) {
                  row[j * c->stride] += dcol(q, i * wo + j);
                }
              }
            }
          }
        }
      }
      dcur = std::move(dx);
    } else if (std::get_if<MaxPool>(&layer)) {
      Tensor<Scalar> dx = Tensor<Scalar>::zeros(x.shape);
      const auto& argmax = cache.pool_argmax[ri];
      for (std::size_t o = 0; o < argmax.size(); ++o) {
        dx.data[argmax[o]] += dcur.data[static_cast<Index>(o)];
      }
      dcur = std::move(dx);
    } else {
      dcur = Tensor<Scalar>(x.shape, dcur.data);
    }
  }
  return {loss, std::move(grad)};
}

// Mean softmax cross-entropy of already-computed logits (no gradient).
template <typename Scalar>
double softmax_cross_entropy(const Tensor<Scalar>& logits, const Eigen::VectorXi& labels) {
  if (logits.rank() != 2) throw ShapeError("logits must be [B, K]");
  const Index b = logits.shape[0], k = logits.shape[1];
  if (labels.size() != b) throw ShapeError("labels do not match logits batch size");
  auto lm = logits.as_matrix(b, k);
  double loss = 0.0;
  for (Index s = 0; s < b; ++s) {
    if (labels[s] < 0 || labels[s] >= k) {
      throw ContractError("label " + std::to_string(labels[s]) + " outside [0, " + std::to_string(k) + ")");
    }
    const Scalar row_max = lm.row(s).maxCoeff();
    Eigen::RowVector<Scalar, Eigen::Dynamic> z = lm.row(s).array() - row_max;
    loss += static_cast<double>(std::log(z.array().exp().sum()) - z[labels[s]]);
  }
  loss /= static_cast<double>(b);
  if (!std::isfinite(loss)) throw NumericError("non-finite loss (check inputs and parameters)");
  return loss;
}

// Fraction of rows whose argmax matches the label; ties go to the lowest
// class index.
template <typename Scalar>
double accuracy(const Tensor<Scalar>& logits, const Eigen::VectorXi& labels) {
  if (logits.rank() != 2) throw ShapeError("logits must be [B, K]");
  const Index b = logits.shape[0], k = logits.shape[1];
  if (labels.size() != b) throw ShapeError("labels do not match logits batch size");
  Index correct = 0;
  auto lm = logits.as_matrix(b, k);
  for (Index s = 0; s < b; ++s) {
    Index best = 0;
    for (Index j = 1; j < k; ++j) {
      if (lm(s, j) > lm(s, best)) best = j;
    }
    if (best == labels[s]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(b);
}

}  // namespace swarmsync
