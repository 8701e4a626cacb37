#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "swarmsync/errors.hpp"

namespace swarmsync {

using Index = Eigen::Index;

template <typename Scalar>
using VecX = Eigen::Vector<Scalar, Eigen::Dynamic>;

template <typename Scalar>
using MatRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MatMap = Eigen::Map<MatRM<Scalar>>;

template <typename Scalar>
using ConstMatMap = Eigen::Map<const MatRM<Scalar>>;

inline Index numel(const std::vector<Index>& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

inline std::string shape_string(const std::vector<Index>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense n-d value array, row-major. Structure beyond the flat buffer is
// carried by `shape`; 2-d views are taken with as_matrix().
template <typename Scalar>
struct Tensor {
  std::vector<Index> shape;
  VecX<Scalar> data;

  Tensor() = default;
  Tensor(std::vector<Index> s, VecX<Scalar> d) : shape(std::move(s)), data(std::move(d)) {
    for (Index dim : shape) {
      if (dim <= 0) throw ShapeError("tensor dimension must be positive, got shape " + shape_string(shape));
    }
    if (numel(shape) != data.size()) {
      throw ShapeError("tensor shape " + shape_string(shape) + " does not match buffer of " +
                       std::to_string(data.size()) + " values");
    }
  }

  static Tensor zeros(std::vector<Index> s) {
    const Index n = numel(s);
    return Tensor(std::move(s), VecX<Scalar>::Zero(n));
  }

  Index size() const { return data.size(); }
  Index rank() const { return static_cast<Index>(shape.size()); }

  ConstMatMap<Scalar> as_matrix(Index rows, Index cols) const {
    if (rows * cols != data.size()) {
      throw ShapeError("cannot view " + std::to_string(data.size()) + " values as " +
                       std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
    }
    return ConstMatMap<Scalar>(data.data(), rows, cols);
  }

  MatMap<Scalar> as_matrix(Index rows, Index cols) {
    if (rows * cols != data.size()) {
      throw ShapeError("cannot view " + std::to_string(data.size()) + " values as " +
                       std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
    }
    return MatMap<Scalar>(data.data(), rows, cols);
  }
};

}  // namespace swarmsync
