#pragma once

#include <Eigen/Dense>

#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace tnbm {

template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
// Row-major map so flat row-major buffers reshape to matrices without copies.
template <class Scalar>
using MatrixRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class BoundaryError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// N-dimensional real array, row-major. Shapes are immutable after
/// construction; the flat buffer is exposed for linear-algebra views.
template <class Scalar = double>
class DenseTensor {
public:
  DenseTensor() = default;

  explicit DenseTensor(std::vector<Index> shape)
      : shape_(std::move(shape)), data_(checked_size(shape_)) {
    data_.setZero();
  }

  DenseTensor(std::vector<Index> shape, VectorX<Scalar> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size())
      throw DimensionError("DenseTensor: shape/product mismatch with buffer length");
  }

  const std::vector<Index>& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index extent(Index axis) const { return shape_.at(static_cast<size_t>(axis)); }
  Index size() const { return data_.size(); }

  VectorX<Scalar>& data() { return data_; }
  const VectorX<Scalar>& data() const { return data_; }

  Scalar& operator()(Index i, Index j, Index k) {
    return data_[flat3(i, j, k)];
  }
  Scalar operator()(Index i, Index j, Index k) const {
    return data_[flat3(i, j, k)];
  }

  /// View a rank-3 tensor (a, b, c) as the (a*b) x c matrix of its row-major
  /// buffer. Used for left-orthogonal factorizations.
  Eigen::Map<const MatrixRM<Scalar>> as_matrix_left() const {
    require_rank3();
    return {data_.data(), shape_[0] * shape_[1], shape_[2]};
  }
  Eigen::Map<MatrixRM<Scalar>> as_matrix_left() {
    require_rank3();
    return {data_.data(), shape_[0] * shape_[1], shape_[2]};
  }

  /// View a rank-3 tensor (a, b, c) as the a x (b*c) matrix.
  Eigen::Map<const MatrixRM<Scalar>> as_matrix_right() const {
    require_rank3();
    return {data_.data(), shape_[0], shape_[1] * shape_[2]};
  }
  Eigen::Map<MatrixRM<Scalar>> as_matrix_right() {
    require_rank3();
    return {data_.data(), shape_[0], shape_[1] * shape_[2]};
  }

  Scalar norm() const { return data_.norm(); }

private:
  static Index checked_size(const std::vector<Index>& shape) {
    Index n = 1;
    for (Index e : shape) {
      if (e < 1) throw DimensionError("DenseTensor: extents must be >= 1");
      n *= e;
    }
    return n;
  }

  Index flat3(Index i, Index j, Index k) const {
    return (i * shape_[1] + j) * shape_[2] + k;
  }

  void require_rank3() const {
    if (shape_.size() != 3) throw DimensionError("DenseTensor: rank-3 view on non-rank-3 tensor");
  }

  std::vector<Index> shape_;
  VectorX<Scalar> data_;
};

}  // namespace tnbm
