#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "semsr/error.hpp"

namespace semsr {

using Index = Eigen::Index;

/// Four-dimensional extent. For activations the axes are (batch, height,
/// width, channels); convolution kernels reuse the same type as
/// (kernel_h, kernel_w, in_channels, out_channels).
struct Shape {
  int n = 0;
  int h = 0;
  int w = 0;
  int c = 0;

  Index size() const { return Index(n) * h * w * c; }
  Index pixels() const { return Index(n) * h * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << '(' << n << ',' << h << ',' << w << ',' << c << ')';
    return os.str();
  }
};

/// Dense NHWC tensor backed by an Eigen array. Channel is the fastest axis,
/// so `matrix()` views the tensor as a row-major (pixels x channels) matrix.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  Tensor() = default;
  explicit Tensor(const Shape& shape) : shape_(shape), data_(Storage::Zero(shape.size())) {}
  Tensor(const Shape& shape, Scalar fill) : shape_(shape), data_(Storage::Constant(shape.size(), fill)) {}
  Tensor(const Shape& shape, Storage data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) throw ShapeError("tensor data does not match shape " + shape_.str());
  }

  static Tensor zeros(const Shape& shape) { return Tensor(shape); }
  static Tensor constant(const Shape& shape, Scalar value) { return Tensor(shape, value); }

  const Shape& shape() const { return shape_; }
  int batch() const { return shape_.n; }
  int height() const { return shape_.h; }
  int width() const { return shape_.w; }
  int channels() const { return shape_.c; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }

  MatrixMap matrix() { return MatrixMap(data_.data(), shape_.pixels(), shape_.c); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(data_.data(), shape_.pixels(), shape_.c); }

  Index offset(int n, int y, int x, int c) const {
    return ((Index(n) * shape_.h + y) * shape_.w + x) * shape_.c + c;
  }
  Scalar& operator()(int n, int y, int x, int c) { return data_[offset(n, y, x, c)]; }
  Scalar operator()(int n, int y, int x, int c) const { return data_[offset(n, y, x, c)]; }

  /// Same data, new extent. Total size must agree.
  Tensor reshaped(const Shape& shape) const {
    if (shape.size() != shape_.size()) throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
    return Tensor(shape, data_);
  }

  /// Copies batch entries [first, first + count).
  Tensor slice_batch(int first, int count) const {
    Shape s = shape_;
    s.n = count;
    const Index stride = Index(shape_.h) * shape_.w * shape_.c;
    return Tensor(s, data_.segment(first * stride, count * stride));
  }

  template <typename To>
  Tensor<To> cast() const {
    return Tensor<To>(shape_, data_.template cast<To>());
  }

  bool all_finite() const { return data_.isFinite().all(); }

 private:
  Shape shape_;
  Storage data_;
};

using ImageTensor = Tensor<float>;
using MaskTensor = Tensor<float>;
using PatchLogits = Tensor<float>;

/// H x W class-index image.
using LabelMask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

/// Stacks single images (batch 1 or more) along the batch axis.
template <typename Scalar>
Tensor<Scalar> concat_batch(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_batch: no tensors");
  Shape s = parts.front().shape();
  s.n = 0;
  for (const auto& p : parts) {
    if (p.height() != s.h || p.width() != s.w || p.channels() != s.c)
      throw ShapeError("concat_batch: inconsistent shapes " + p.shape().str());
    s.n += p.batch();
  }
  Tensor<Scalar> out(s);
  Index at = 0;
  for (const auto& p : parts) {
    out.array().segment(at, p.size()) = p.array();
    at += p.size();
  }
  return out;
}

}  // namespace semsr
