#pragma once

#include <Eigen/QR>

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "semsr/nn_ops.hpp"
#include "semsr/spectral_norm.hpp"

namespace semsr {

template <typename Scalar>
using NamedVars = std::vector<std::pair<std::string, Var<Scalar>>>;

using Rng = std::mt19937_64;

/// He-normal initialised (k, k, in, out) kernel, multiplied by `scale`.
template <typename Scalar>
Tensor<Scalar> he_normal_kernel(int kernel, int in, int out, double scale, Rng& rng) {
  const double stddev = scale * std::sqrt(2.0 / double(kernel * kernel * in));
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<Scalar> w(Shape{kernel, kernel, in, out});
  for (Index i = 0; i < w.size(); ++i) w.array()[i] = Scalar(dist(rng));
  return w;
}

/// (k, k, in, out) kernel whose (k*k*in x out) matrix has orthonormal
/// columns (or rows, when out exceeds k*k*in), so every singular value is 1.
template <typename Scalar>
Tensor<Scalar> orthogonal_kernel(int kernel, int in, int out, Rng& rng) {
  const Index rows = Index(kernel) * kernel * in;
  const bool tall = rows >= out;
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd a(tall ? rows : out, tall ? out : rows);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = dist(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  // Sign fix makes the factorisation unique.
  for (Index j = 0; j < q.cols(); ++j)
    if (qr.matrixQR()(j, j) < 0) q.col(j) *= -1.0;
  Tensor<Scalar> w(Shape{kernel, kernel, in, out});
  if (tall)
    w.matrix() = q.cast<Scalar>();
  else
    w.matrix() = q.transpose().cast<Scalar>();
  return w;
}

template <typename Scalar>
struct Conv2d {
  Var<Scalar> weight;
  Var<Scalar> bias;
  int stride = 1;

  Conv2d() = default;
  Conv2d(int in, int out, int kernel, Rng& rng, int stride_ = 1, bool with_bias = true, double init_scale = 1.0)
      : weight(Var<Scalar>::parameter(he_normal_kernel<Scalar>(kernel, in, out, init_scale, rng))), stride(stride_) {
    if (with_bias) bias = Var<Scalar>::parameter(Tensor<Scalar>(Shape{1, 1, 1, out}));
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const { return conv2d(x, weight, bias, stride); }

  void collect(const std::string& prefix, NamedVars<Scalar>& params) const {
    params.emplace_back(prefix + ".weight", weight);
    if (bias.defined()) params.emplace_back(prefix + ".bias", bias);
  }
};

/// Convolution whose kernel is divided by a running estimate of its largest
/// singular value. The estimate only advances through `power_iterate`.
/// Kernels start orthogonal: a flat spectrum is estimated exactly, where a
/// Gaussian kernel's near-degenerate top singular values converge slowly.
template <typename Scalar>
struct SpectralConv2d {
  Conv2d<Scalar> conv;
  Var<Scalar> u;  // (1,1,1,out)
  Var<Scalar> v;  // (1,1,1,k*k*in)

  SpectralConv2d() = default;
  SpectralConv2d(int in, int out, int kernel, Rng& rng, int stride = 1, bool with_bias = true, int warmup_iters = 0)
      : conv(in, out, kernel, rng, stride, with_bias) {
    conv.weight.value_mut() = orthogonal_kernel<Scalar>(kernel, in, out, rng);
    const Index rows = Index(kernel) * kernel * in;
    u = Var<Scalar>(Tensor<Scalar>(Shape{1, 1, 1, out}));
    v = Var<Scalar>(Tensor<Scalar>(Shape{1, 1, 1, int(rows)}));
    u.value_mut().matrix().row(0) = random_unit_vector<Scalar>(out, rng).transpose();
    power_iterate(warmup_iters);
  }

  /// Kernel as the (out x k*k*in) matrix whose spectrum is normalised.
  auto kernel_matrix() const { return conv.weight.value().matrix().transpose(); }

  Vector<Scalar> u_vector() const { return u.value().matrix().row(0).transpose(); }
  Vector<Scalar> v_vector() const { return v.value().matrix().row(0).transpose(); }

  void power_iterate(int n_iters) {
    const auto st = semsr::power_iterate(kernel_matrix(), u_vector(), n_iters);
    u.value_mut().matrix().row(0) = st.u.transpose();
    v.value_mut().matrix().row(0) = st.v.transpose();
  }

  Scalar sigma_estimate() const { return u_vector().dot(kernel_matrix() * v_vector()); }

  /// The kernel actually applied in the forward pass.
  Tensor<Scalar> normalized_weight() const {
    NoGradGuard guard;
    return spectral_normalized(conv.weight, u_vector(), v_vector()).value();
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    return conv2d(x, spectral_normalized(conv.weight, u_vector(), v_vector()), conv.bias, conv.stride);
  }

  void collect(const std::string& prefix, NamedVars<Scalar>& params) const { conv.collect(prefix, params); }
  void collect_buffers(const std::string& prefix, NamedVars<Scalar>& buffers) const {
    buffers.emplace_back(prefix + ".sn_u", u);
    buffers.emplace_back(prefix + ".sn_v", v);
  }
};

template <typename Scalar>
struct BatchNorm2d {
  Var<Scalar> gamma;
  Var<Scalar> beta;
  Var<Scalar> running_mean;
  Var<Scalar> running_var;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels)
      : gamma(Var<Scalar>::parameter(Tensor<Scalar>(Shape{1, 1, 1, channels}, Scalar(1)))),
        beta(Var<Scalar>::parameter(Tensor<Scalar>(Shape{1, 1, 1, channels}))),
        running_mean(Tensor<Scalar>(Shape{1, 1, 1, channels})),
        running_var(Tensor<Scalar>(Shape{1, 1, 1, channels}, Scalar(1))) {}

  Var<Scalar> operator()(const Var<Scalar>& x, bool training) {
    return batch_norm(x, gamma, beta, running_mean.value_mut(), running_var.value_mut(), training);
  }

  void collect(const std::string& prefix, NamedVars<Scalar>& params) const {
    params.emplace_back(prefix + ".gamma", gamma);
    params.emplace_back(prefix + ".beta", beta);
  }
  void collect_buffers(const std::string& prefix, NamedVars<Scalar>& buffers) const {
    buffers.emplace_back(prefix + ".running_mean", running_mean);
    buffers.emplace_back(prefix + ".running_var", running_var);
  }
};

template <typename Scalar>
void set_requires_grad(const NamedVars<Scalar>& params, bool on) {
  for (auto [name, p] : params) p.set_requires_grad(on);
}

template <typename Scalar>
void zero_grad(const NamedVars<Scalar>& params) {
  for (auto [name, p] : params) p.zero_grad();
}

}  // namespace semsr
