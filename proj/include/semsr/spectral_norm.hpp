#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <random>

#include "semsr/autograd.hpp"

namespace semsr {

/// Floor applied to norms and to the singular value estimate.
inline constexpr double kSpectralEps = 1e-12;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct PowerIterationState {
  Vector<Scalar> u;  // left singular vector estimate (rows of W)
  Vector<Scalar> v;  // right singular vector estimate (columns of W)
  Scalar sigma = 0;
};

template <typename Derived>
Vector<typename Derived::Scalar> normalized_or_zero(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x / std::max<Scalar>(x.norm(), Scalar(kSpectralEps));
}

/// Runs `n_iters` rounds of v <- W^T u / |.|, u <- W v / |.| and returns the
/// estimate sigma = u^T W v of the largest singular value of W.
template <typename Derived>
PowerIterationState<typename Derived::Scalar> power_iterate(const Eigen::MatrixBase<Derived>& w,
                                                            const Vector<typename Derived::Scalar>& u0,
                                                            int n_iters) {
  using Scalar = typename Derived::Scalar;
  PowerIterationState<Scalar> st;
  st.u = u0;
  st.v = normalized_or_zero(w.transpose() * st.u);
  for (int i = 0; i < n_iters; ++i) {
    st.v = normalized_or_zero(w.transpose() * st.u);
    st.u = normalized_or_zero(w * st.v);
  }
  st.sigma = st.u.dot(w * st.v);
  return st;
}

template <typename Scalar>
struct SpectralNormalized {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> weight;
  Vector<Scalar> u_next;
  Scalar sigma = 0;
};

/// W / sigma_hat for a 2-D weight (out_channels x rest). `u` must have unit
/// norm. A zero matrix yields sigma_hat floored at 1e-12 and returns W.
template <typename Derived>
SpectralNormalized<typename Derived::Scalar> spectral_normalize(const Eigen::MatrixBase<Derived>& w,
                                                                const Vector<typename Derived::Scalar>& u,
                                                                int n_iters) {
  using Scalar = typename Derived::Scalar;
  const auto st = power_iterate(w, u, n_iters);
  SpectralNormalized<Scalar> out;
  out.sigma = std::max<Scalar>(st.sigma, Scalar(kSpectralEps));
  out.weight = w / out.sigma;
  out.u_next = st.u;
  return out;
}

template <typename Scalar, typename Rng>
Vector<Scalar> random_unit_vector(Index n, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector<Scalar> v(n);
  for (Index i = 0; i < n; ++i) v[i] = Scalar(dist(rng));
  return normalized_or_zero(v);
}

/// Differentiable W / sigma for a convolution kernel stored as
/// (k, k, in, out). The kernel is viewed as the (out x k*k*in) matrix
/// M = matrix()^T; u (out) and v (k*k*in) are held fixed, so
/// dL/dW = (G - <G, W_sn> v u^T) / sigma with G = dL/dW_sn.
template <typename Scalar>
Var<Scalar> spectral_normalized(const Var<Scalar>& weight, const Vector<Scalar>& u, const Vector<Scalar>& v) {
  const auto w = weight.value().matrix();  // (k*k*in) x out == M^T
  const Scalar sigma_raw = v.dot(w * u);
  const Scalar sigma = std::max<Scalar>(sigma_raw, Scalar(kSpectralEps));
  Tensor<Scalar> out(weight.shape(), weight.value().array() / sigma);
  auto wsn = std::make_shared<Tensor<Scalar>>(out);
  const bool floored = sigma_raw < Scalar(kSpectralEps);
  return make_result(std::move(out), {weight}, [wn = weight.node(), wsn, u, v, sigma, floored](const Tensor<Scalar>& g) {
    auto dw = wn->grad_buffer().matrix();
    if (floored) {
      dw += g.matrix() / sigma;
      return;
    }
    const Scalar inner = (g.array() * wsn->array()).sum();
    dw += (g.matrix() - inner * (v * u.transpose())) / sigma;
  });
}

}  // namespace semsr
