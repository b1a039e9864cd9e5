#pragma once

#include <cmath>
#include <string>

#include "semsr/autograd.hpp"

namespace semsr {

/// Weights of the combined generator objective
/// total = alpha * gan + beta * feat + gamma * mae.
struct LossWeights {
  double alpha = 1e-3;
  double beta = 5.0;
  double gamma = 1e-3;

  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0) throw ConfigError("loss weights must be non-negative");
  }
};

struct LossBreakdown {
  double total = 0;
  double gan = 0;
  double feat = 0;
  double mae = 0;
};

enum class FeatureLossKind { kL2, kBce };

inline FeatureLossKind parse_feature_loss(const std::string& s) {
  if (s == "l2") return FeatureLossKind::kL2;
  if (s == "bce") return FeatureLossKind::kBce;
  throw ConfigError("feat_loss must be 'l2' or 'bce', got '" + s + "'");
}

inline const char* to_string(FeatureLossKind k) { return k == FeatureLossKind::kL2 ? "l2" : "bce"; }

/// log(sigmoid(z)) without forming sigmoid(z).
template <typename Scalar>
Scalar log_sigmoid(Scalar z) {
  return std::min(z, Scalar(0)) - std::log1p(std::exp(-std::abs(z)));
}

template <typename Scalar>
Scalar stable_sigmoid(Scalar z) {
  if (z >= 0) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

// ---------------------------------------------------------------------------
// Value / gradient kernels. Gradients are with respect to the second
// (predicted) argument unless noted.

template <typename Scalar>
Scalar mae_value(const Tensor<Scalar>& x, const Tensor<Scalar>& x_hat) {
  require_same_shape(x.shape(), x_hat.shape(), "mae_loss");
  return (x.array() - x_hat.array()).abs().mean();
}

template <typename Scalar>
Tensor<Scalar> mae_grad(const Tensor<Scalar>& x, const Tensor<Scalar>& x_hat) {
  const Scalar inv_n = Scalar(1) / Scalar(x.size());
  const auto d = (x_hat.array() - x.array()).eval();
  return Tensor<Scalar>(x.shape(), ((d > 0).template cast<Scalar>() - (d < 0).template cast<Scalar>()) * inv_n);
}

template <typename Scalar>
Scalar feature_l2_value(const Tensor<Scalar>& fx, const Tensor<Scalar>& fx_hat) {
  require_same_shape(fx.shape(), fx_hat.shape(), "feature_loss");
  return (fx.array() - fx_hat.array()).square().mean();
}

template <typename Scalar>
Tensor<Scalar> feature_l2_grad(const Tensor<Scalar>& fx, const Tensor<Scalar>& fx_hat) {
  return Tensor<Scalar>(fx.shape(), (fx_hat.array() - fx.array()) * (Scalar(2) / Scalar(fx.size())));
}

/// Binary cross-entropy of predicted probabilities against target
/// probabilities, averaged over every element.
template <typename Scalar>
Scalar feature_bce_value(const Tensor<Scalar>& fx, const Tensor<Scalar>& fx_hat, Scalar eps = Scalar(1e-7)) {
  require_same_shape(fx.shape(), fx_hat.shape(), "feature_loss");
  const auto p = fx_hat.array().max(eps).min(Scalar(1) - eps);
  return -(fx.array() * p.log() + (Scalar(1) - fx.array()) * (Scalar(1) - p).log()).mean();
}

template <typename Scalar>
Tensor<Scalar> feature_bce_grad(const Tensor<Scalar>& fx, const Tensor<Scalar>& fx_hat, Scalar eps = Scalar(1e-7)) {
  const auto p = fx_hat.array().max(eps).min(Scalar(1) - eps).eval();
  const auto inside = ((fx_hat.array() > eps) && (fx_hat.array() < Scalar(1) - eps)).template cast<Scalar>();
  return Tensor<Scalar>(fx.shape(),
                        inside * ((p - fx.array()) / (p * (Scalar(1) - p))) / Scalar(fx.size()));
}

/// -mean(log sigmoid(logits)): the non-saturating generator objective.
template <typename Scalar>
Scalar gan_generator_value(const Tensor<Scalar>& logits_fake) {
  Scalar acc = 0;
  for (Index i = 0; i < logits_fake.size(); ++i) acc -= log_sigmoid(logits_fake.array()[i]);
  return acc / Scalar(logits_fake.size());
}

template <typename Scalar>
Tensor<Scalar> gan_generator_grad(const Tensor<Scalar>& logits_fake) {
  Tensor<Scalar> g(logits_fake.shape());
  const Scalar inv_n = Scalar(1) / Scalar(logits_fake.size());
  for (Index i = 0; i < g.size(); ++i) g.array()[i] = -stable_sigmoid(-logits_fake.array()[i]) * inv_n;
  return g;
}

/// -mean(log sigmoid(real)) - mean(log(1 - sigmoid(fake))).
template <typename Scalar>
Scalar discriminator_value(const Tensor<Scalar>& logits_real, const Tensor<Scalar>& logits_fake) {
  Scalar real = 0, fake = 0;
  for (Index i = 0; i < logits_real.size(); ++i) real -= log_sigmoid(logits_real.array()[i]);
  for (Index i = 0; i < logits_fake.size(); ++i) fake -= log_sigmoid(-logits_fake.array()[i]);
  return real / Scalar(logits_real.size()) + fake / Scalar(logits_fake.size());
}

template <typename Scalar>
Tensor<Scalar> discriminator_grad_real(const Tensor<Scalar>& logits_real) {
  return gan_generator_grad(logits_real);
}

template <typename Scalar>
Tensor<Scalar> discriminator_grad_fake(const Tensor<Scalar>& logits_fake) {
  Tensor<Scalar> g(logits_fake.shape());
  const Scalar inv_n = Scalar(1) / Scalar(logits_fake.size());
  for (Index i = 0; i < g.size(); ++i) g.array()[i] = stable_sigmoid(logits_fake.array()[i]) * inv_n;
  return g;
}

/// Mean per-pixel cross-entropy of softmax(logits) against class indices.
/// `labels` holds one index per pixel in batch-major raster order.
template <typename Scalar>
Scalar cross_entropy_value(const Tensor<Scalar>& logits, const std::vector<int>& labels) {
  const auto z = logits.matrix();
  if (Index(labels.size()) != z.rows()) throw ShapeError("cross_entropy: label count does not match logits");
  Scalar acc = 0;
  for (Index r = 0; r < z.rows(); ++r) {
    const Scalar m = z.row(r).maxCoeff();
    const Scalar lse = m + std::log((z.row(r).array() - m).exp().sum());
    acc += lse - z(r, labels[r]);
  }
  return acc / Scalar(z.rows());
}

template <typename Scalar>
Tensor<Scalar> cross_entropy_grad(const Tensor<Scalar>& logits, const std::vector<int>& labels) {
  Tensor<Scalar> g(logits.shape());
  const auto z = logits.matrix();
  auto gm = g.matrix();
  const Scalar inv_n = Scalar(1) / Scalar(z.rows());
  for (Index r = 0; r < z.rows(); ++r) {
    const Scalar m = z.row(r).maxCoeff();
    auto e = (z.row(r).array() - m).exp().eval();
    gm.row(r) = (e / e.sum()).matrix() * inv_n;
    gm(r, labels[r]) -= inv_n;
  }
  return g;
}

/// Weighted sum of the three generator terms.
inline LossBreakdown total_generator_loss(double gan, double feat, double mae, const LossWeights& w) {
  LossBreakdown b;
  b.gan = gan;
  b.feat = feat;
  b.mae = mae;
  b.total = w.alpha * gan + w.beta * feat + w.gamma * mae;
  return b;
}

// ---------------------------------------------------------------------------
// Differentiable wrappers.

namespace detail {
template <typename Scalar, typename ValueFn, typename GradFn>
Var<Scalar> pairwise_loss(const Var<Scalar>& target, const Var<Scalar>& pred, ValueFn value, GradFn grad_pred,
                          bool symmetric_sign) {
  Tensor<Scalar> out(Shape{1, 1, 1, 1}, value(target.value(), pred.value()));
  return make_result(std::move(out), {target, pred},
                     [tn = target.node(), pn = pred.node(), grad_pred, symmetric_sign](const Tensor<Scalar>& g) {
                       const Tensor<Scalar> gp = grad_pred(tn->value, pn->value);
                       const Scalar s = g.array()[0];
                       if (pn->requires_grad) pn->grad_buffer().array() += s * gp.array();
                       if (tn->requires_grad) {
                         if (!symmetric_sign) throw ShapeError("loss gradient w.r.t. target is not supported");
                         tn->grad_buffer().array() -= s * gp.array();
                       }
                     });
}
}  // namespace detail

template <typename Scalar>
Var<Scalar> mae_loss(const Var<Scalar>& x, const Var<Scalar>& x_hat) {
  return detail::pairwise_loss<Scalar>(
      x, x_hat, [](const auto& a, const auto& b) { return mae_value(a, b); },
      [](const auto& a, const auto& b) { return mae_grad(a, b); }, true);
}

template <typename Scalar>
Var<Scalar> feature_loss(const Var<Scalar>& fx, const Var<Scalar>& fx_hat,
                         FeatureLossKind kind = FeatureLossKind::kL2) {
  if (kind == FeatureLossKind::kL2)
    return detail::pairwise_loss<Scalar>(
        fx, fx_hat, [](const auto& a, const auto& b) { return feature_l2_value(a, b); },
        [](const auto& a, const auto& b) { return feature_l2_grad(a, b); }, true);
  return detail::pairwise_loss<Scalar>(
      fx, fx_hat, [](const auto& a, const auto& b) { return feature_bce_value(a, b); },
      [](const auto& a, const auto& b) { return feature_bce_grad(a, b); }, false);
}

template <typename Scalar>
Var<Scalar> gan_generator_loss(const Var<Scalar>& logits_fake) {
  Tensor<Scalar> out(Shape{1, 1, 1, 1}, gan_generator_value(logits_fake.value()));
  return make_result(std::move(out), {logits_fake}, [ln = logits_fake.node()](const Tensor<Scalar>& g) {
    ln->grad_buffer().array() += g.array()[0] * gan_generator_grad(ln->value).array();
  });
}

template <typename Scalar>
Var<Scalar> discriminator_loss(const Var<Scalar>& logits_real, const Var<Scalar>& logits_fake) {
  Tensor<Scalar> out(Shape{1, 1, 1, 1}, discriminator_value(logits_real.value(), logits_fake.value()));
  return make_result(std::move(out), {logits_real, logits_fake},
                     [rn = logits_real.node(), fn = logits_fake.node()](const Tensor<Scalar>& g) {
                       const Scalar s = g.array()[0];
                       if (rn->requires_grad) rn->grad_buffer().array() += s * discriminator_grad_real(rn->value).array();
                       if (fn->requires_grad) fn->grad_buffer().array() += s * discriminator_grad_fake(fn->value).array();
                     });
}

template <typename Scalar>
Var<Scalar> cross_entropy_loss(const Var<Scalar>& logits, std::vector<int> labels) {
  Tensor<Scalar> out(Shape{1, 1, 1, 1}, cross_entropy_value(logits.value(), labels));
  return make_result(std::move(out), {logits}, [ln = logits.node(), labels = std::move(labels)](const Tensor<Scalar>& g) {
    ln->grad_buffer().array() += g.array()[0] * cross_entropy_grad(ln->value, labels).array();
  });
}

/// Differentiable weighted sum of the generator terms.
template <typename Scalar>
Var<Scalar> weighted_generator_loss(const Var<Scalar>& gan, const Var<Scalar>& feat, const Var<Scalar>& mae,
                                    const LossWeights& w) {
  return gan * Scalar(w.alpha) + feat * Scalar(w.beta) + mae * Scalar(w.gamma);
}

}  // namespace semsr
