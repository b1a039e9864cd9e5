#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "semsr/tensor.hpp"

namespace semsr {

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double max_value = 1.0;
};

inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// 10 log10(max^2 / MSE) over all elements; +inf when the inputs agree.
template <typename Scalar>
double psnr(const Tensor<Scalar>& x, const Tensor<Scalar>& x_hat, double max_value = 1.0) {
  require_same_shape(x.shape(), x_hat.shape(), "psnr");
  const double mse = (x.array().template cast<double>() - x_hat.array().template cast<double>()).square().mean();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / mse);
}

template <typename Scalar>
double mae(const Tensor<Scalar>& x, const Tensor<Scalar>& x_hat) {
  require_same_shape(x.shape(), x_hat.shape(), "mae");
  return (x.array().template cast<double>() - x_hat.array().template cast<double>()).abs().mean();
}

namespace detail {

using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Plane channel_plane(const auto& img, int n, int c) {
  Plane p(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) p(y, x) = double(img(n, y, x, c));
  return p;
}

/// "Valid" separable filtering of a plane with a normalised 1-D kernel.
inline Plane filter_valid(const Plane& p, const std::vector<double>& k) {
  const int w = int(k.size());
  const Index oh = p.rows() - w + 1, ow = p.cols() - w + 1;
  Plane tmp(p.rows(), ow);
  for (Index y = 0; y < p.rows(); ++y)
    for (Index x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < w; ++i) acc += k[i] * p(y, x + i);
      tmp(y, x) = acc;
    }
  Plane out(oh, ow);
  for (Index y = 0; y < oh; ++y)
    for (Index x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < w; ++i) acc += k[i] * tmp(y + i, x);
      out(y, x) = acc;
    }
  return out;
}

inline std::vector<double> ssim_window(const SsimOptions& o) {
  std::vector<double> k(o.window);
  double total = 0;
  for (int i = 0; i < o.window; ++i) {
    const double d = i - (o.window - 1) / 2.0;
    total += k[i] = std::exp(-0.5 * d * d / (o.sigma * o.sigma));
  }
  for (double& v : k) v /= total;
  return k;
}

struct SsimTerms {
  double ssim;  // mean of luminance * contrast-structure
  double cs;    // mean of contrast-structure alone
};

inline SsimTerms ssim_plane(const Plane& a, const Plane& b, const SsimOptions& o) {
  const auto k = ssim_window(o);
  const double c1 = (o.k1 * o.max_value) * (o.k1 * o.max_value);
  const double c2 = (o.k2 * o.max_value) * (o.k2 * o.max_value);
  const Plane mu_a = filter_valid(a, k), mu_b = filter_valid(b, k);
  const Plane var_a = filter_valid(a * a, k) - mu_a.square();
  const Plane var_b = filter_valid(b * b, k) - mu_b.square();
  const Plane cov = filter_valid(a * b, k) - mu_a * mu_b;
  const Plane lum = (2 * mu_a * mu_b + c1) / (mu_a.square() + mu_b.square() + c1);
  const Plane cs = (2 * cov + c2) / (var_a + var_b + c2);
  return {(lum * cs).mean(), cs.mean()};
}

/// 2x2 average pooling; odd extents are first padded by repeating the last
/// row/column.
inline Plane halve(const Plane& p) {
  const Index h = (p.rows() + 1) / 2, w = (p.cols() + 1) / 2;
  Plane out(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      double acc = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
          acc += p(std::min(2 * y + dy, p.rows() - 1), std::min(2 * x + dx, p.cols() - 1));
      out(y, x) = acc / 4.0;
    }
  return out;
}

}  // namespace detail

/// Mean structural similarity over sliding Gaussian windows, averaged over
/// channels and batch.
template <typename Scalar>
double ssim(const Tensor<Scalar>& x, const Tensor<Scalar>& x_hat, const SsimOptions& o = {}) {
  require_same_shape(x.shape(), x_hat.shape(), "ssim");
  if (x.height() < o.window || x.width() < o.window)
    throw ShapeError("ssim: image " + x.shape().str() + " smaller than window " + std::to_string(o.window));
  double acc = 0;
  for (int n = 0; n < x.batch(); ++n)
    for (int c = 0; c < x.channels(); ++c)
      acc += detail::ssim_plane(detail::channel_plane(x, n, c), detail::channel_plane(x_hat, n, c), o).ssim;
  return acc / double(x.batch() * x.channels());
}

inline int ms_ssim_min_extent(const SsimOptions& o = {}) { return (1 << (kMsSsimWeights.size() - 1)) * o.window; }

/// Five-scale structural similarity: contrast-structure terms at the four
/// finer scales and full SSIM at the coarsest, combined as a weighted
/// geometric product per channel.
template <typename Scalar>
double ms_ssim(const Tensor<Scalar>& x, const Tensor<Scalar>& x_hat, const SsimOptions& o = {}) {
  require_same_shape(x.shape(), x_hat.shape(), "ms_ssim");
  const int min_extent = ms_ssim_min_extent(o);
  if (x.height() < min_extent || x.width() < min_extent)
    throw ShapeError("ms_ssim: image " + x.shape().str() + " too small; minimum size is " +
                     std::to_string(min_extent) + "x" + std::to_string(min_extent));
  double acc = 0;
  for (int n = 0; n < x.batch(); ++n)
    for (int c = 0; c < x.channels(); ++c) {
      detail::Plane a = detail::channel_plane(x, n, c), b = detail::channel_plane(x_hat, n, c);
      double prod = 1.0;
      for (std::size_t s = 0; s < kMsSsimWeights.size(); ++s) {
        if (s > 0) {
          a = detail::halve(a);
          b = detail::halve(b);
        }
        const auto t = detail::ssim_plane(a, b, o);
        const double term = s + 1 < kMsSsimWeights.size() ? t.cs : t.ssim;
        prod *= std::pow(std::max(term, 0.0), kMsSsimWeights[s]);
      }
      acc += prod;
    }
  return acc / double(x.batch() * x.channels());
}

// ---------------------------------------------------------------------------
// Segmentation metrics.

inline void require_same_mask_shape(const LabelMask& a, const LabelMask& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(what) + ": mask shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

/// Per-class intersection and union pixel counts, accumulable over images.
struct IouCounts {
  std::vector<long long> intersection;
  std::vector<long long> uni;

  explicit IouCounts(int classes = 0) : intersection(classes, 0), uni(classes, 0) {}
  int classes() const { return int(intersection.size()); }

  void add(const LabelMask& pred, const LabelMask& target) {
    require_same_mask_shape(pred, target, "iou");
    for (Index i = 0; i < pred.size(); ++i) {
      const int p = pred.data()[i], t = target.data()[i];
      if (p == t) {
        if (p < classes()) ++intersection[p], ++uni[p];
      } else {
        if (p < classes()) ++uni[p];
        if (t < classes()) ++uni[t];
      }
    }
  }

  /// |A and B| / |A or B| for one class; nullopt when the union is empty.
  std::optional<double> iou(int class_id) const {
    if (uni[class_id] == 0) return std::nullopt;
    return double(intersection[class_id]) / double(uni[class_id]);
  }

  /// Mean over classes with a non-empty union.
  double miou() const {
    double acc = 0;
    int defined = 0;
    for (int k = 0; k < classes(); ++k)
      if (auto v = iou(k)) acc += *v, ++defined;
    if (defined == 0) throw ShapeError("miou: every class has an empty union");
    return acc / defined;
  }
};

inline std::optional<double> iou(const LabelMask& pred, const LabelMask& target, int class_id) {
  IouCounts counts(class_id + 1);
  counts.add(pred, target);
  return counts.iou(class_id);
}

inline double miou(const LabelMask& pred, const LabelMask& target, int classes) {
  IouCounts counts(classes);
  counts.add(pred, target);
  return counts.miou();
}

/// (a - b) / b * 100.
inline double pct_improvement(double a, double b) {
  if (b == 0.0) throw ConfigError("pct_improvement: baseline is zero");
  return (a - b) / b * 100.0;
}

/// Per-pixel argmax over the class axis; ties go to the lowest index.
template <typename Scalar>
std::vector<LabelMask> mask_from_probs(const Tensor<Scalar>& probs) {
  std::vector<LabelMask> out;
  for (int n = 0; n < probs.batch(); ++n) {
    LabelMask m(probs.height(), probs.width());
    for (int y = 0; y < probs.height(); ++y)
      for (int x = 0; x < probs.width(); ++x) {
        const Scalar* p = probs.data() + probs.offset(n, y, x, 0);
        int best = 0;
        for (int k = 1; k < probs.channels(); ++k)
          if (p[k] > p[best]) best = k;
        m(y, x) = std::uint8_t(best);
      }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace semsr
