#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "semsr/tensor.hpp"

namespace semsr {

/// Upsampling factor of the experiment grid: 4, 8, 16 or 32.
class ScaleFactor {
 public:
  static constexpr int kSupported[] = {4, 8, 16, 32};
  static constexpr int kMax = 32;

  explicit ScaleFactor(int value) : value_(value) {
    if (!is_supported(value))
      throw ConfigError("unsupported scale factor " + std::to_string(value) + " (expected 4, 8, 16 or 32)");
  }
  static bool is_supported(int v) { return v == 4 || v == 8 || v == 16 || v == 32; }
  int value() const { return value_; }
  operator int() const { return value_; }

 private:
  int value_;
};

/// Index into [0, n) under mirror reflection that does not repeat the edge
/// sample (-1 -> 1, n -> n-2).
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// Unit-sum sampled Gaussian over [-radius, radius].
inline std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(2 * radius + 1);
  double total = 0;
  for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  for (double& v : k) v /= total;
  return k;
}

/// Separable Gaussian blur with reflective padding.
template <typename Scalar>
Tensor<Scalar> gaussian_blur(const Tensor<Scalar>& img, double sigma, int radius) {
  const auto kd = gaussian_kernel(sigma, radius);
  std::vector<Scalar> k(kd.begin(), kd.end());
  const Shape& s = img.shape();
  Tensor<Scalar> tmp(s), out(s);
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x)
        for (int c = 0; c < s.c; ++c) {
          Scalar acc = 0;
          for (int d = -radius; d <= radius; ++d) acc += k[d + radius] * img(n, y, reflect_index(x + d, s.w), c);
          tmp(n, y, x, c) = acc;
        }
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x)
        for (int c = 0; c < s.c; ++c) {
          Scalar acc = 0;
          for (int d = -radius; d <= radius; ++d) acc += k[d + radius] * tmp(n, reflect_index(y + d, s.h), x, c);
          out(n, y, x, c) = acc;
        }
  return out;
}

namespace detail {
struct LinearTap {
  int i0, i1;
  double frac;
};

/// Half-pixel-centre sampling positions (align_corners = false).
inline std::vector<LinearTap> linear_taps(int in, int out) {
  std::vector<LinearTap> taps(out);
  const double ratio = double(in) / double(out);
  for (int j = 0; j < out; ++j) {
    double src = (j + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, double(in - 1));
    const int i0 = int(std::floor(src));
    const int i1 = std::min(i0 + 1, in - 1);
    taps[j] = {i0, i1, src - i0};
  }
  return taps;
}
}  // namespace detail

/// Bilinear resampling to (out_h, out_w) with the align_corners = false
/// convention.
template <typename Scalar>
Tensor<Scalar> bilinear_resize(const Tensor<Scalar>& img, int out_h, int out_w) {
  const Shape& s = img.shape();
  const auto ty = detail::linear_taps(s.h, out_h);
  const auto tx = detail::linear_taps(s.w, out_w);
  Tensor<Scalar> out(Shape{s.n, out_h, out_w, s.c});
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < out_h; ++y) {
      const Scalar fy = Scalar(ty[y].frac);
      for (int x = 0; x < out_w; ++x) {
        const Scalar fx = Scalar(tx[x].frac);
        for (int c = 0; c < s.c; ++c) {
          const Scalar top = (1 - fx) * img(n, ty[y].i0, tx[x].i0, c) + fx * img(n, ty[y].i0, tx[x].i1, c);
          const Scalar bot = (1 - fx) * img(n, ty[y].i1, tx[x].i0, c) + fx * img(n, ty[y].i1, tx[x].i1, c);
          out(n, y, x, c) = (1 - fy) * top + fy * bot;
        }
      }
    }
  return out;
}

/// Anti-aliased reduction: Gaussian blur with sigma = scale/2 and radius
/// ceil(3 sigma), then bilinear downsampling by `scale`. Output clamped to [0,1].
template <typename Scalar>
Tensor<Scalar> degrade(const Tensor<Scalar>& hr, int scale) {
  if (scale < 1) throw ConfigError("degrade: scale must be positive");
  if (hr.height() % scale || hr.width() % scale)
    throw ShapeError("degrade: " + hr.shape().str() + " not divisible by scale " + std::to_string(scale));
  const double sigma = scale / 2.0;
  const int radius = int(std::ceil(3.0 * sigma));
  Tensor<Scalar> out = bilinear_resize(gaussian_blur(hr, sigma, radius), hr.height() / scale, hr.width() / scale);
  out.array() = out.array().max(Scalar(0)).min(Scalar(1));
  return out;
}

template <typename Scalar>
Tensor<Scalar> degrade(const Tensor<Scalar>& hr, ScaleFactor scale) {
  return degrade(hr, scale.value());
}

/// Replicates each pixel into a factor x factor block.
template <typename Scalar>
Tensor<Scalar> nn_upsample(const Tensor<Scalar>& lr, int factor) {
  if (factor < 1) throw ConfigError("nn_upsample: factor must be positive");
  const Shape& s = lr.shape();
  Tensor<Scalar> out(Shape{s.n, s.h * factor, s.w * factor, s.c});
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h * factor; ++y)
      for (int x = 0; x < s.w * factor; ++x)
        std::copy_n(lr.data() + lr.offset(n, y / factor, x / factor, 0), s.c, out.data() + out.offset(n, y, x, 0));
  return out;
}

/// Bilinear enlargement by `scale`, clamped to [0,1].
template <typename Scalar>
Tensor<Scalar> bilinear_upsample(const Tensor<Scalar>& lr, int scale) {
  Tensor<Scalar> out = bilinear_resize(lr, lr.height() * scale, lr.width() * scale);
  out.array() = out.array().max(Scalar(0)).min(Scalar(1));
  return out;
}

}  // namespace semsr
