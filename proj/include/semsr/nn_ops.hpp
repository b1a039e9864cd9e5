#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "semsr/autograd.hpp"

namespace semsr {

namespace detail {

template <typename Scalar>
using RowMatrix = typename Tensor<Scalar>::RowMatrix;

inline int conv_out_extent(int in, int kernel, int stride, int pad) { return (in + 2 * pad - kernel) / stride + 1; }

/// Unfolds the (kernel x kernel) neighbourhoods of output rows [r0, r1) into
/// `cols`; column order matches a (kh, kw, cin, cout) kernel viewed as a
/// (kh*kw*cin) x cout matrix.
template <typename Scalar>
void im2col_rows(const Tensor<Scalar>& x, int kernel, int stride, int pad, int out_h, int out_w, Index r0, Index r1,
                 RowMatrix<Scalar>& cols) {
  const int channels = x.channels();
  const Index row_len = Index(kernel) * kernel * channels;
  cols.resize(r1 - r0, row_len);
  Scalar* row = cols.data();
  const Index plane = Index(out_h) * out_w;
  for (Index r = r0; r < r1; ++r, row += row_len) {
    const int n = int(r / plane);
    const int oy = int((r % plane) / out_w);
    const int ox = int(r % out_w);
    for (int ky = 0; ky < kernel; ++ky) {
      const int iy = oy * stride - pad + ky;
      for (int kx = 0; kx < kernel; ++kx) {
        const int ix = ox * stride - pad + kx;
        Scalar* dst = row + (ky * kernel + kx) * channels;
        if (iy < 0 || iy >= x.height() || ix < 0 || ix >= x.width()) {
          std::fill_n(dst, channels, Scalar(0));
        } else {
          std::copy_n(x.data() + x.offset(n, iy, ix, 0), channels, dst);
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_rows_add(const RowMatrix<Scalar>& cols, Tensor<Scalar>& dx, int kernel, int stride, int pad, int out_h,
                     int out_w, Index r0) {
  const int channels = dx.channels();
  const Index row_len = Index(kernel) * kernel * channels;
  const Scalar* row = cols.data();
  const Index plane = Index(out_h) * out_w;
  for (Index r = r0; r < r0 + cols.rows(); ++r, row += row_len) {
    const int n = int(r / plane);
    const int oy = int((r % plane) / out_w);
    const int ox = int(r % out_w);
    for (int ky = 0; ky < kernel; ++ky) {
      const int iy = oy * stride - pad + ky;
      if (iy < 0 || iy >= dx.height()) continue;
      for (int kx = 0; kx < kernel; ++kx) {
        const int ix = ox * stride - pad + kx;
        if (ix < 0 || ix >= dx.width()) continue;
        const Scalar* src = row + (ky * kernel + kx) * channels;
        Scalar* dst = dx.data() + dx.offset(n, iy, ix, 0);
        for (int c = 0; c < channels; ++c) dst[c] += src[c];
      }
    }
  }
}

template <typename Scalar>
RowMatrix<Scalar> im2col(const Tensor<Scalar>& x, int kernel, int stride, int pad, int out_h, int out_w) {
  RowMatrix<Scalar> cols;
  im2col_rows(x, kernel, stride, pad, out_h, out_w, 0, Index(x.batch()) * out_h * out_w, cols);
  return cols;
}

template <typename Scalar>
void col2im_add(const RowMatrix<Scalar>& cols, Tensor<Scalar>& dx, int kernel, int stride, int pad, int out_h,
                int out_w) {
  col2im_rows_add(cols, dx, kernel, stride, pad, out_h, out_w, 0);
}

/// Output rows per unfolded tile, sized to keep a tile near 1 MiB.
template <typename Scalar>
Index conv_tile_rows(Index row_len) {
  return std::max<Index>(64, (Index(1) << 20) / (Index(sizeof(Scalar)) * row_len));
}

}  // namespace detail

/// 2-D convolution with "same"-style zero padding of kernel/2.
/// `weight` is (k, k, in_channels, out_channels); `bias` (1,1,1,out) or undefined.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, int stride = 1) {
  const Shape& ws = weight.shape();
  const int kernel = ws.n;
  if (ws.h != kernel) throw ShapeError("conv2d: kernel must be square, got " + ws.str());
  if (ws.w != x.shape().c)
    throw ShapeError("conv2d: input has " + std::to_string(x.shape().c) + " channels, kernel expects " +
                     std::to_string(ws.w));
  const int pad = kernel / 2;
  const int out_h = detail::conv_out_extent(x.shape().h, kernel, stride, pad);
  const int out_w = detail::conv_out_extent(x.shape().w, kernel, stride, pad);
  if (out_h <= 0 || out_w <= 0) throw ShapeError("conv2d: input too small " + x.shape().str());

  Tensor<Scalar> out(Shape{x.shape().n, out_h, out_w, ws.c});
  const auto w_mat = weight.value().matrix();
  const bool pointwise = kernel == 1 && stride == 1;
  const Index rows = out.shape().pixels();
  const Index tile = detail::conv_tile_rows<Scalar>(Index(kernel) * kernel * ws.w);

  if (pointwise) {
    out.matrix().noalias() = x.value().matrix() * w_mat;
  } else {
    detail::RowMatrix<Scalar> cols;
    for (Index r0 = 0; r0 < rows; r0 += tile) {
      const Index r1 = std::min(rows, r0 + tile);
      detail::im2col_rows(x.value(), kernel, stride, pad, out_h, out_w, r0, r1, cols);
      out.matrix().middleRows(r0, r1 - r0).noalias() = cols * w_mat;
    }
  }
  const bool has_bias = bias.defined();
  if (has_bias) out.matrix().rowwise() += bias.value().matrix().row(0);

  auto xn = x.node();
  auto wn = weight.node();
  auto bn = has_bias ? bias.node() : nullptr;
  // The unfolded input is recomputed tile by tile rather than stored.
  auto backward = [xn, wn, bn, kernel, stride, pad, out_h, out_w, pointwise, rows, tile](const Tensor<Scalar>& g) {
    const auto dy = g.matrix();
    if (bn && bn->requires_grad) bn->grad_buffer().matrix().row(0) += dy.colwise().sum();
    if (pointwise) {
      if (wn->requires_grad) wn->grad_buffer().matrix().noalias() += xn->value.matrix().transpose() * dy;
      if (xn->requires_grad) xn->grad_buffer().matrix().noalias() += dy * wn->value.matrix().transpose();
      return;
    }
    detail::RowMatrix<Scalar> cols, dcols;
    for (Index r0 = 0; r0 < rows; r0 += tile) {
      const Index r1 = std::min(rows, r0 + tile);
      const auto dy_tile = dy.middleRows(r0, r1 - r0);
      if (wn->requires_grad) {
        detail::im2col_rows(xn->value, kernel, stride, pad, out_h, out_w, r0, r1, cols);
        wn->grad_buffer().matrix().noalias() += cols.transpose() * dy_tile;
      }
      if (xn->requires_grad) {
        dcols.noalias() = dy_tile * wn->value.matrix().transpose();
        detail::col2im_rows_add(dcols, xn->grad_buffer(), kernel, stride, pad, out_h, out_w, r0);
      }
    }
  };
  if (has_bias) return make_result(std::move(out), {x, weight, bias}, std::move(backward));
  return make_result(std::move(out), {x, weight}, std::move(backward));
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope) {
  const auto& xv = x.value().array();
  Tensor<Scalar> out(x.shape(), (xv > Scalar(0)).select(xv, xv * slope));
  return make_result(std::move(out), {x}, [xn = x.node(), slope](const Tensor<Scalar>& g) {
    const auto& xv = xn->value.array();
    xn->grad_buffer().array() += (xv > Scalar(0)).select(g.array(), g.array() * slope);
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  return leaky_relu(x, Scalar(0));
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape(), Scalar(1) / (Scalar(1) + (-x.value().array()).exp()));
  auto yv = std::make_shared<Tensor<Scalar>>(out);
  return make_result(std::move(out), {x}, [xn = x.node(), yv](const Tensor<Scalar>& g) {
    const auto& y = yv->array();
    xn->grad_buffer().array() += g.array() * y * (Scalar(1) - y);
  });
}

/// Softmax over the channel axis.
template <typename Scalar>
Var<Scalar> softmax_channels(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  auto in = x.value().matrix();
  auto y = out.matrix();
  y = (in.colwise() - in.rowwise().maxCoeff()).array().exp().matrix();
  y.array().colwise() /= y.rowwise().sum().array();
  auto yv = std::make_shared<Tensor<Scalar>>(out);
  return make_result(std::move(out), {x}, [xn = x.node(), yv](const Tensor<Scalar>& g) {
    const auto y = yv->matrix();
    const auto dy = g.matrix();
    const auto dot = (dy.array() * y.array()).rowwise().sum().eval();
    xn->grad_buffer().matrix().array() += y.array() * (dy.array().colwise() - dot);
  });
}

/// Nearest-neighbour enlargement by an integer factor.
template <typename Scalar>
Var<Scalar> upsample_nearest(const Var<Scalar>& x, int factor) {
  const Shape& s = x.shape();
  Tensor<Scalar> out(Shape{s.n, s.h * factor, s.w * factor, s.c});
  const auto& xv = x.value();
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h * factor; ++y)
      for (int xx = 0; xx < s.w * factor; ++xx)
        std::copy_n(xv.data() + xv.offset(n, y / factor, xx / factor, 0), s.c, out.data() + out.offset(n, y, xx, 0));
  return make_result(std::move(out), {x}, [xn = x.node(), factor](const Tensor<Scalar>& g) {
    auto& dx = xn->grad_buffer();
    const Shape& s = dx.shape();
    for (int n = 0; n < s.n; ++n)
      for (int y = 0; y < s.h * factor; ++y)
        for (int xx = 0; xx < s.w * factor; ++xx) {
          const Scalar* src = g.data() + g.offset(n, y, xx, 0);
          Scalar* dst = dx.data() + dx.offset(n, y / factor, xx / factor, 0);
          for (int c = 0; c < s.c; ++c) dst[c] += src[c];
        }
  });
}

/// 2x2 max pooling with stride 2. Ties resolve to the first element in
/// raster order.
template <typename Scalar>
Var<Scalar> max_pool2(const Var<Scalar>& x) {
  const Shape& s = x.shape();
  if (s.h % 2 || s.w % 2) throw ShapeError("max_pool2: odd spatial extent " + s.str());
  Tensor<Scalar> out(Shape{s.n, s.h / 2, s.w / 2, s.c});
  auto argmax = std::make_shared<std::vector<Index>>(out.size());
  const auto& xv = x.value();
  Index k = 0;
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h / 2; ++y)
      for (int xx = 0; xx < s.w / 2; ++xx)
        for (int c = 0; c < s.c; ++c, ++k) {
          Index best = xv.offset(n, 2 * y, 2 * xx, c);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const Index at = xv.offset(n, 2 * y + dy, 2 * xx + dx, c);
              if (xv.array()[at] > xv.array()[best]) best = at;
            }
          (*argmax)[k] = best;
          out.array()[k] = xv.array()[best];
        }
  return make_result(std::move(out), {x}, [xn = x.node(), argmax](const Tensor<Scalar>& g) {
    auto& dx = xn->grad_buffer();
    for (Index i = 0; i < g.size(); ++i) dx.array()[(*argmax)[i]] += g.array()[i];
  });
}

/// Concatenation along the channel axis.
template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  Shape s = parts.front().shape();
  s.c = 0;
  for (const auto& p : parts) {
    if (p.shape().n != s.n || p.shape().h != s.h || p.shape().w != s.w)
      throw ShapeError("concat_channels: spatial mismatch " + parts.front().shape().str() + " vs " +
                       p.shape().str());
    s.c += p.shape().c;
  }
  Tensor<Scalar> out(s);
  std::vector<Node<Scalar>*> nodes;
  std::vector<int> widths;
  int at = 0;
  for (const auto& p : parts) {
    const int c = p.shape().c;
    out.matrix().middleCols(at, c) = p.value().matrix();
    at += c;
    nodes.push_back(p.node());
    widths.push_back(c);
  }
  return make_result<Scalar>(std::move(out), parts, [nodes, widths](const Tensor<Scalar>& g) {
    int at = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i]->requires_grad) nodes[i]->grad_buffer().matrix() += g.matrix().middleCols(at, widths[i]);
      at += widths[i];
    }
  });
}

/// Per-channel batch normalisation. In training mode normalises with batch
/// statistics and updates the running estimates in place; in evaluation
/// mode uses the running estimates.
template <typename Scalar>
Var<Scalar> batch_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Tensor<Scalar>& running_mean, Tensor<Scalar>& running_var, bool training,
                       Scalar momentum = Scalar(0.1), Scalar eps = Scalar(1e-5)) {
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  const auto in = x.value().matrix();
  const Index m = in.rows();
  RowVec mu, var;
  if (training) {
    mu = in.colwise().mean();
    var = (in.rowwise() - mu).array().square().colwise().mean().matrix();
    const Scalar unbias = m > 1 ? Scalar(m) / Scalar(m - 1) : Scalar(1);
    running_mean.matrix().row(0) = (Scalar(1) - momentum) * running_mean.matrix().row(0) + momentum * mu;
    running_var.matrix().row(0) = (Scalar(1) - momentum) * running_var.matrix().row(0) + momentum * unbias * var;
  } else {
    mu = running_mean.matrix().row(0);
    var = running_var.matrix().row(0);
  }
  const RowVec inv_std = (var.array() + eps).rsqrt().matrix();
  auto xhat = std::make_shared<Tensor<Scalar>>(x.shape());
  xhat->matrix() = ((in.rowwise() - mu).array().rowwise() * inv_std.array()).matrix();
  Tensor<Scalar> out(x.shape());
  out.matrix() = ((xhat->matrix().array().rowwise() * gamma.value().matrix().row(0).array()).rowwise() +
                  beta.value().matrix().row(0).array())
                     .matrix();

  return make_result(std::move(out), {x, gamma, beta},
                     [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat, inv_std, training,
                      m](const Tensor<Scalar>& g) {
                       const auto dy = g.matrix();
                       const auto xh = xhat->matrix();
                       const RowVec sum_dy = dy.colwise().sum();
                       const RowVec sum_dy_xhat = (dy.array() * xh.array()).colwise().sum().matrix();
                       if (gn->requires_grad) gn->grad_buffer().matrix().row(0) += sum_dy_xhat;
                       if (bn->requires_grad) bn->grad_buffer().matrix().row(0) += sum_dy;
                       if (!xn->requires_grad) return;
                       const auto gam = gn->value.matrix().row(0).array();
                       if (training) {
                         const Scalar inv_m = Scalar(1) / Scalar(m);
                         // dx = gamma * inv_std * (dy - mean(dy) - xhat * mean(dy * xhat))
                         auto dx = ((dy.rowwise() - sum_dy * inv_m).array() -
                                    xh.array().rowwise() * (sum_dy_xhat.array() * inv_m))
                                       .rowwise() *
                                   (gam * inv_std.array());
                         xn->grad_buffer().matrix().array() += dx;
                       } else {
                         xn->grad_buffer().matrix().array() += dy.array().rowwise() * (gam * inv_std.array());
                       }
                     });
}

}  // namespace semsr
