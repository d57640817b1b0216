#pragma once

// 2-D convolution and its adjoint (transposed convolution), NCHW layout.
// Both are lowered to Eigen GEMMs through im2col / col2im, and both record
// backward closures when a Tape is active. conv_transpose2d is the exact
// adjoint of conv2d for a shared kernel: <conv2d(x,k), y> == <x, conv_transpose2d(y,k)>.

#include "rgan/tensor.hpp"

namespace rgan {

struct ConvGeom {
  int c, h, w;        // dense-side image (conv input / transpose output)
  int kh, kw;
  int stride, pad;
  int oh, ow;         // sparse-side grid (conv output / transpose input)
};

inline ConvGeom conv_geom(int c, int h, int w, int kh, int kw, int stride, int pad) {
  if (stride < 1) throw std::invalid_argument("conv: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv: padding must be >= 0");
  if (h + 2 * pad < kh || w + 2 * pad < kw)
    throw std::invalid_argument("conv: kernel larger than padded input");
  ConvGeom g{c, h, w, kh, kw, stride, pad, 0, 0};
  g.oh = (h + 2 * pad - kh) / stride + 1;
  g.ow = (w + 2 * pad - kw) / stride + 1;
  return g;
}

namespace detail {

// src: one sample [C,H,W] -> col [C*kh*kw, OH*OW] row-major
template <typename S>
void im2col(const S* src, const ConvGeom& g, S* col) {
  const long ncols = static_cast<long>(g.oh) * g.ow;
  for (int c = 0; c < g.c; ++c)
    for (int ki = 0; ki < g.kh; ++ki)
      for (int kj = 0; kj < g.kw; ++kj) {
        S* row = col + (static_cast<long>(c) * g.kh * g.kw + ki * g.kw + kj) * ncols;
        const S* plane = src + static_cast<long>(c) * g.h * g.w;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            row[oy * g.ow + ox] = (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w)
                                      ? plane[iy * g.w + ix]
                                      : S(0);
          }
        }
      }
}

// adjoint scatter: col [C*kh*kw, OH*OW] accumulated into dst [C,H,W]
template <typename S>
void col2im(const S* col, const ConvGeom& g, S* dst) {
  const long ncols = static_cast<long>(g.oh) * g.ow;
  for (int c = 0; c < g.c; ++c)
    for (int ki = 0; ki < g.kh; ++ki)
      for (int kj = 0; kj < g.kw; ++kj) {
        const S* row = col + (static_cast<long>(c) * g.kh * g.kw + ki * g.kw + kj) * ncols;
        S* plane = dst + static_cast<long>(c) * g.h * g.w;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) continue;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.w) plane[iy * g.w + ix] += row[oy * g.ow + ox];
          }
        }
      }
}

template <typename S>
void check_conv_args(const Tensor<S>& input, const Tensor<S>& kernel, const Tensor<S>& bias,
                     const char* op, int bias_dim) {
  if (input.shape().size() != 4)
    throw std::invalid_argument(std::string(op) + ": input must be NCHW, got " +
                                shape_str(input.shape()));
  if (kernel.shape().size() != 4)
    throw std::invalid_argument(std::string(op) + ": kernel must be rank 4, got " +
                                shape_str(kernel.shape()));
  if (bias.size() != bias_dim)
    throw std::invalid_argument(std::string(op) + ": bias size " + std::to_string(bias.size()) +
                                " does not match output channels " + std::to_string(bias_dim));
}

}  // namespace detail

// input [N,C,H,W], kernel [F,C,kh,kw], bias [F] -> [N,F,OH,OW]
template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& kernel, const Tensor<S>& bias,
                 int stride, int pad) {
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  if (is.size() != 4 || ks.size() != 4 || is[1] != ks[1])
    throw std::invalid_argument("conv2d: input channels do not match kernel channels, input " +
                                shape_str(is) + " kernel " + shape_str(ks));
  const int f = ks[0];
  detail::check_conv_args(input, kernel, bias, "conv2d", f);
  const ConvGeom g = conv_geom(is[1], is[2], is[3], ks[2], ks[3], stride, pad);
  const int n = is[0];
  const long ckk = static_cast<long>(g.c) * g.kh * g.kw;
  const long npix = static_cast<long>(g.oh) * g.ow;

  Tensor<S> out({n, f, g.oh, g.ow});
  Eigen::Map<const MatRM<S>> kmat(kernel.data(), f, ckk);
  MatRM<S> col(ckk, npix);
  for (int i = 0; i < n; ++i) {
    detail::im2col(input.data() + static_cast<long>(i) * g.c * g.h * g.w, g, col.data());
    Eigen::Map<MatRM<S>> omat(out.data() + static_cast<long>(i) * f * npix, f, npix);
    omat.noalias() = kmat * col;
    for (int j = 0; j < f; ++j) omat.row(j).array() += bias.val()[j];
  }

  if (detail::grad_needed<S>({&input, &kernel, &bias})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([in = input.node(), kn = kernel.node(), bn = bias.node(),
                                on = out.node(), g, n, f, ckk, npix] {
      if (!on->grad.size()) return;
      Eigen::Map<const MatRM<S>> kmat(kn->value.data(), f, ckk);
      MatRM<S> col(ckk, npix);
      for (int i = 0; i < n; ++i) {
        Eigen::Map<const MatRM<S>> gout(on->grad.data() + static_cast<long>(i) * f * npix, f, npix);
        if (kn->requires_grad || bn->requires_grad) {
          detail::im2col(in->value.data() + static_cast<long>(i) * g.c * g.h * g.w, g, col.data());
          if (kn->requires_grad) {
            kn->ensure_grad();
            Eigen::Map<MatRM<S>> gk(kn->grad.data(), f, ckk);
            gk.noalias() += gout * col.transpose();
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (int j = 0; j < f; ++j) bn->grad[j] += gout.row(j).sum();
          }
        }
        if (in->requires_grad) {
          in->ensure_grad();
          MatRM<S> tmp = kmat.transpose() * gout;
          detail::col2im(tmp.data(), g, in->grad.data() + static_cast<long>(i) * g.c * g.h * g.w);
        }
      }
    });
  }
  return out;
}

// input [N,F,h,w], kernel [F,C,kh,kw], bias [C] -> [N,C,OH,OW]
// OH = (h-1)*stride - 2*pad + kh
template <typename S>
Tensor<S> conv_transpose2d(const Tensor<S>& input, const Tensor<S>& kernel, const Tensor<S>& bias,
                           int stride, int pad) {
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  if (is.size() != 4 || ks.size() != 4 || is[1] != ks[0])
    throw std::invalid_argument(
        "conv_transpose2d: input channels do not match kernel leading dim, input " + shape_str(is) +
        " kernel " + shape_str(ks));
  const int f = ks[0], c = ks[1];
  detail::check_conv_args(input, kernel, bias, "conv_transpose2d", c);
  if (stride < 1) throw std::invalid_argument("conv_transpose2d: stride must be >= 1");
  const int oh = (is[2] - 1) * stride - 2 * pad + ks[2];
  const int ow = (is[3] - 1) * stride - 2 * pad + ks[3];
  if (oh <= 0 || ow <= 0)
    throw std::invalid_argument("conv_transpose2d: non-positive output size");
  // the transpose output plays the dense role of the matching conv2d input
  const ConvGeom g = conv_geom(c, oh, ow, ks[2], ks[3], stride, pad);
  if (g.oh != is[2] || g.ow != is[3])
    throw std::invalid_argument("conv_transpose2d: inconsistent geometry");
  const int n = is[0];
  const long ckk = static_cast<long>(c) * ks[2] * ks[3];
  const long npix = static_cast<long>(is[2]) * is[3];

  Tensor<S> out({n, c, oh, ow});
  Eigen::Map<const MatRM<S>> kmat(kernel.data(), f, ckk);
  for (int i = 0; i < n; ++i) {
    Eigen::Map<const MatRM<S>> imat(input.data() + static_cast<long>(i) * f * npix, f, npix);
    MatRM<S> tmp = kmat.transpose() * imat;
    S* dst = out.data() + static_cast<long>(i) * c * oh * ow;
    detail::col2im(tmp.data(), g, dst);
    for (int j = 0; j < c; ++j)
      Eigen::Map<ArrayX<S>>(dst + static_cast<long>(j) * oh * ow, static_cast<long>(oh) * ow) +=
          bias.val()[j];
  }

  if (detail::grad_needed<S>({&input, &kernel, &bias})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([in = input.node(), kn = kernel.node(), bn = bias.node(),
                                on = out.node(), g, n, f, c, ckk, npix, oh, ow] {
      if (!on->grad.size()) return;
      Eigen::Map<const MatRM<S>> kmat(kn->value.data(), f, ckk);
      MatRM<S> col(ckk, npix);
      for (int i = 0; i < n; ++i) {
        detail::im2col(on->grad.data() + static_cast<long>(i) * c * oh * ow, g, col.data());
        Eigen::Map<const MatRM<S>> imat(in->value.data() + static_cast<long>(i) * f * npix, f, npix);
        if (in->requires_grad) {
          in->ensure_grad();
          Eigen::Map<MatRM<S>> gi(in->grad.data() + static_cast<long>(i) * f * npix, f, npix);
          gi.noalias() += kmat * col;
        }
        if (kn->requires_grad) {
          kn->ensure_grad();
          Eigen::Map<MatRM<S>> gk(kn->grad.data(), f, ckk);
          gk.noalias() += imat * col.transpose();
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int j = 0; j < c; ++j)
            bn->grad[j] += on->grad
                               .segment(static_cast<long>(i) * c * oh * ow +
                                            static_cast<long>(j) * oh * ow,
                                        static_cast<long>(oh) * ow)
                               .sum();
        }
      }
    });
  }
  return out;
}

}  // namespace rgan
