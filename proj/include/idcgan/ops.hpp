#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "idcgan/parallel.hpp"
#include "idcgan/tape.hpp"
#include "idcgan/tensor.hpp"

namespace idcgan {

enum class Mode { train, eval };

namespace detail {

template <typename Scalar>
using MatRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Gathers convolution receptive fields into a (C*kh*kw) x (OH*OW) matrix:
// col[(c*kh+u)*kw+v, oh*OW+ow] = x[c, oh*stride-pad+u, ow*stride-pad+v],
// zero outside the padded input.
template <typename Scalar>
void im2col(const Scalar* x, int C, int H, int W, int kh, int kw, int stride,
            int pad, int OH, int OW, Scalar* col) {
  const std::int64_t ohw = static_cast<std::int64_t>(OH) * OW;
  for (int c = 0; c < C; ++c) {
    const Scalar* plane = x + static_cast<std::int64_t>(c) * H * W;
    for (int u = 0; u < kh; ++u) {
      for (int v = 0; v < kw; ++v) {
        Scalar* row = col + (static_cast<std::int64_t>(c * kh + u) * kw + v) * ohw;
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * stride - pad + u;
          Scalar* dst = row + static_cast<std::int64_t>(oh) * OW;
          if (ih < 0 || ih >= H) {
            std::fill(dst, dst + OW, Scalar(0));
            continue;
          }
          const Scalar* src = plane + static_cast<std::int64_t>(ih) * W;
          if (stride == 1) {
            const int base = v - pad;
            const int lo = std::max(0, -base);
            const int hi = std::min(OW, W - base);
            for (int ow = 0; ow < lo; ++ow) dst[ow] = Scalar(0);
            if (hi > lo) std::copy(src + base + lo, src + base + hi, dst + lo);
            for (int ow = std::max(lo, hi); ow < OW; ++ow) dst[ow] = Scalar(0);
          } else {
            for (int ow = 0; ow < OW; ++ow) {
              const int iw = ow * stride - pad + v;
              dst[ow] = (iw >= 0 && iw < W) ? src[iw] : Scalar(0);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds the column matrix back onto the image.
template <typename Scalar>
void col2im_add(const Scalar* col, int C, int H, int W, int kh, int kw,
                int stride, int pad, int OH, int OW, Scalar* x) {
  const std::int64_t ohw = static_cast<std::int64_t>(OH) * OW;
  for (int c = 0; c < C; ++c) {
    Scalar* plane = x + static_cast<std::int64_t>(c) * H * W;
    for (int u = 0; u < kh; ++u) {
      for (int v = 0; v < kw; ++v) {
        const Scalar* row = col + (static_cast<std::int64_t>(c * kh + u) * kw + v) * ohw;
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * stride - pad + u;
          if (ih < 0 || ih >= H) continue;
          Scalar* dst = plane + static_cast<std::int64_t>(ih) * W;
          const Scalar* src = row + static_cast<std::int64_t>(oh) * OW;
          for (int ow = 0; ow < OW; ++ow) {
            const int iw = ow * stride - pad + v;
            if (iw >= 0 && iw < W) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

template <typename Scalar>
int node_of(const Tape<Scalar>* tape, const Tensor<Scalar>& t) {
  return (tape && tape->owns(t)) ? t.node : -1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution / transposed convolution
// ---------------------------------------------------------------------------

// 2-D cross-correlation plus bias. kernel layout [Cout, Cin, kh, kw];
// output spatial size (H + 2*pad - kh)/stride + 1 must be integral.
template <typename Scalar>
Tensor<Scalar> conv2d(Tape<Scalar>* tape, const Tensor<Scalar>& x,
                      const Tensor<Scalar>& kernel, const Tensor<Scalar>& bias,
                      int stride, int pad) {
  expect(x.shape.size() == 4, "conv2d: input must be [N,C,H,W], got " + to_string(x.shape));
  expect(kernel.shape.size() == 4,
         "conv2d: kernel must be [Cout,Cin,kh,kw], got " + to_string(kernel.shape));
  expect(stride >= 1 && pad >= 0, "conv2d: require stride >= 1 and pad >= 0");
  const int N = static_cast<int>(x.dim(0)), Ci = static_cast<int>(x.dim(1));
  const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
  const int Co = static_cast<int>(kernel.dim(0));
  const int kh = static_cast<int>(kernel.dim(2)), kw = static_cast<int>(kernel.dim(3));
  expect(kernel.dim(1) == Ci, "conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                                  " input channels, input has " + std::to_string(Ci));
  expect(bias.shape == Shape{Co}, "conv2d: bias must be [Cout], got " + to_string(bias.shape));
  const int hn = H + 2 * pad - kh, wn = W + 2 * pad - kw;
  expect(hn >= 0 && wn >= 0 && hn % stride == 0 && wn % stride == 0,
         "conv2d: non-integral output size for input " + to_string(x.shape) + ", kernel " +
             to_string(kernel.shape) + ", stride " + std::to_string(stride) + ", pad " +
             std::to_string(pad));
  const int OH = hn / stride + 1, OW = wn / stride + 1;
  const std::int64_t ckk = static_cast<std::int64_t>(Ci) * kh * kw;
  const std::int64_t ohw = static_cast<std::int64_t>(OH) * OW;

  using Mat = detail::MatRM<Scalar>;
  Tensor<Scalar> out = Tensor<Scalar>::zeros({N, Co, OH, OW});
  Eigen::Map<const Mat> K(kernel.data.data(), Co, ckk);
  parallel_for(N, [&](std::int64_t n) {
    std::vector<Scalar> col(static_cast<std::size_t>(ckk * ohw));
    detail::im2col(x.data.data() + n * Ci * H * W, Ci, H, W, kh, kw, stride, pad, OH, OW,
                   col.data());
    Eigen::Map<const Mat> C(col.data(), ckk, ohw);
    Eigen::Map<Mat> O(out.data.data() + n * Co * ohw, Co, ohw);
    O.noalias() = K * C;
    for (int co = 0; co < Co; ++co) O.row(co).array() += bias.data[co];
  });

  if (!tape) return out;
  const int xn = detail::node_of(tape, x);
  const int kn = detail::node_of(tape, kernel);
  const int bn = detail::node_of(tape, bias);
  if (xn < 0 && kn < 0 && bn < 0) return out;

  out.tape_id = tape->id();
  out.node = tape->record(
      "conv2d", {xn, kn, bn},
      [=, xs = x.detached(), ks = kernel.detached()](Tape<Scalar>& t,
                                                     const typename Tensor<Scalar>::Array& gout) {
        using Arr = typename Tensor<Scalar>::Array;
        Arr gx, gk, gb;
        if (xn >= 0) gx = Arr::Zero(xs.size());
        if (kn >= 0) gk = Arr::Zero(ks.size());
        if (bn >= 0) gb = Arr::Zero(Co);
        Eigen::Map<const Mat> Km(ks.data.data(), Co, ckk);
        std::vector<Scalar> col(static_cast<std::size_t>(ckk * ohw));
        std::vector<Scalar> colg;
        if (xn >= 0) colg.resize(static_cast<std::size_t>(ckk * ohw));
        for (int n = 0; n < N; ++n) {
          Eigen::Map<const Mat> G(gout.data() + n * Co * ohw, Co, ohw);
          if (kn >= 0) {
            detail::im2col(xs.data.data() + static_cast<std::int64_t>(n) * Ci * H * W, Ci, H, W,
                           kh, kw, stride, pad, OH, OW, col.data());
            Eigen::Map<const Mat> C(col.data(), ckk, ohw);
            Eigen::Map<Mat> GK(gk.data(), Co, ckk);
            GK.noalias() += G * C.transpose();
          }
          if (xn >= 0) {
            Eigen::Map<Mat> CG(colg.data(), ckk, ohw);
            CG.noalias() = Km.transpose() * G;
            detail::col2im_add(colg.data(), Ci, H, W, kh, kw, stride, pad, OH, OW,
                               gx.data() + static_cast<std::int64_t>(n) * Ci * H * W);
          }
          if (bn >= 0) {
            for (int co = 0; co < Co; ++co) gb[co] += G.row(co).sum();
          }
        }
        if (xn >= 0) t.accum(xn, gx);
        if (kn >= 0) t.accum(kn, gk);
        if (bn >= 0) t.accum(bn, gb);
      },
      out.size());
  return out;
}

// Transposed convolution, the exact adjoint of conv2d: with matched geometry
// and the same kernel tensor, <conv2d(x,k), y> == <x, deconv2d(y,k)>.
// kernel layout [Cin, Cout, kh, kw]; output size (H-1)*stride - 2*pad + kh.
template <typename Scalar>
Tensor<Scalar> deconv2d(Tape<Scalar>* tape, const Tensor<Scalar>& x,
                        const Tensor<Scalar>& kernel, const Tensor<Scalar>& bias,
                        int stride, int pad) {
  expect(x.shape.size() == 4, "deconv2d: input must be [N,C,H,W], got " + to_string(x.shape));
  expect(kernel.shape.size() == 4,
         "deconv2d: kernel must be [Cin,Cout,kh,kw], got " + to_string(kernel.shape));
  expect(stride >= 1 && pad >= 0, "deconv2d: require stride >= 1 and pad >= 0");
  const int N = static_cast<int>(x.dim(0)), Ci = static_cast<int>(x.dim(1));
  const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
  const int Co = static_cast<int>(kernel.dim(1));
  const int kh = static_cast<int>(kernel.dim(2)), kw = static_cast<int>(kernel.dim(3));
  expect(kernel.dim(0) == Ci, "deconv2d: kernel expects " + std::to_string(kernel.dim(0)) +
                                  " input channels, input has " + std::to_string(Ci));
  expect(bias.shape == Shape{Co}, "deconv2d: bias must be [Cout], got " + to_string(bias.shape));
  const int OH = (H - 1) * stride - 2 * pad + kh;
  const int OW = (W - 1) * stride - 2 * pad + kw;
  expect(OH >= 1 && OW >= 1, "deconv2d: empty output for input " + to_string(x.shape));
  const std::int64_t ckk = static_cast<std::int64_t>(Co) * kh * kw;
  const std::int64_t ihw = static_cast<std::int64_t>(H) * W;

  using Mat = detail::MatRM<Scalar>;
  Tensor<Scalar> out = Tensor<Scalar>::zeros({N, Co, OH, OW});
  Eigen::Map<const Mat> K(kernel.data.data(), Ci, ckk);
  parallel_for(N, [&](std::int64_t n) {
    Eigen::Map<const Mat> X(x.data.data() + n * Ci * ihw, Ci, ihw);
    Mat colbuf(ckk, ihw);
    colbuf.noalias() = K.transpose() * X;
    Scalar* o = out.data.data() + n * Co * OH * OW;
    detail::col2im_add(colbuf.data(), Co, OH, OW, kh, kw, stride, pad, H, W, o);
    for (int co = 0; co < Co; ++co) {
      Eigen::Map<typename Tensor<Scalar>::Array> plane(o + static_cast<std::int64_t>(co) * OH * OW,
                                                       static_cast<std::int64_t>(OH) * OW);
      plane += bias.data[co];
    }
  });

  if (!tape) return out;
  const int xn = detail::node_of(tape, x);
  const int kn = detail::node_of(tape, kernel);
  const int bn = detail::node_of(tape, bias);
  if (xn < 0 && kn < 0 && bn < 0) return out;

  out.tape_id = tape->id();
  out.node = tape->record(
      "deconv2d", {xn, kn, bn},
      [=, xs = x.detached(), ks = kernel.detached()](Tape<Scalar>& t,
                                                     const typename Tensor<Scalar>::Array& gout) {
        using Arr = typename Tensor<Scalar>::Array;
        Arr gx, gk, gb;
        if (xn >= 0) gx = Arr::Zero(xs.size());
        if (kn >= 0) gk = Arr::Zero(ks.size());
        if (bn >= 0) gb = Arr::Zero(Co);
        Eigen::Map<const Mat> Km(ks.data.data(), Ci, ckk);
        std::vector<Scalar> col(static_cast<std::size_t>(ckk * ihw));
        for (int n = 0; n < N; ++n) {
          const Scalar* g = gout.data() + static_cast<std::int64_t>(n) * Co * OH * OW;
          // receptive fields of the adjoint conv: output space is [Co,OH,OW],
          // "output positions" are the deconv input pixels
          detail::im2col(g, Co, OH, OW, kh, kw, stride, pad, H, W, col.data());
          Eigen::Map<const Mat> C(col.data(), ckk, ihw);
          if (xn >= 0) {
            Eigen::Map<Mat> GX(gx.data() + n * Ci * ihw, Ci, ihw);
            GX.noalias() = Km * C;
          }
          if (kn >= 0) {
            Eigen::Map<const Mat> X(xs.data.data() + n * Ci * ihw, Ci, ihw);
            Eigen::Map<Mat> GK(gk.data(), Ci, ckk);
            GK.noalias() += X * C.transpose();
          }
          if (bn >= 0) {
            for (int co = 0; co < Co; ++co) {
              Eigen::Map<const Arr> plane(g + static_cast<std::int64_t>(co) * OH * OW,
                                          static_cast<std::int64_t>(OH) * OW);
              gb[co] += plane.sum();
            }
          }
        }
        if (xn >= 0) t.accum(xn, gx);
        if (kn >= 0) t.accum(kn, gk);
        if (bn >= 0) t.accum(bn, gb);
      },
      out.size());
  return out;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

// Per-channel batch normalization over [N,C,H,W]. Train mode normalizes by
// batch statistics (biased variance, eps added inside the square root) and
// updates the running statistics in place:
//   running = momentum * running + (1 - momentum) * batch.
// Eval mode uses the running statistics, so single-image inference works.
template <typename Scalar>
Tensor<Scalar> batchnorm(Tape<Scalar>* tape, const Tensor<Scalar>& x,
                         const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                         Tensor<Scalar>& running_mean, Tensor<Scalar>& running_var,
                         Mode mode, double momentum = 0.9, double eps = 1e-5) {
  expect(x.shape.size() == 4, "batchnorm: input must be [N,C,H,W], got " + to_string(x.shape));
  const int N = static_cast<int>(x.dim(0)), C = static_cast<int>(x.dim(1));
  const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
  expect(gamma.shape == Shape{C} && beta.shape == Shape{C},
         "batchnorm: gamma/beta must be [C]");
  expect(running_mean.shape == Shape{C} && running_var.shape == Shape{C},
         "batchnorm: running stats must be [C]");
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;
  const std::int64_t m = static_cast<std::int64_t>(N) * hw;
  if (mode == Mode::train) {
    expect(m >= 2, "batchnorm: train mode needs at least 2 values per channel");
  }

  using Arr = typename Tensor<Scalar>::Array;
  Arr mean(C), invstd(C);
  if (mode == Mode::train) {
    for (int c = 0; c < C; ++c) {
      double sum = 0.0;
      for (int n = 0; n < N; ++n) {
        Eigen::Map<const Arr> blk(x.data.data() + (static_cast<std::int64_t>(n) * C + c) * hw, hw);
        sum += static_cast<double>(blk.template cast<double>().sum());
      }
      const double mu = sum / static_cast<double>(m);
      double sq = 0.0;
      for (int n = 0; n < N; ++n) {
        Eigen::Map<const Arr> blk(x.data.data() + (static_cast<std::int64_t>(n) * C + c) * hw, hw);
        sq += (blk.template cast<double>() - mu).square().sum();
      }
      const double var = sq / static_cast<double>(m);
      mean[c] = static_cast<Scalar>(mu);
      invstd[c] = static_cast<Scalar>(1.0 / std::sqrt(var + eps));
      running_mean.data[c] = static_cast<Scalar>(momentum * running_mean.data[c] +
                                                 (1.0 - momentum) * mu);
      running_var.data[c] = static_cast<Scalar>(momentum * running_var.data[c] +
                                                (1.0 - momentum) * var);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = running_mean.data[c];
      invstd[c] = static_cast<Scalar>(
          1.0 / std::sqrt(static_cast<double>(running_var.data[c]) + eps));
    }
  }

  Tensor<Scalar> out = Tensor<Scalar>::zeros(x.shape);
  Arr xhat(x.size());
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
      Eigen::Map<const Arr> in(x.data.data() + off, hw);
      Eigen::Map<Arr> xh(xhat.data() + off, hw);
      Eigen::Map<Arr> o(out.data.data() + off, hw);
      xh = (in - mean[c]) * invstd[c];
      o = gamma.data[c] * xh + beta.data[c];
    }
  }

  if (!tape) return out;
  const int xn = detail::node_of(tape, x);
  const int gn = detail::node_of(tape, gamma);
  const int bn = detail::node_of(tape, beta);
  if (xn < 0 && gn < 0 && bn < 0) return out;

  const bool train = mode == Mode::train;
  out.tape_id = tape->id();
  out.node = tape->record(
      "batchnorm", {xn, gn, bn},
      [=, gam = gamma.detached(), xh = std::move(xhat),
       istd = std::move(invstd)](Tape<Scalar>& t, const Arr& gout) {
        Arr dgamma = Arr::Zero(C), dbeta = Arr::Zero(C);
        for (int n = 0; n < N; ++n) {
          for (int c = 0; c < C; ++c) {
            const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
            Eigen::Map<const Arr> g(gout.data() + off, hw);
            Eigen::Map<const Arr> xhb(xh.data() + off, hw);
            dbeta[c] += g.sum();
            dgamma[c] += (g * xhb).sum();
          }
        }
        if (xn >= 0) {
          Arr gx(static_cast<std::int64_t>(N) * C * hw);
          for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
              const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
              Eigen::Map<const Arr> g(gout.data() + off, hw);
              Eigen::Map<const Arr> xhb(xh.data() + off, hw);
              Eigen::Map<Arr> o(gx.data() + off, hw);
              if (train) {
                const Scalar k1 = dbeta[c] / static_cast<Scalar>(m);
                const Scalar k2 = dgamma[c] / static_cast<Scalar>(m);
                o = gam.data[c] * istd[c] * (g - k1 - xhb * k2);
              } else {
                o = gam.data[c] * istd[c] * g;
              }
            }
          }
          t.accum(xn, gx);
        }
        if (gn >= 0) t.accum(gn, dgamma);
        if (bn >= 0) t.accum(bn, dbeta);
      },
      out.size());
  return out;
}

// ---------------------------------------------------------------------------
// Activations and pooling
// ---------------------------------------------------------------------------

// PReLU with a per-channel learnable negative slope.
template <typename Scalar>
Tensor<Scalar> prelu(Tape<Scalar>* tape, const Tensor<Scalar>& x, const Tensor<Scalar>& slope) {
  expect(x.shape.size() == 4, "prelu: input must be [N,C,H,W], got " + to_string(x.shape));
  const int N = static_cast<int>(x.dim(0)), C = static_cast<int>(x.dim(1));
  const std::int64_t hw = x.dim(2) * x.dim(3);
  expect(slope.shape == Shape{C}, "prelu: slope must be [C], got " + to_string(slope.shape));

  using Arr = typename Tensor<Scalar>::Array;
  Tensor<Scalar> out = Tensor<Scalar>::zeros(x.shape);
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
      Eigen::Map<const Arr> in(x.data.data() + off, hw);
      Eigen::Map<Arr> o(out.data.data() + off, hw);
      o = (in >= Scalar(0)).select(in, slope.data[c] * in);
    }
  }

  if (!tape) return out;
  const int xn = detail::node_of(tape, x);
  const int sn = detail::node_of(tape, slope);
  if (xn < 0 && sn < 0) return out;

  out.tape_id = tape->id();
  out.node = tape->record(
      "prelu", {xn, sn},
      [=, xs = x.detached(), sl = slope.detached()](Tape<Scalar>& t, const Arr& gout) {
        if (xn >= 0) {
          Arr gx(xs.size());
          for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
              const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
              Eigen::Map<const Arr> in(xs.data.data() + off, hw);
              Eigen::Map<const Arr> g(gout.data() + off, hw);
              Eigen::Map<Arr> o(gx.data() + off, hw);
              o = (in >= Scalar(0)).select(g, sl.data[c] * g);
            }
          }
          t.accum(xn, gx);
        }
        if (sn >= 0) {
          Arr gs = Arr::Zero(C);
          for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
              const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
              Eigen::Map<const Arr> in(xs.data.data() + off, hw);
              Eigen::Map<const Arr> g(gout.data() + off, hw);
              gs[c] += (in < Scalar(0)).select(g * in, Arr::Zero(hw)).sum();
            }
          }
          t.accum(sn, gs);
        }
      },
      out.size());
  return out;
}

template <typename Scalar>
Tensor<Scalar> relu(Tape<Scalar>* tape, const Tensor<Scalar>& x) {
  using Arr = typename Tensor<Scalar>::Array;
  Tensor<Scalar> out;
  out.shape = x.shape;
  out.data = x.data.max(Scalar(0));
  const int xn = detail::node_of(tape, x);
  if (xn < 0) return out;
  out.tape_id = tape->id();
  out.node = tape->record(
      "relu", {xn},
      [=, xs = x.detached()](Tape<Scalar>& t, const Arr& gout) {
        t.accum(xn, (xs.data > Scalar(0)).select(gout, Arr::Zero(gout.size())));
      },
      out.size());
  return out;
}

template <typename Scalar>
Tensor<Scalar> tanh(Tape<Scalar>* tape, const Tensor<Scalar>& x) {
  using Arr = typename Tensor<Scalar>::Array;
  Tensor<Scalar> out;
  out.shape = x.shape;
  out.data = x.data.tanh();
  const int xn = detail::node_of(tape, x);
  if (xn < 0) return out;
  out.tape_id = tape->id();
  out.node = tape->record(
      "tanh", {xn},
      [xn, y = Arr(out.data)](Tape<Scalar>& t, const Arr& gout) {
        t.accum(xn, gout * (Scalar(1) - y.square()));
      },
      out.size());
  return out;
}

template <typename Scalar>
Tensor<Scalar> sigmoid(Tape<Scalar>* tape, const Tensor<Scalar>& x) {
  using Arr = typename Tensor<Scalar>::Array;
  Tensor<Scalar> out;
  out.shape = x.shape;
  out.data = ((-x.data).exp() + Scalar(1)).inverse();
  const int xn = detail::node_of(tape, x);
  if (xn < 0) return out;
  out.tape_id = tape->id();
  out.node = tape->record(
      "sigmoid", {xn},
      [xn, y = Arr(out.data)](Tape<Scalar>& t, const Arr& gout) {
        t.accum(xn, gout * y * (Scalar(1) - y));
      },
      out.size());
  return out;
}

// 2x2 max pooling with stride 2; ties resolve to the first element in scan
// order so the backward scatter is deterministic.
template <typename Scalar>
Tensor<Scalar> maxpool2(Tape<Scalar>* tape, const Tensor<Scalar>& x) {
  expect(x.shape.size() == 4, "maxpool2: input must be [N,C,H,W], got " + to_string(x.shape));
  const int N = static_cast<int>(x.dim(0)), C = static_cast<int>(x.dim(1));
  const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
  expect(H % 2 == 0 && W % 2 == 0, "maxpool2: spatial dims must be even, got " + to_string(x.shape));
  const int OH = H / 2, OW = W / 2;

  using Arr = typename Tensor<Scalar>::Array;
  Tensor<Scalar> out = Tensor<Scalar>::zeros({N, C, OH, OW});
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.size()));
  std::int64_t oi = 0;
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(N) * C; ++p) {
    const Scalar* plane = x.data.data() + p * H * W;
    const std::int64_t pbase = p * H * W;
    for (int oh = 0; oh < OH; ++oh) {
      for (int ow = 0; ow < OW; ++ow) {
        const std::int64_t i00 = static_cast<std::int64_t>(2 * oh) * W + 2 * ow;
        std::int64_t best = i00;
        Scalar bv = plane[i00];
        const std::int64_t cand[3] = {i00 + 1, i00 + W, i00 + W + 1};
        for (std::int64_t idx : cand) {
          if (plane[idx] > bv) {
            bv = plane[idx];
            best = idx;
          }
        }
        out.data[oi] = bv;
        argmax[static_cast<std::size_t>(oi)] = pbase + best;
        ++oi;
      }
    }
  }

  const int xn = detail::node_of(tape, x);
  if (xn < 0) return out;
  out.tape_id = tape->id();
  const std::int64_t xsize = x.size();
  out.node = tape->record(
      "maxpool2", {xn},
      [xn, xsize, am = std::move(argmax)](Tape<Scalar>& t, const Arr& gout) {
        Arr gx = Arr::Zero(xsize);
        for (std::int64_t i = 0; i < gout.size(); ++i) {
          gx[am[static_cast<std::size_t>(i)]] += gout[i];
        }
        t.accum(xn, gx);
      },
      out.size());
  return out;
}

// ---------------------------------------------------------------------------
// Structural / elementwise ops
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> add(Tape<Scalar>* tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  expect(a.shape == b.shape,
         "add: shape mismatch " + to_string(a.shape) + " vs " + to_string(b.shape));
  using Arr = typename Tensor<Scalar>::Array;
  Tensor<Scalar> out;
  out.shape = a.shape;
  out.data = a.data + b.data;
  const int an = detail::node_of(tape, a), bn = detail::node_of(tape, b);
  if (an < 0 && bn < 0) return out;
  out.tape_id = tape->id();
  out.node = tape->record(
      "add", {an, bn},
      [an, bn](Tape<Scalar>& t, const Arr& gout) {
        if (an >= 0) t.accum(an, gout);
        if (bn >= 0) t.accum(bn, gout);
      },
      out.size());
  return out;
}

template <typename Scalar>
Tensor<Scalar> sub(Tape<Scalar>* tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  expect(a.shape == b.shape,
         "sub: shape mismatch " + to_string(a.shape) + " vs " + to_string(b.shape));
  using Arr = typename Tensor<Scalar>::Array;
  Tensor<Scalar> out;
  out.shape = a.shape;
  out.data = a.data - b.data;
  const int an = detail::node_of(tape, a), bn = detail::node_of(tape, b);
  if (an < 0 && bn < 0) return out;
  out.tape_id = tape->id();
  out.node = tape->record(
      "sub", {an, bn},
      [an, bn](Tape<Scalar>& t, const Arr& gout) {
        if (an >= 0) t.accum(an, gout);
        if (bn >= 0) t.accum(bn, -gout);
      },
      out.size());
  return out;
}

template <typename Scalar>
Tensor<Scalar> scale(Tape<Scalar>* tape, const Tensor<Scalar>& x, double c) {
  using Arr = typename Tensor<Scalar>::Array;
  Tensor<Scalar> out;
  out.shape = x.shape;
  out.data = x.data * static_cast<Scalar>(c);
  const int xn = detail::node_of(tape, x);
  if (xn < 0) return out;
  out.tape_id = tape->id();
  out.node = tape->record(
      "scale", {xn},
      [xn, c](Tape<Scalar>& t, const Arr& gout) { t.accum(xn, gout * static_cast<Scalar>(c)); },
      out.size());
  return out;
}

// Concatenates two batches along the channel axis.
template <typename Scalar>
Tensor<Scalar> concat_channels(Tape<Scalar>* tape, const Tensor<Scalar>& a,
                               const Tensor<Scalar>& b) {
  expect(a.shape.size() == 4 && b.shape.size() == 4, "concat_channels: inputs must be [N,C,H,W]");
  expect(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
         "concat_channels: shape mismatch " + to_string(a.shape) + " vs " + to_string(b.shape));
  const int N = static_cast<int>(a.dim(0));
  const std::int64_t ca = a.dim(1) * a.dim(2) * a.dim(3);
  const std::int64_t cb = b.dim(1) * b.dim(2) * b.dim(3);

  using Arr = typename Tensor<Scalar>::Array;
  Tensor<Scalar> out = Tensor<Scalar>::zeros({a.dim(0), a.dim(1) + b.dim(1), a.dim(2), a.dim(3)});
  for (int n = 0; n < N; ++n) {
    out.data.segment(n * (ca + cb), ca) = a.data.segment(n * ca, ca);
    out.data.segment(n * (ca + cb) + ca, cb) = b.data.segment(n * cb, cb);
  }

  const int an = detail::node_of(tape, a), bn = detail::node_of(tape, b);
  if (an < 0 && bn < 0) return out;
  out.tape_id = tape->id();
  out.node = tape->record(
      "concat_channels", {an, bn},
      [an, bn, N, ca, cb](Tape<Scalar>& t, const Arr& gout) {
        if (an >= 0) {
          Arr ga(N * ca);
          for (int n = 0; n < N; ++n)
            ga.segment(n * ca, ca) = gout.segment(n * (ca + cb), ca);
          t.accum(an, ga);
        }
        if (bn >= 0) {
          Arr gb(N * cb);
          for (int n = 0; n < N; ++n)
            gb.segment(n * cb, cb) = gout.segment(n * (ca + cb) + ca, cb);
          t.accum(bn, gb);
        }
      },
      out.size());
  return out;
}

// Mean over all non-batch axes: [N,C,H,W] -> [N].
template <typename Scalar>
Tensor<Scalar> per_sample_mean(Tape<Scalar>* tape, const Tensor<Scalar>& x) {
  expect(x.shape.size() == 4, "per_sample_mean: input must be [N,C,H,W], got " + to_string(x.shape));
  const int N = static_cast<int>(x.dim(0));
  const std::int64_t chw = x.dim(1) * x.dim(2) * x.dim(3);

  using Arr = typename Tensor<Scalar>::Array;
  Tensor<Scalar> out = Tensor<Scalar>::zeros({N});
  for (int n = 0; n < N; ++n) {
    out.data[n] = x.data.segment(n * chw, chw).sum() / static_cast<Scalar>(chw);
  }

  const int xn = detail::node_of(tape, x);
  if (xn < 0) return out;
  out.tape_id = tape->id();
  out.node = tape->record(
      "per_sample_mean", {xn},
      [xn, N, chw](Tape<Scalar>& t, const Arr& gout) {
        Arr gx(N * chw);
        for (int n = 0; n < N; ++n) {
          gx.segment(n * chw, chw).setConstant(gout[n] / static_cast<Scalar>(chw));
        }
        t.accum(xn, gx);
      },
      out.size());
  return out;
}

// Mean of squared entries over the whole tensor -> scalar.
template <typename Scalar>
Tensor<Scalar> mean_sq(Tape<Scalar>* tape, const Tensor<Scalar>& x) {
  expect(x.size() >= 1, "mean_sq: empty tensor");
  using Arr = typename Tensor<Scalar>::Array;
  Tensor<Scalar> out = Tensor<Scalar>::zeros({1});
  const std::int64_t n = x.size();
  out.data[0] = x.data.square().sum() / static_cast<Scalar>(n);
  const int xn = detail::node_of(tape, x);
  if (xn < 0) return out;
  out.tape_id = tape->id();
  out.node = tape->record(
      "mean_sq", {xn},
      [xn, n, xs = x.detached()](Tape<Scalar>& t, const Arr& gout) {
        t.accum(xn, (Scalar(2) * gout[0] / static_cast<Scalar>(n)) * xs.data);
      },
      out.size());
  return out;
}

// -(1/n) * sum log(max(x_i, eps)) -> scalar; entries clamped at eps carry no
// gradient (clamp contract keeps the value finite for scores at 0).
template <typename Scalar>
Tensor<Scalar> neg_mean_log(Tape<Scalar>* tape, const Tensor<Scalar>& x, double eps) {
  expect(x.size() >= 1, "neg_mean_log: empty batch");
  using Arr = typename Tensor<Scalar>::Array;
  const Scalar e = static_cast<Scalar>(eps);
  const std::int64_t n = x.size();
  Tensor<Scalar> out = Tensor<Scalar>::zeros({1});
  out.data[0] = -x.data.max(e).log().sum() / static_cast<Scalar>(n);
  const int xn = detail::node_of(tape, x);
  if (xn < 0) return out;
  out.tape_id = tape->id();
  out.node = tape->record(
      "neg_mean_log", {xn},
      [xn, n, e, xs = x.detached()](Tape<Scalar>& t, const Arr& gout) {
        const Scalar k = -gout[0] / static_cast<Scalar>(n);
        t.accum(xn, (xs.data > e).select(k / xs.data, Arr::Zero(xs.size())));
      },
      out.size());
  return out;
}

// -(1/n) * sum log(max(1 - x_i, eps)) -> scalar.
template <typename Scalar>
Tensor<Scalar> neg_mean_log_one_minus(Tape<Scalar>* tape, const Tensor<Scalar>& x, double eps) {
  expect(x.size() >= 1, "neg_mean_log_one_minus: empty batch");
  using Arr = typename Tensor<Scalar>::Array;
  const Scalar e = static_cast<Scalar>(eps);
  const std::int64_t n = x.size();
  Tensor<Scalar> out = Tensor<Scalar>::zeros({1});
  out.data[0] = -(Scalar(1) - x.data).max(e).log().sum() / static_cast<Scalar>(n);
  const int xn = detail::node_of(tape, x);
  if (xn < 0) return out;
  out.tape_id = tape->id();
  out.node = tape->record(
      "neg_mean_log_one_minus", {xn},
      [xn, n, e, xs = x.detached()](Tape<Scalar>& t, const Arr& gout) {
        const Scalar k = gout[0] / static_cast<Scalar>(n);
        t.accum(xn, ((Scalar(1) - xs.data) > e)
                        .select(k / (Scalar(1) - xs.data), Arr::Zero(xs.size())));
      },
      out.size());
  return out;
}

// ---------------------------------------------------------------------------
// Inference-only spatial helpers (no gradients)
// ---------------------------------------------------------------------------

// Reflect-pads the bottom/right borders of every plane (half-sample
// symmetric, edge row/column not duplicated beyond the mirror).
template <typename Scalar>
Tensor<Scalar> pad_reflect_br(const Tensor<Scalar>& x, int pad_h, int pad_w) {
  expect(x.shape.size() == 4, "pad_reflect_br: input must be [N,C,H,W]");
  expect(pad_h >= 0 && pad_w >= 0, "pad_reflect_br: negative padding");
  const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
  expect(pad_h < H && pad_w < W, "pad_reflect_br: padding must be smaller than the image");
  const int OH = H + pad_h, OW = W + pad_w;
  const std::int64_t planes = x.dim(0) * x.dim(1);
  Tensor<Scalar> out = Tensor<Scalar>::zeros({x.dim(0), x.dim(1), OH, OW});
  for (std::int64_t p = 0; p < planes; ++p) {
    const Scalar* src = x.data.data() + p * H * W;
    Scalar* dst = out.data.data() + p * static_cast<std::int64_t>(OH) * OW;
    for (int i = 0; i < OH; ++i) {
      const int si = i < H ? i : 2 * H - 2 - i;
      for (int j = 0; j < OW; ++j) {
        const int sj = j < W ? j : 2 * W - 2 - j;
        dst[static_cast<std::int64_t>(i) * OW + j] = src[static_cast<std::int64_t>(si) * W + sj];
      }
    }
  }
  return out;
}

// Crops the top-left H x W window of every plane.
template <typename Scalar>
Tensor<Scalar> crop_tl(const Tensor<Scalar>& x, int h, int w) {
  expect(x.shape.size() == 4, "crop_tl: input must be [N,C,H,W]");
  expect(h >= 1 && w >= 1 && h <= x.dim(2) && w <= x.dim(3), "crop_tl: bad crop size");
  const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
  const std::int64_t planes = x.dim(0) * x.dim(1);
  Tensor<Scalar> out = Tensor<Scalar>::zeros({x.dim(0), x.dim(1), h, w});
  for (std::int64_t p = 0; p < planes; ++p) {
    const Scalar* src = x.data.data() + p * H * W;
    Scalar* dst = out.data.data() + p * static_cast<std::int64_t>(h) * w;
    for (int i = 0; i < h; ++i) {
      std::copy(src + static_cast<std::int64_t>(i) * W, src + static_cast<std::int64_t>(i) * W + w,
                dst + static_cast<std::int64_t>(i) * w);
    }
  }
  return out;
}

}  // namespace idcgan
