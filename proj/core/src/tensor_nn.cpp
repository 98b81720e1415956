#include <algorithm>
#include <cmath>
#include <memory>

#include "kernels.hpp"
#include "op_builder.hpp"
#include "ssdd/tensor.hpp"

// Image-shaped ops: convolution, batch normalization, pooling, resampling,
// per-sample gathers, and the classification loss. Layout is NCHW throughout.

namespace ssdd {

using detail::Node;
using opb::make_op;

namespace {

void require_nchw(const Tensor& x, const char* op) {
  if (x.ndim() != 4)
    throw ShapeError(std::string(op) + ": expects [n,c,h,w], got " + shape_str(x.shape()));
}

// Scatters im2col patches for one batch chunk: cols is [c*kh*kw, rows*oh*ow].
void im2col(const double* x, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t pad,
            int64_t oh, int64_t ow, int64_t rows, double* cols) {
  const int64_t patch = c * kh * kw;
  const int64_t width = rows * oh * ow;
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t ki = 0; ki < kh; ++ki)
      for (int64_t kj = 0; kj < kw; ++kj) {
        double* dst = cols + (ci * kh * kw + ki * kw + kj) * width;
        for (int64_t r = 0; r < rows; ++r) {
          const double* src = x + (r * c + ci) * h * w;
          for (int64_t oi = 0; oi < oh; ++oi) {
            const int64_t ii = oi + ki - pad;
            double* drow = dst + (r * oh + oi) * ow;
            if (ii < 0 || ii >= h) {
              std::fill(drow, drow + ow, 0.0);
              continue;
            }
            for (int64_t oj = 0; oj < ow; ++oj) {
              const int64_t jj = oj + kj - pad;
              drow[oj] = (jj >= 0 && jj < w) ? src[ii * w + jj] : 0.0;
            }
          }
        }
      }
  (void)patch;
}

// Adjoint of im2col: accumulates cols back into the input gradient.
void col2im_acc(const double* cols, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
                int64_t pad, int64_t oh, int64_t ow, int64_t rows, double* gx) {
  const int64_t width = rows * oh * ow;
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t ki = 0; ki < kh; ++ki)
      for (int64_t kj = 0; kj < kw; ++kj) {
        const double* src = cols + (ci * kh * kw + ki * kw + kj) * width;
        for (int64_t r = 0; r < rows; ++r) {
          double* dst = gx + (r * c + ci) * h * w;
          for (int64_t oi = 0; oi < oh; ++oi) {
            const int64_t ii = oi + ki - pad;
            if (ii < 0 || ii >= h) continue;
            const double* srow = src + (r * oh + oi) * ow;
            for (int64_t oj = 0; oj < ow; ++oj) {
              const int64_t jj = oj + kj - pad;
              if (jj >= 0 && jj < w) dst[ii * w + jj] += srow[oj];
            }
          }
        }
      }
}

constexpr int64_t kConvChunkRows = 64;

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, int pad) {
  require_nchw(x, "conv2d");
  if (w.ndim() != 4)
    throw ShapeError("conv2d: weight expects [oc,ic,kh,kw], got " + shape_str(w.shape()));
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t oc = w.dim(0), ic = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (ic != c)
    throw ShapeError("conv2d: input channels " + std::to_string(c) + " vs weight " +
                     std::to_string(ic));
  const int64_t oh = h + 2 * pad - kh + 1;
  const int64_t ow = wd + 2 * pad - kw + 1;
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: kernel larger than padded input");

  const int64_t patch = c * kh * kw;
  std::vector<double> out(static_cast<size_t>(n * oc * oh * ow), 0.0);

  // Patch matrices are kept for the backward pass, chunked over the batch to
  // bound scratch memory.
  auto saved = std::make_shared<std::vector<std::vector<double>>>();
  const double* xd = x.data().data();
  const double* wdat = w.data().data();
  for (int64_t r0 = 0; r0 < n; r0 += kConvChunkRows) {
    const int64_t rows = std::min<int64_t>(kConvChunkRows, n - r0);
    std::vector<double> cols(static_cast<size_t>(patch * rows * oh * ow));
    im2col(xd + r0 * c * h * wd, c, h, wd, kh, kw, pad, oh, ow, rows, cols.data());
    // chunk output viewed as [oc, rows*oh*ow] needs per-sample interleave:
    // compute into scratch then transpose rows into place
    std::vector<double> prod(static_cast<size_t>(oc * rows * oh * ow), 0.0);
    kern::mm_nn_acc(wdat, cols.data(), prod.data(), oc, patch, rows * oh * ow);
    for (int64_t o = 0; o < oc; ++o)
      for (int64_t r = 0; r < rows; ++r)
        std::copy_n(prod.data() + (o * rows + r) * oh * ow, oh * ow,
                    out.data() + ((r0 + r) * oc + o) * oh * ow);
    saved->push_back(std::move(cols));
  }

  return make_op({n, oc, oh, ow}, std::move(out), "conv2d", {x, w},
                 [saved, n, c, h, wd, oc, kh, kw, pad, oh, ow, patch](Node& self) {
                   const bool need_x = self.inputs[0]->requires_grad;
                   const bool need_w = self.inputs[1]->requires_grad;
                   const double* wdat = self.inputs[1]->value.data();
                   double* gw = need_w ? self.inputs[1]->grad_data() : nullptr;
                   double* gx = need_x ? self.inputs[0]->grad_data() : nullptr;
                   size_t chunk = 0;
                   for (int64_t r0 = 0; r0 < n; r0 += kConvChunkRows, ++chunk) {
                     const int64_t rows = std::min<int64_t>(kConvChunkRows, n - r0);
                     const int64_t width = rows * oh * ow;
                     // regroup incoming grad to [oc, width]
                     std::vector<double> gout(static_cast<size_t>(oc * width));
                     for (int64_t o = 0; o < oc; ++o)
                       for (int64_t r = 0; r < rows; ++r)
                         std::copy_n(self.grad.data() + ((r0 + r) * oc + o) * oh * ow, oh * ow,
                                     gout.data() + (o * rows + r) * oh * ow);
                     const auto& cols = (*saved)[chunk];
                     if (need_w)  // gW += gout * cols^T
                       kern::mm_nt_acc(gout.data(), cols.data(), gw, oc, width, patch);
                     if (need_x) {
                       std::vector<double> gcols(static_cast<size_t>(patch * width), 0.0);
                       // gcols += W^T * gout
                       kern::mm_tn_acc(wdat, gout.data(), gcols.data(), patch, oc, width);
                       col2im_acc(gcols.data(), c, h, wd, kh, kw, pad, oh, ow, rows,
                                  gx + r0 * c * h * wd);
                     }
                   }
                 });
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_nchw(x, "batchnorm2d");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (n < 2)
    throw ContractError("batchnorm2d: training-mode statistics need batch size >= 2, got " +
                        std::to_string(n));
  if (gamma.numel() != c || beta.numel() != c)
    throw ShapeError("batchnorm2d: gamma/beta must have one scalar per channel");

  const int64_t plane = h * w;
  const int64_t count = n * plane;
  const double* xd = x.data().data();
  std::vector<double> mean(static_cast<size_t>(c), 0.0), inv_std(static_cast<size_t>(c), 0.0);
  for (int64_t ci = 0; ci < c; ++ci) {
    double acc = 0.0;
    for (int64_t r = 0; r < n; ++r) {
      const double* p = xd + (r * c + ci) * plane;
      for (int64_t i = 0; i < plane; ++i) acc += p[i];
    }
    mean[static_cast<size_t>(ci)] = acc / static_cast<double>(count);
  }
  for (int64_t ci = 0; ci < c; ++ci) {
    double acc = 0.0;
    const double mu = mean[static_cast<size_t>(ci)];
    for (int64_t r = 0; r < n; ++r) {
      const double* p = xd + (r * c + ci) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        const double d = p[i] - mu;
        acc += d * d;
      }
    }
    const double var = acc / static_cast<double>(count);
    if (!std::isfinite(var)) throw NumericError("batchnorm2d: non-finite variance");
    inv_std[static_cast<size_t>(ci)] = 1.0 / std::sqrt(var + eps);
  }

  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(x.numel()));
  std::vector<double> out(static_cast<size_t>(x.numel()));
  const double* gd = gamma.data().data();
  const double* bd = beta.data().data();
  for (int64_t r = 0; r < n; ++r)
    for (int64_t ci = 0; ci < c; ++ci) {
      const double mu = mean[static_cast<size_t>(ci)];
      const double is = inv_std[static_cast<size_t>(ci)];
      const double g = gd[ci], b = bd[ci];
      const double* p = xd + (r * c + ci) * plane;
      double* xh = xhat->data() + (r * c + ci) * plane;
      double* o = out.data() + (r * c + ci) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        xh[i] = (p[i] - mu) * is;
        o[i] = g * xh[i] + b;
      }
    }

  auto inv_std_sp = std::make_shared<std::vector<double>>(std::move(inv_std));
  return make_op(x.shape(), std::move(out), "batchnorm2d", {x, gamma, beta},
                 [xhat, inv_std_sp, n, c, plane, count](Node& self) {
                   const double* gd = self.inputs[1]->value.data();
                   const bool need_x = self.inputs[0]->requires_grad;
                   double* dgamma =
                       self.inputs[1]->requires_grad ? self.inputs[1]->grad_data() : nullptr;
                   double* dbeta =
                       self.inputs[2]->requires_grad ? self.inputs[2]->grad_data() : nullptr;
                   double* dx = need_x ? self.inputs[0]->grad_data() : nullptr;
                   for (int64_t ci = 0; ci < c; ++ci) {
                     double sum_dy = 0.0, sum_dy_xhat = 0.0;
                     for (int64_t r = 0; r < n; ++r) {
                       const double* gy = self.grad.data() + (r * c + ci) * plane;
                       const double* xh = xhat->data() + (r * c + ci) * plane;
                       for (int64_t i = 0; i < plane; ++i) {
                         sum_dy += gy[i];
                         sum_dy_xhat += gy[i] * xh[i];
                       }
                     }
                     if (dbeta) dbeta[ci] += sum_dy;
                     if (dgamma) dgamma[ci] += sum_dy_xhat;
                     if (need_x) {
                       const double is = (*inv_std_sp)[static_cast<size_t>(ci)];
                       const double scl = gd[ci] * is;
                       const double mean_dy = sum_dy / static_cast<double>(count);
                       const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(count);
                       for (int64_t r = 0; r < n; ++r) {
                         const double* gy = self.grad.data() + (r * c + ci) * plane;
                         const double* xh = xhat->data() + (r * c + ci) * plane;
                         double* gx = dx + (r * c + ci) * plane;
                         for (int64_t i = 0; i < plane; ++i)
                           gx[i] += scl * (gy[i] - mean_dy - xh[i] * mean_dy_xhat);
                       }
                     }
                   }
                 });
}

Tensor batchnorm2d_fixed(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         const std::vector<double>& mean, const std::vector<double>& var,
                         double eps) {
  require_nchw(x, "batchnorm2d_fixed");
  const int64_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (gamma.numel() != c || beta.numel() != c || static_cast<int64_t>(mean.size()) != c ||
      static_cast<int64_t>(var.size()) != c)
    throw ShapeError("batchnorm2d_fixed: per-channel parameter length mismatch");
  std::vector<double> scl(static_cast<size_t>(c)), shift(static_cast<size_t>(c));
  const double* gd = gamma.data().data();
  const double* bd = beta.data().data();
  for (int64_t ci = 0; ci < c; ++ci) {
    const double is = 1.0 / std::sqrt(var[static_cast<size_t>(ci)] + eps);
    scl[static_cast<size_t>(ci)] = gd[ci] * is;
    shift[static_cast<size_t>(ci)] = bd[ci] - gd[ci] * is * mean[static_cast<size_t>(ci)];
  }
  std::vector<double> out(static_cast<size_t>(x.numel()));
  const double* xd = x.data().data();
  for (int64_t r = 0; r < n; ++r)
    for (int64_t ci = 0; ci < c; ++ci) {
      const double s = scl[static_cast<size_t>(ci)], sh = shift[static_cast<size_t>(ci)];
      const double* p = xd + (r * c + ci) * plane;
      double* o = out.data() + (r * c + ci) * plane;
      for (int64_t i = 0; i < plane; ++i) o[i] = s * p[i] + sh;
    }
  auto scl_sp = std::make_shared<std::vector<double>>(std::move(scl));
  return make_op(x.shape(), std::move(out), "batchnorm2d_fixed", {x, gamma, beta},
                 [scl_sp, n, c, plane](Node& self) {
                   if (!self.inputs[0]->requires_grad) return;
                   double* dx = self.inputs[0]->grad_data();
                   for (int64_t r = 0; r < n; ++r)
                     for (int64_t ci = 0; ci < c; ++ci) {
                       const double s = (*scl_sp)[static_cast<size_t>(ci)];
                       const double* gy = self.grad.data() + (r * c + ci) * plane;
                       double* gx = dx + (r * c + ci) * plane;
                       for (int64_t i = 0; i < plane; ++i) gx[i] += s * gy[i];
                     }
                 });
}

Tensor avgpool2d(const Tensor& x, int k) {
  require_nchw(x, "avgpool2d");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k < 1 || h % k != 0 || w % k != 0)
    throw ShapeError("avgpool2d: window " + std::to_string(k) + " must divide " +
                     shape_str(x.shape()));
  const int64_t oh = h / k, ow = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  std::vector<double> out(static_cast<size_t>(n * c * oh * ow), 0.0);
  const double* xd = x.data().data();
  for (int64_t p = 0; p < n * c; ++p) {
    const double* src = xd + p * h * w;
    double* dst = out.data() + p * oh * ow;
    for (int64_t oi = 0; oi < oh; ++oi)
      for (int64_t oj = 0; oj < ow; ++oj) {
        double acc = 0.0;
        for (int64_t ki = 0; ki < k; ++ki)
          for (int64_t kj = 0; kj < k; ++kj) acc += src[(oi * k + ki) * w + oj * k + kj];
        dst[oi * ow + oj] = acc * inv;
      }
  }
  return make_op({n, c, oh, ow}, std::move(out), "avgpool2d", {x},
                 [n, c, h, w, k, oh, ow, inv](Node& self) {
                   double* dx = self.inputs[0]->grad_data();
                   for (int64_t p = 0; p < n * c; ++p) {
                     const double* gy = self.grad.data() + p * oh * ow;
                     double* gx = dx + p * h * w;
                     for (int64_t oi = 0; oi < oh; ++oi)
                       for (int64_t oj = 0; oj < ow; ++oj) {
                         const double g = gy[oi * ow + oj] * inv;
                         for (int64_t ki = 0; ki < k; ++ki)
                           for (int64_t kj = 0; kj < k; ++kj)
                             gx[(oi * k + ki) * w + oj * k + kj] += g;
                       }
                   }
                 });
}

Tensor gather_sample_elems(const Tensor& x, Shape out_sample_shape, std::vector<int64_t> map) {
  if (x.ndim() < 2) throw ShapeError("gather_sample_elems: needs a batch dimension");
  const int64_t n = x.dim(0);
  const int64_t in_elems = x.numel() / n;
  const int64_t out_elems = shape_numel(out_sample_shape);
  if (static_cast<int64_t>(map.size()) != out_elems)
    throw ShapeError("gather_sample_elems: map length does not match output sample shape");
  for (int64_t idx : map)
    if (idx < 0 || idx >= in_elems)
      throw ContractError("gather_sample_elems: map index out of range");
  Shape shape = {n};
  shape.insert(shape.end(), out_sample_shape.begin(), out_sample_shape.end());
  std::vector<double> out(static_cast<size_t>(n * out_elems));
  const double* xd = x.data().data();
  for (int64_t r = 0; r < n; ++r) {
    const double* src = xd + r * in_elems;
    double* dst = out.data() + r * out_elems;
    for (int64_t t = 0; t < out_elems; ++t) dst[t] = src[map[static_cast<size_t>(t)]];
  }
  auto map_sp = std::make_shared<std::vector<int64_t>>(std::move(map));
  return make_op(std::move(shape), std::move(out), "gather", {x},
                 [map_sp, n, in_elems, out_elems](Node& self) {
                   double* dx = self.inputs[0]->grad_data();
                   for (int64_t r = 0; r < n; ++r) {
                     const double* gy = self.grad.data() + r * out_elems;
                     double* gx = dx + r * in_elems;
                     for (int64_t t = 0; t < out_elems; ++t)
                       gx[(*map_sp)[static_cast<size_t>(t)]] += gy[t];
                   }
                 });
}

namespace {

// Source index/weight table for one axis of a bilinear resize
// (half-pixel-centers convention; integer upscales preserve the mean).
struct ResizeAxis {
  std::vector<int64_t> lo, hi;
  std::vector<double> w_lo, w_hi;
};

ResizeAxis resize_axis(int64_t in, int64_t out) {
  ResizeAxis ax;
  ax.lo.resize(static_cast<size_t>(out));
  ax.hi.resize(static_cast<size_t>(out));
  ax.w_lo.resize(static_cast<size_t>(out));
  ax.w_hi.resize(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::max(0.0, std::min(src, static_cast<double>(in - 1)));
    const auto lo = static_cast<int64_t>(std::floor(src));
    const int64_t hi = std::min(lo + 1, in - 1);
    const double t = src - static_cast<double>(lo);
    ax.lo[static_cast<size_t>(i)] = lo;
    ax.hi[static_cast<size_t>(i)] = hi;
    ax.w_lo[static_cast<size_t>(i)] = 1.0 - t;
    ax.w_hi[static_cast<size_t>(i)] = t;
  }
  return ax;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w) {
  require_nchw(x, "bilinear_resize");
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: empty output");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto ay = std::make_shared<ResizeAxis>(resize_axis(h, out_h));
  auto axx = std::make_shared<ResizeAxis>(resize_axis(w, out_w));
  std::vector<double> out(static_cast<size_t>(n * c * out_h * out_w));
  const double* xd = x.data().data();
  for (int64_t p = 0; p < n * c; ++p) {
    const double* src = xd + p * h * w;
    double* dst = out.data() + p * out_h * out_w;
    for (int64_t i = 0; i < out_h; ++i) {
      const int64_t y0 = ay->lo[static_cast<size_t>(i)], y1 = ay->hi[static_cast<size_t>(i)];
      const double wy0 = ay->w_lo[static_cast<size_t>(i)], wy1 = ay->w_hi[static_cast<size_t>(i)];
      for (int64_t j = 0; j < out_w; ++j) {
        const int64_t x0 = axx->lo[static_cast<size_t>(j)], x1 = axx->hi[static_cast<size_t>(j)];
        const double wx0 = axx->w_lo[static_cast<size_t>(j)],
                     wx1 = axx->w_hi[static_cast<size_t>(j)];
        dst[i * out_w + j] = wy0 * (wx0 * src[y0 * w + x0] + wx1 * src[y0 * w + x1]) +
                             wy1 * (wx0 * src[y1 * w + x0] + wx1 * src[y1 * w + x1]);
      }
    }
  }
  return make_op({n, c, out_h, out_w}, std::move(out), "bilinear_resize", {x},
                 [ay, axx, n, c, h, w, out_h, out_w](Node& self) {
                   double* dx = self.inputs[0]->grad_data();
                   for (int64_t p = 0; p < n * c; ++p) {
                     const double* gy = self.grad.data() + p * out_h * out_w;
                     double* gx = dx + p * h * w;
                     for (int64_t i = 0; i < out_h; ++i) {
                       const int64_t y0 = ay->lo[static_cast<size_t>(i)],
                                     y1 = ay->hi[static_cast<size_t>(i)];
                       const double wy0 = ay->w_lo[static_cast<size_t>(i)],
                                    wy1 = ay->w_hi[static_cast<size_t>(i)];
                       for (int64_t j = 0; j < out_w; ++j) {
                         const int64_t x0 = axx->lo[static_cast<size_t>(j)],
                                       x1 = axx->hi[static_cast<size_t>(j)];
                         const double wx0 = axx->w_lo[static_cast<size_t>(j)],
                                      wx1 = axx->w_hi[static_cast<size_t>(j)];
                         const double g = gy[i * out_w + j];
                         gx[y0 * w + x0] += wy0 * wx0 * g;
                         gx[y0 * w + x1] += wy0 * wx1 * g;
                         gx[y1 * w + x0] += wy1 * wx0 * g;
                         gx[y1 * w + x1] += wy1 * wx1 * g;
                       }
                     }
                   }
                 });
}

Tensor upsample_bilinear(const Tensor& x, int s) {
  require_nchw(x, "upsample_bilinear");
  if (s < 1) throw ShapeError("upsample_bilinear: scale must be >= 1");
  if (s == 1) return reshape(x, x.shape());
  return bilinear_resize(x, x.dim(2) * s, x.dim(3) * s);
}

Tensor downsample_avg(const Tensor& x, int s) {
  require_nchw(x, "downsample_avg");
  if (s < 1) throw ShapeError("downsample_avg: scale must be >= 1");
  if (s == 1) return reshape(x, x.shape());
  return avgpool2d(x, s);
}

Tensor softmax_xent(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2) throw ShapeError("softmax_xent: expects [n,classes]");
  const int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != n)
    throw ShapeError("softmax_xent: one label per row required");
  for (int lbl : labels)
    if (lbl < 0 || lbl >= k) throw ContractError("softmax_xent: label out of range");

  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(n * k));
  const double* ld = logits.data().data();
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double* row = ld + i * k;
    double mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double logz = std::log(z) + mx;
    loss += logz - row[labels[static_cast<size_t>(i)]];
    double* prow = probs->data() + i * k;
    for (int64_t j = 0; j < k; ++j) prow[j] = std::exp(row[j] - logz);
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw NumericError("softmax_xent: non-finite loss");

  auto labels_sp = std::make_shared<std::vector<int>>(labels);
  return make_op({}, {loss}, "softmax_xent", {logits}, [probs, labels_sp, n, k](Node& self) {
    const double g = self.grad[0] / static_cast<double>(n);
    double* dst = self.inputs[0]->grad_data();
    for (int64_t i = 0; i < n; ++i) {
      const double* prow = probs->data() + i * k;
      double* drow = dst + i * k;
      for (int64_t j = 0; j < k; ++j) drow[j] += g * prow[j];
      drow[(*labels_sp)[static_cast<size_t>(i)]] -= g;
    }
  });
}

}  // namespace ssdd
