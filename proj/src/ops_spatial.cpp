#include <algorithm>
#include <Eigen/Core>
#include <cmath>

#include "semdisc/autodiff.hpp"
#include "semdisc/error.hpp"

namespace semdisc::ad {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

void require_rank4(std::string_view op, const Tensor& t) {
  if (t.rank() != 4) throw ShapeError(std::string(op) + ": expected NCHW tensor, got " + to_string(t.shape()));
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw, stride, pad, oh, ow;

  std::size_t rows() const { return cin * kh * kw; }
  std::size_t cols() const { return n * oh * ow; }
};

// Valid output-column range [lo, hi) for kernel offset k along one axis.
std::pair<std::size_t, std::size_t> valid_range(std::size_t k, std::size_t stride, std::size_t pad, std::size_t in,
                                                std::size_t out) {
  std::size_t lo = 0;
  if (k < pad) lo = (pad - k + stride - 1) / stride;
  std::size_t hi = 0;
  if (in + pad > k) hi = std::min(out, (in + pad - k - 1) / stride + 1);
  return {std::min(lo, hi), hi};
}

// Reused per-thread buffers; contents are not preserved between calls.
double* scratch(int slot, std::size_t size) {
  thread_local std::vector<double> buffers[2];
  auto& b = buffers[slot];
  if (b.size() < size) b.resize(size);
  return b.data();
}

// col[(ci*kh + ky)*kw + kx, (b*oh + oy)*ow + ox]
void im2col(const ConvGeometry& g, std::span<const double> x, double* col) {
  const std::size_t ncols = g.cols();
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      const auto [ylo, yhi] = valid_range(ky, g.stride, g.pad, g.h, g.oh);
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const auto [xlo, xhi] = valid_range(kx, g.stride, g.pad, g.w, g.ow);
        double* row = col + ((ci * g.kh + ky) * g.kw + kx) * ncols;
        for (std::size_t b = 0; b < g.n; ++b) {
          const double* plane = x.data() + (b * g.cin + ci) * g.h * g.w;
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            double* dst = row + (b * g.oh + oy) * g.ow;
            if (oy < ylo || oy >= yhi) {
              std::fill(dst, dst + g.ow, 0.0);
              continue;
            }
            const double* src = plane + (oy * g.stride + ky - g.pad) * g.w;
            std::fill(dst, dst + xlo, 0.0);
            if (g.stride == 1) {
              const double* s = src + (xlo + kx - g.pad);
              std::copy(s, s + (xhi - xlo), dst + xlo);
            } else {
              for (std::size_t ox = xlo; ox < xhi; ++ox) dst[ox] = src[ox * g.stride + kx - g.pad];
            }
            std::fill(dst + xhi, dst + g.ow, 0.0);
          }
        }
      }
    }
}

void col2im(const ConvGeometry& g, const double* col, std::span<double> gx) {
  const std::size_t ncols = g.cols();
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      const auto [ylo, yhi] = valid_range(ky, g.stride, g.pad, g.h, g.oh);
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const auto [xlo, xhi] = valid_range(kx, g.stride, g.pad, g.w, g.ow);
        const double* row = col + ((ci * g.kh + ky) * g.kw + kx) * ncols;
        for (std::size_t b = 0; b < g.n; ++b) {
          double* plane = gx.data() + (b * g.cin + ci) * g.h * g.w;
          for (std::size_t oy = ylo; oy < yhi; ++oy) {
            const double* src = row + (b * g.oh + oy) * g.ow;
            double* dst = plane + (oy * g.stride + ky - g.pad) * g.w;
            for (std::size_t ox = xlo; ox < xhi; ++ox) dst[ox * g.stride + kx - g.pad] += src[ox];
          }
        }
      }
    }
}

}  // namespace

Var conv2d(Var x, Var weight, std::optional<Var> bias, Conv2dAttrs attrs) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank4("conv2d", xv);
  require_rank4("conv2d", wv);
  if (attrs.stride == 0) throw ValidationError("conv2d: stride must be positive");
  if (wv.dim(1) != xv.dim(1)) {
    throw ShapeError("conv2d: input " + to_string(xv.shape()) + " incompatible with weight " + to_string(wv.shape()));
  }
  if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != wv.dim(0))) {
    throw ShapeError("conv2d: bias " + to_string(bias->value().shape()) + " incompatible with weight " +
                     to_string(wv.shape()));
  }
  ConvGeometry g{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2), wv.dim(3), attrs.stride, attrs.pad,
                 0, 0};
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    throw ShapeError("conv2d: kernel " + to_string(wv.shape()) + " larger than padded input " + to_string(xv.shape()));
  }
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;

  double* col = scratch(0, g.rows() * g.cols());
  im2col(g, xv.data(), col);
  RowMatrix out_mat(g.cout, g.cols());
  out_mat.noalias() = ConstMapMatrix(wv.data().data(), g.cout, g.rows()) * ConstMapMatrix(col, g.rows(), g.cols());

  Tensor out({g.n, g.cout, g.oh, g.ow});
  const std::size_t plane = g.oh * g.ow;
  for (std::size_t b = 0; b < g.n; ++b)
    for (std::size_t co = 0; co < g.cout; ++co) {
      const double shift = bias ? bias->value()[co] : 0.0;
      const double* src = out_mat.data() + co * g.cols() + b * plane;
      double* dst = out.data().data() + (b * g.cout + co) * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + shift;
    }

  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return x.tape().record("conv2d", std::move(out), std::move(inputs), [g](BackwardContext& ctx) {
    const std::size_t plane = g.oh * g.ow;
    const Tensor& gout = ctx.grad_output();
    RowMatrix gmat(g.cout, g.cols());
    for (std::size_t b = 0; b < g.n; ++b)
      for (std::size_t co = 0; co < g.cout; ++co) {
        const double* src = gout.data().data() + (b * g.cout + co) * plane;
        std::copy(src, src + plane, gmat.data() + co * g.cols() + b * plane);
      }
    Tensor* gx = ctx.grad_input(0);
    Tensor* gw = ctx.grad_input(1);
    Tensor* gb = ctx.inputs_count() > 2 ? ctx.grad_input(2) : nullptr;
    if (gw) {
      double* col = scratch(0, g.rows() * g.cols());
      im2col(g, ctx.input(0).data(), col);
      MapMatrix(gw->data().data(), g.cout, g.rows()).noalias() +=
          gmat * ConstMapMatrix(col, g.rows(), g.cols()).transpose();
    }
    if (gx) {
      double* col = scratch(1, g.rows() * g.cols());
      MapMatrix(col, g.rows(), g.cols()).noalias() =
          ConstMapMatrix(ctx.input(1).data().data(), g.cout, g.rows()).transpose() * gmat;
      col2im(g, col, gx->data());
    }
    if (gb) {
      for (std::size_t co = 0; co < g.cout; ++co) (*gb)[co] += gmat.row(co).sum();
    }
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const Tensor& first = xs.front().value();
  require_rank4("concat", first);
  std::size_t channels = 0;
  for (const Var& v : xs) {
    const Tensor& t = v.value();
    require_rank4("concat", t);
    if (t.dim(0) != first.dim(0) || t.dim(2) != first.dim(2) || t.dim(3) != first.dim(3)) {
      throw ShapeError("concat: " + to_string(t.shape()) + " incompatible with " + to_string(first.shape()));
    }
    channels += t.dim(1);
  }
  const std::size_t n = first.dim(0), hw = first.dim(2) * first.dim(3);
  Tensor out({n, channels, first.dim(2), first.dim(3)});
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& v : xs) {
    const Tensor& t = v.value();
    offsets.push_back(offset);
    for (std::size_t b = 0; b < n; ++b) {
      const double* src = t.data().data() + b * t.dim(1) * hw;
      std::copy(src, src + t.dim(1) * hw, out.data().data() + (b * channels + offset) * hw);
    }
    offset += t.dim(1);
  }
  return xs.front().tape().record("concat", std::move(out), xs, [offsets, n, hw, channels](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      Tensor* gi = ctx.grad_input(i);
      if (!gi) continue;
      const std::size_t c = ctx.input(i).dim(1);
      for (std::size_t b = 0; b < n; ++b) {
        const double* src = g.data().data() + (b * channels + offsets[i]) * hw;
        double* dst = gi->data().data() + b * c * hw;
        for (std::size_t k = 0; k < c * hw; ++k) dst[k] += src[k];
      }
    }
  });
}

Var slice_channels(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  require_rank4("slice_channels", xv);
  if (begin + count > xv.dim(1) || count == 0) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + to_string(xv.shape()));
  }
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor out({n, count, xv.dim(2), xv.dim(3)});
  for (std::size_t b = 0; b < n; ++b) {
    const double* src = xv.data().data() + (b * c + begin) * hw;
    std::copy(src, src + count * hw, out.data().data() + b * count * hw);
  }
  return x.tape().record("slice_channels", std::move(out), {x}, [n, c, hw, begin, count](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    for (std::size_t b = 0; b < n; ++b) {
      const double* src = g.data().data() + b * count * hw;
      double* dst = gx->data().data() + (b * c + begin) * hw;
      for (std::size_t k = 0; k < count * hw; ++k) dst[k] += src[k];
    }
  });
}

Var nearest_upsample(Var x, std::size_t fh, std::size_t fw) {
  const Tensor& xv = x.value();
  require_rank4("nearest_upsample", xv);
  if (fh == 0 || fw == 0) throw ValidationError("nearest_upsample: factor must be positive");
  const std::size_t nc = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t oh = h * fh, ow = w * fw;
  Tensor out({xv.dim(0), xv.dim(1), oh, ow});
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) out[(p * oh + y) * ow + xx] = xv[(p * h + y / fh) * w + xx / fw];
  return x.tape().record("nearest_upsample", std::move(out), {x}, [nc, h, w, fh, fw](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    const std::size_t oh = h * fh, ow = w * fw;
    for (std::size_t p = 0; p < nc; ++p)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) (*gx)[(p * h + y / fh) * w + xx / fw] += g[(p * oh + y) * ow + xx];
  });
}

namespace {

void check_pool(std::string_view op, const Tensor& xv, std::size_t f) {
  require_rank4(op, xv);
  if (f == 0 || xv.dim(2) % f != 0 || xv.dim(3) % f != 0) {
    throw ShapeError(std::string(op) + ": factor " + std::to_string(f) + " does not divide " + to_string(xv.shape()));
  }
}

}  // namespace

Var avg_pool(Var x, std::size_t f) {
  const Tensor& xv = x.value();
  check_pool("avg_pool", xv, f);
  const std::size_t nc = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3), oh = h / f, ow = w / f;
  const double inv = 1.0 / static_cast<double>(f * f);
  Tensor out({xv.dim(0), xv.dim(1), oh, ow});
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) out[(p * oh + y / f) * ow + xx / f] += xv[(p * h + y) * w + xx] * inv;
  return x.tape().record("avg_pool", std::move(out), {x}, [nc, h, w, f, inv](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    const std::size_t oh = h / f, ow = w / f;
    for (std::size_t p = 0; p < nc; ++p)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) (*gx)[(p * h + y) * w + xx] += g[(p * oh + y / f) * ow + xx / f] * inv;
  });
}

Var max_pool(Var x, std::size_t f) {
  const Tensor& xv = x.value();
  check_pool("max_pool", xv, f);
  const std::size_t nc = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3), oh = h / f, ow = w / f;
  Tensor out({xv.dim(0), xv.dim(1), oh, ow});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (p * h + oy * f) * w + ox * f;
        for (std::size_t dy = 0; dy < f; ++dy)
          for (std::size_t dx = 0; dx < f; ++dx) {
            const std::size_t i = (p * h + oy * f + dy) * w + ox * f + dx;
            if (xv[i] > xv[best]) best = i;
          }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = xv[best];
        argmax[o] = best;
      }
  return x.tape().record("max_pool", std::move(out), {x}, [argmax = std::move(argmax)](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    for (std::size_t o = 0; o < argmax.size(); ++o) (*gx)[argmax[o]] += g[o];
  });
}

Var affine_channel(Var x, Var scale, Var shift) {
  const Tensor& xv = x.value();
  require_rank4("affine_channel", xv);
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (scale.value().shape() != Shape{c} || shift.value().shape() != Shape{c}) {
    throw ShapeError("affine_channel: input " + to_string(xv.shape()) + " with scale " +
                     to_string(scale.value().shape()) + " and shift " + to_string(shift.value().shape()));
  }
  Tensor out(xv.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t p = 0; p < hw; ++p) {
        const std::size_t i = (b * c + k) * hw + p;
        out[i] = xv[i] * scale.value()[k] + shift.value()[k];
      }
  return x.tape().record("affine_channel", std::move(out), {x, scale, shift}, [n, c, hw](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    const Tensor& xv = ctx.input(0);
    const Tensor& sv = ctx.input(1);
    Tensor* gx = ctx.grad_input(0);
    Tensor* gs = ctx.grad_input(1);
    Tensor* gt = ctx.grad_input(2);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t k = 0; k < c; ++k)
        for (std::size_t p = 0; p < hw; ++p) {
          const std::size_t i = (b * c + k) * hw + p;
          if (gx) (*gx)[i] += g[i] * sv[k];
          if (gs) (*gs)[k] += g[i] * xv[i];
          if (gt) (*gt)[k] += g[i];
        }
  });
}

Var instance_norm(Var x, double eps) {
  const Tensor& xv = x.value();
  require_rank4("instance_norm", xv);
  const std::size_t planes = xv.dim(0) * xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor out(xv.shape());
  std::vector<double> inv_std(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = xv.data().data() + p * hw;
    double mu = 0.0;
    for (std::size_t i = 0; i < hw; ++i) mu += src[i];
    mu /= static_cast<double>(hw);
    double var = 0.0;
    for (std::size_t i = 0; i < hw; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(hw);
    inv_std[p] = 1.0 / std::sqrt(var + eps);
    double* dst = out.data().data() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) dst[i] = (src[i] - mu) * inv_std[p];
  }
  return x.tape().record("instance_norm", std::move(out), {x},
                         [planes, hw, inv_std = std::move(inv_std)](BackwardContext& ctx) {
                           Tensor* gx = ctx.grad_input(0);
                           if (!gx) return;
                           const Tensor& g = ctx.grad_output();
                           const Tensor& y = ctx.output();
                           const double inv_n = 1.0 / static_cast<double>(hw);
                           for (std::size_t p = 0; p < planes; ++p) {
                             const double* gp = g.data().data() + p * hw;
                             const double* yp = y.data().data() + p * hw;
                             double g_mean = 0.0, gy_mean = 0.0;
                             for (std::size_t i = 0; i < hw; ++i) {
                               g_mean += gp[i];
                               gy_mean += gp[i] * yp[i];
                             }
                             g_mean *= inv_n;
                             gy_mean *= inv_n;
                             double* dst = gx->data().data() + p * hw;
                             for (std::size_t i = 0; i < hw; ++i)
                               dst[i] += inv_std[p] * (gp[i] - g_mean - yp[i] * gy_mean);
                           }
                         });
}

}  // namespace semdisc::ad
