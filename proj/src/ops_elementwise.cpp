#include <array>
#include <cmath>

#include "semdisc/autodiff.hpp"
#include "semdisc/error.hpp"

namespace semdisc::ad {
namespace {

template <class F, class D>
Var unary(std::string_view op, Var x, F forward, D deriv) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  auto o = out.data();
  auto in = xv.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = forward(in[i]);
  return x.tape().record(op, std::move(out), {x}, [deriv](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    auto g = ctx.grad_output().data();
    auto in = ctx.input(0).data();
    auto y = ctx.output().data();
    auto dst = gx->data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * deriv(in[i], y[i]);
  });
}

// Rank-equal broadcasting, padded internally to four axes.
struct Broadcast {
  Shape out;
  std::array<std::size_t, 4> extent{1, 1, 1, 1};
  std::array<std::size_t, 4> a_stride{0, 0, 0, 0};
  std::array<std::size_t, 4> b_stride{0, 0, 0, 0};

  Broadcast(std::string_view op, const Shape& a, const Shape& b) {
    if (a.size() != b.size() || a.size() > 4) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out.resize(a.size());
    const std::size_t pad = 4 - a.size();
    std::size_t sa = 1, sb = 1;
    for (std::size_t i = a.size(); i-- > 0;) {
      if (a[i] != b[i] && a[i] != 1 && b[i] != 1) {
        throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " + to_string(b));
      }
      out[i] = std::max(a[i], b[i]);
      extent[pad + i] = out[i];
      a_stride[pad + i] = a[i] == 1 ? 0 : sa;
      b_stride[pad + i] = b[i] == 1 ? 0 : sb;
      sa *= a[i];
      sb *= b[i];
    }
  }

  template <class F>
  void for_each(F f) const {
    std::size_t o = 0;
    for (std::size_t i0 = 0; i0 < extent[0]; ++i0)
      for (std::size_t i1 = 0; i1 < extent[1]; ++i1)
        for (std::size_t i2 = 0; i2 < extent[2]; ++i2)
          for (std::size_t i3 = 0; i3 < extent[3]; ++i3, ++o) {
            const std::size_t ia = i0 * a_stride[0] + i1 * a_stride[1] + i2 * a_stride[2] + i3 * a_stride[3];
            const std::size_t ib = i0 * b_stride[0] + i1 * b_stride[1] + i2 * b_stride[2] + i3 * b_stride[3];
            f(o, ia, ib);
          }
  }
};

enum class BinaryKind { kAdd, kSub, kMul };

Var binary(std::string_view op, BinaryKind kind, Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  auto pa = av.data();
  auto pb = bv.data();
  Tensor out;
  if (av.shape() == bv.shape()) {
    out = Tensor(av.shape());
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
      o[i] = kind == BinaryKind::kAdd ? pa[i] + pb[i] : kind == BinaryKind::kSub ? pa[i] - pb[i] : pa[i] * pb[i];
    }
  } else {
    Broadcast bc(op, av.shape(), bv.shape());
    out = Tensor(bc.out);
    auto o = out.data();
    bc.for_each([&](std::size_t io, std::size_t ia, std::size_t ib) {
      o[io] = kind == BinaryKind::kAdd ? pa[ia] + pb[ib] : kind == BinaryKind::kSub ? pa[ia] - pb[ib] : pa[ia] * pb[ib];
    });
  }
  std::string name(op);
  return a.tape().record(op, std::move(out), {a, b}, [kind, name](BackwardContext& ctx) {
    Tensor* ga = ctx.grad_input(0);
    Tensor* gb = ctx.grad_input(1);
    const Tensor& av = ctx.input(0);
    const Tensor& bv = ctx.input(1);
    auto g = ctx.grad_output().data();
    auto pa = av.data();
    auto pb = bv.data();
    auto accumulate = [&](std::size_t io, std::size_t ia, std::size_t ib) {
      if (ga) {
        const double d = kind == BinaryKind::kMul ? pb[ib] : 1.0;
        ga->data()[ia] += g[io] * d;
      }
      if (gb) {
        const double d = kind == BinaryKind::kMul ? pa[ia] : kind == BinaryKind::kSub ? -1.0 : 1.0;
        gb->data()[ib] += g[io] * d;
      }
    };
    if (av.shape() == bv.shape()) {
      for (std::size_t i = 0; i < g.size(); ++i) accumulate(i, i, i);
    } else {
      Broadcast(name, av.shape(), bv.shape()).for_each(accumulate);
    }
  });
}

std::array<bool, 8> axis_mask(std::string_view op, const Shape& shape, const std::vector<std::size_t>& axes) {
  std::array<bool, 8> reduce{};
  if (shape.size() > reduce.size()) throw ShapeError(std::string(op) + ": rank too large");
  for (auto ax : axes) {
    if (ax >= shape.size()) {
      throw ShapeError(std::string(op) + ": axis " + std::to_string(ax) + " out of range for " + to_string(shape));
    }
    reduce[ax] = true;
  }
  return reduce;
}

// Maps every input flat index to its output index under a keepdim reduction.
std::vector<std::size_t> reduction_map(const Shape& in, const std::array<bool, 8>& reduce, Shape& out) {
  out = in;
  for (std::size_t i = 0; i < in.size(); ++i)
    if (reduce[i]) out[i] = 1;
  std::vector<std::size_t> map(numel(in));
  std::vector<std::size_t> idx(in.size(), 0);
  for (std::size_t flat = 0; flat < map.size(); ++flat) {
    std::size_t o = 0;
    for (std::size_t i = 0; i < in.size(); ++i) o = o * out[i] + (reduce[i] ? 0 : idx[i]);
    map[flat] = o;
    for (std::size_t i = in.size(); i-- > 0;) {
      if (++idx[i] < in[i]) break;
      idx[i] = 0;
    }
  }
  return map;
}

}  // namespace

Var relu(Var x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var x, double slope) {
  return unary("leaky_relu", x, [slope](double v) { return v > 0.0 ? v : slope * v; },
               [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var tanh(Var x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary("sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var log(Var x) {
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var exp(Var x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var abs(Var x) {
  return unary("abs", x, [](double v) { return std::fabs(v); },
               [](double v, double) { return v > 0.0 ? 1.0 : v < 0.0 ? -1.0 : 0.0; });
}

Var softplus(Var x) {
  return unary("softplus", x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v))); },
               [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Var scale(Var x, double factor) {
  return unary("scale", x, [factor](double v) { return factor * v; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var x, double offset) {
  return unary("add_scalar", x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Var add(Var a, Var b) { return binary("add", BinaryKind::kAdd, a, b); }
Var sub(Var a, Var b) { return binary("sub", BinaryKind::kSub, a, b); }
Var mul(Var a, Var b) { return binary("mul", BinaryKind::kMul, a, b); }

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.tape().record("sum", Tensor::scalar(total), {x}, [](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    const double g = ctx.grad_output()[0];
    for (double& v : gx->data()) v += g;
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), 1.0 / n);
}

Var sum(Var x, const std::vector<std::size_t>& axes) {
  const Tensor& xv = x.value();
  const auto reduce = axis_mask("sum", xv.shape(), axes);
  Shape out_shape;
  auto map = reduction_map(xv.shape(), reduce, out_shape);
  Tensor out(out_shape);
  auto in = xv.data();
  for (std::size_t i = 0; i < map.size(); ++i) out[map[i]] += in[i];
  return x.tape().record("sum_axes", std::move(out), {x}, [map = std::move(map)](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    auto g = ctx.grad_output().data();
    auto dst = gx->data();
    for (std::size_t i = 0; i < map.size(); ++i) dst[i] += g[map[i]];
  });
}

Var mean(Var x, const std::vector<std::size_t>& axes) {
  std::size_t count = 1;
  for (auto ax : axes) {
    if (ax >= x.value().rank()) throw ShapeError("mean: axis out of range for " + to_string(x.shape()));
    count *= x.value().dim(ax);
  }
  if (count == 0) throw ShapeError("mean: empty reduction");
  return scale(sum(x, axes), 1.0 / static_cast<double>(count));
}

Var softmax_cross_entropy(Var logits, const Tensor& target) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 4 || lv.shape() != target.shape()) {
    throw ShapeError("softmax_cross_entropy: logits " + to_string(lv.shape()) + " vs target " +
                     to_string(target.shape()));
  }
  const std::size_t n = lv.dim(0), c = lv.dim(1), hw = lv.dim(2) * lv.dim(3);
  Tensor out({n, 1, lv.dim(2), lv.dim(3)});
  Tensor probs(lv.shape());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      double mx = -INFINITY;
      for (std::size_t k = 0; k < c; ++k) mx = std::max(mx, lv[(b * c + k) * hw + p]);
      double z = 0.0;
      for (std::size_t k = 0; k < c; ++k) z += std::exp(lv[(b * c + k) * hw + p] - mx);
      const double log_z = mx + std::log(z);
      double loss = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        const std::size_t i = (b * c + k) * hw + p;
        probs[i] = std::exp(lv[i] - log_z);
        loss -= target[i] * (lv[i] - log_z);
      }
      out[b * hw + p] = loss;
    }
  }
  return logits.tape().record(
      "softmax_cross_entropy", std::move(out), {logits},
      [target, probs = std::move(probs), n, c, hw](BackwardContext& ctx) {
        Tensor* gx = ctx.grad_input(0);
        if (!gx) return;
        auto g = ctx.grad_output().data();
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t p = 0; p < hw; ++p) {
            double tsum = 0.0;
            for (std::size_t k = 0; k < c; ++k) tsum += target[(b * c + k) * hw + p];
            for (std::size_t k = 0; k < c; ++k) {
              const std::size_t i = (b * c + k) * hw + p;
              (*gx)[i] += g[b * hw + p] * (probs[i] * tsum - target[i]);
            }
          }
        }
      });
}

Var sigmoid_bce(Var logits, const Tensor& target) {
  const Tensor& lv = logits.value();
  if (lv.shape() != target.shape()) {
    throw ShapeError("sigmoid_bce: logits " + to_string(lv.shape()) + " vs target " + to_string(target.shape()));
  }
  Tensor out(lv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = lv[i];
    out[i] = std::max(x, 0.0) - x * target[i] + std::log1p(std::exp(-std::fabs(x)));
  }
  return logits.tape().record("sigmoid_bce", std::move(out), {logits}, [target](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    auto g = ctx.grad_output().data();
    auto x = ctx.input(0).data();
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * (1.0 / (1.0 + std::exp(-x[i])) - target[i]);
  });
}

const std::vector<std::string>& registered_ops() {
  static const std::vector<std::string> ops = {
      "conv2d",      "relu",           "leaky_relu",     "tanh",         "sigmoid",  "log",
      "exp",         "abs",            "softplus",       "add",          "sub",      "mul",
      "scale",       "add_scalar",     "sum",            "sum_axes",     "mean",     "mean_axes",
      "concat",      "slice_channels", "nearest_upsample", "avg_pool",   "max_pool", "affine_channel",
      "instance_norm", "softmax_cross_entropy", "sigmoid_bce"};
  return ops;
}

}  // namespace semdisc::ad
