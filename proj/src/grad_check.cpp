#include "semdisc/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "semdisc/error.hpp"
#include "semdisc/rng.hpp"

namespace semdisc::ad {
namespace {

std::vector<std::size_t> pick_coords(std::size_t n, const GradCheckOptions& opts) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= opts.max_coords) return idx;
  Rng rng(mix_seed(opts.seed, n));
  for (std::size_t i = 0; i < opts.max_coords; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.next_u64() % (n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(opts.max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct Sample {
  double value;
  std::uint64_t branches;
};

// Shared comparison loop. `eval(i, delta)` evaluates f with coordinate i
// shifted by delta (and restored afterwards).
template <class Eval>
GradCheckReport compare(const Tensor& analytic, const Eval& eval, const GradCheckOptions& opts) {
  if (!(opts.step > 0.0)) throw ValidationError("grad_check: step must be positive");
  GradCheckReport report;
  const Sample e0 = eval(0, 0.0);
  const double f0 = e0.value;
  for (std::size_t i : pick_coords(analytic.size(), opts)) {
    const Sample ep = eval(i, opts.step), em = eval(i, -opts.step);
    const double fp = ep.value, fm = em.value;
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericError("grad_check: non-finite function value");
    const double numeric = (fp - fm) / (2.0 * opts.step);
    const double right = (fp - f0) / opts.step;
    const double left = (f0 - fm) / opts.step;
    const double slope_gap = std::fabs(right - left);
    const double slope_mag = std::max({std::fabs(right), std::fabs(left), opts.abs_floor / opts.step});
    const bool crossed = ep.branches != e0.branches || em.branches != e0.branches;
    if (crossed || slope_gap > opts.kink_ratio * slope_mag) {
      report.excluded.push_back(i);
      continue;
    }
    const double a = analytic[i];
    const double diff = std::fabs(a - numeric);
    ++report.checked;
    if (diff <= opts.abs_floor) continue;
    report.max_rel_err = std::max(report.max_rel_err, diff / std::max(std::fabs(a), std::fabs(numeric)));
  }
  report.pass = report.max_rel_err < opts.tolerance;
  return report;
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const Tensor& point, const GradCheckOptions& opts) {
  Tensor analytic;
  {
    Tape tape;
    Var x = tape.leaf(point);
    Var y = f(tape, x);
    tape.backward(y);
    analytic = tape.grad(x);
  }
  Tensor work = point;
  auto eval = [&](std::size_t i, double delta) {
    const double saved = work[i];
    work[i] = saved + delta;
    Tape tape;
    const Sample v{f(tape, tape.constant(work)).value().item(), tape.branch_signature()};
    work[i] = saved;
    return v;
  };
  return compare(analytic, eval, opts);
}

GradCheckReport grad_check_parameter(const std::function<Var(Tape&)>& f, Parameter& param,
                                     const GradCheckOptions& opts) {
  param.zero_grad();
  {
    Tape tape;
    tape.backward(f(tape));
  }
  const Tensor analytic = param.grad;
  auto eval = [&](std::size_t i, double delta) {
    const double saved = param.value[i];
    param.value[i] = saved + delta;
    Tape tape;
    const Sample v{f(tape).value().item(), tape.branch_signature()};
    param.value[i] = saved;
    return v;
  };
  return compare(analytic, eval, opts);
}

}  // namespace semdisc::ad
