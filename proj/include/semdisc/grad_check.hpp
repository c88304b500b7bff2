#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "semdisc/autodiff.hpp"

namespace semdisc::ad {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Absolute agreement below this counts as a match regardless of scale.
  double abs_floor = 1e-8;
  // When the point has more coordinates than this, a random subset is checked.
  std::size_t max_coords = 64;
  std::uint64_t seed = 0;
  // A coordinate is kink-adjacent when a piecewise op on the tape changes
  // branch within +-step, or when its one-sided slopes differ by more than
  // this fraction of their magnitude (kinks the tape cannot see).
  double kink_ratio = 1e-3;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::vector<std::size_t> excluded;  // kink-adjacent coordinates
  bool pass = false;
};

// Builds the scalar function on a fresh tape from a leaf holding `point`.
using ScalarFn = std::function<Var(Tape&, Var)>;

// Compares reverse-mode gradients of `f` at `point` with central differences.
GradCheckReport grad_check(const ScalarFn& f, const Tensor& point, const GradCheckOptions& opts = {});

// Same check against a model parameter: `f` builds the loss on a tape and the
// parameter's `.grad` after backward is compared with finite differences of
// perturbed `param.value`.
GradCheckReport grad_check_parameter(const std::function<Var(Tape&)>& f, Parameter& param,
                                     const GradCheckOptions& opts = {});

}  // namespace semdisc::ad
