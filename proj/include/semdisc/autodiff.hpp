#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semdisc/tensor.hpp"

namespace semdisc::ad {

// Trainable tensor owned by a model. `grad` accumulates across backward
// passes until zero_grad(); `has_grad` records whether any pass reached it.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool has_grad = false;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

  void zero_grad() {
    grad = Tensor::zeros_like(value);
    has_grad = false;
  }
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class BackwardContext;
using BackwardFn = std::function<void(BackwardContext&)>;

// Append-only operation record. Insertion order is a topological order, so
// backward is a single reverse sweep that visits each node once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);
  // Trainable parameters become gradient leaves whose gradient is added to
  // `p.grad` by backward(); frozen ones are recorded as constants that alias
  // the parameter storage.
  Var param(Parameter& p, bool trainable = true);

  // Registers an op result. `inputs` are the parents; `fn` may be empty for
  // ops that are never differentiated.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn fn);

  void backward(Var loss);

  // Gradient of the last backward's loss w.r.t. `v` (zeros if unreached).
  const Tensor& grad(Var v);
  bool reached(Var v) const;

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Hash of the branch taken by every piecewise op (relu, leaky_relu, abs,
  // max_pool). Two evaluations of the same graph with equal signatures lie
  // on the same smooth piece.
  std::uint64_t branch_signature() const;

 private:
  friend class BackwardContext;

  struct Node {
    std::string op;
    Tensor value;
    const Tensor* alias = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;

    const Tensor& val() const { return alias ? *alias : value; }
  };

  Tensor* grad_buffer(std::size_t id);

  std::vector<Node> nodes_;
};

class BackwardContext {
 public:
  const Tensor& output() const { return tape_.nodes_[id_].val(); }
  const Tensor& grad_output() const { return tape_.nodes_[id_].grad; }
  const Tensor& input(std::size_t i) const { return tape_.nodes_[tape_.nodes_[id_].inputs[i]].val(); }
  std::size_t inputs_count() const { return tape_.nodes_[id_].inputs.size(); }
  // Accumulation buffer for input i, or nullptr when it needs no gradient.
  Tensor* grad_input(std::size_t i) { return tape_.grad_buffer(tape_.nodes_[id_].inputs[i]); }

 private:
  friend class Tape;
  BackwardContext(Tape& tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape& tape_;
  std::size_t id_;
};

// ---------------------------------------------------------------------------
// Operations. Elementwise binary ops broadcast operands of equal rank where
// each extent matches or is 1. Spatial ops take NCHW tensors.

struct Conv2dAttrs {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

Var conv2d(Var x, Var weight, std::optional<Var> bias, Conv2dAttrs attrs = {});

Var relu(Var x);
Var leaky_relu(Var x, double slope);
Var tanh(Var x);
Var sigmoid(Var x);
Var log(Var x);
Var exp(Var x);
Var abs(Var x);
// log(1 + e^x), evaluated stably.
Var softplus(Var x);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var add_scalar(Var x, double offset);

Var sum(Var x);
Var sum(Var x, const std::vector<std::size_t>& axes);
Var mean(Var x);
Var mean(Var x, const std::vector<std::size_t>& axes);

Var concat_channels(const std::vector<Var>& xs);
Var slice_channels(Var x, std::size_t begin, std::size_t count);

Var nearest_upsample(Var x, std::size_t factor_h, std::size_t factor_w);
Var avg_pool(Var x, std::size_t factor);
Var max_pool(Var x, std::size_t factor);

// y[n,c] = x[n,c] * scale[c] + shift[c]; scale and shift have shape [C].
Var affine_channel(Var x, Var scale, Var shift);
Var instance_norm(Var x, double eps = 1e-5);

// Per-pixel -sum_c target_c * log softmax_c(logits) over the channel axis.
// Output shape [N,1,H,W]; `target` is constant.
Var softmax_cross_entropy(Var logits, const Tensor& target);
// Elementwise binary cross-entropy with logits against constant targets.
Var sigmoid_bce(Var logits, const Tensor& target);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return scale(a, -1.0); }
inline Var operator*(double k, Var a) { return scale(a, k); }
inline Var operator*(Var a, double k) { return scale(a, k); }
inline Var operator+(Var a, double k) { return add_scalar(a, k); }

// Names of every differentiable op, used by the gradient test suites.
const std::vector<std::string>& registered_ops();

}  // namespace semdisc::ad
