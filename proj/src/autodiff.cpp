#include "semdisc/autodiff.hpp"

#include "semdisc/error.hpp"

namespace semdisc::ad {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  Node node;
  node.op = "leaf";
  node.value = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p, bool trainable) {
  Node node;
  node.op = trainable ? "param" : "frozen";
  node.alias = &p.value;
  node.requires_grad = trainable;
  node.param = trainable ? &p : nullptr;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite output of shape " + to_string(value.shape()));
  }
  Node node;
  node.op = std::string(op);
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.tape_ != this) throw Error(std::string(op) + ": input belongs to a different tape");
    node.inputs.push_back(v.id_);
    node.requires_grad = node.requires_grad || nodes_[v.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const { return nodes_.at(id).val(); }

Tensor* Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return nullptr;
  if (!node.has_grad) {
    node.grad = Tensor(node.val().shape());
    node.has_grad = true;
  }
  return &node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw Error("backward: loss belongs to a different tape");
  const Tensor& lv = nodes_[loss.id_].val();
  if (lv.size() != 1) throw ShapeError("backward: loss must be scalar, got shape " + to_string(lv.shape()));
  for (Node& n : nodes_) {
    n.grad = Tensor();
    n.has_grad = false;
  }
  if (!nodes_[loss.id_].requires_grad) return;

  Tensor* seed = grad_buffer(loss.id_);
  seed->fill(1.0);
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad) continue;
    if (node.backward) {
      BackwardContext ctx(*this, i);
      node.backward(ctx);
    }
    if (node.param != nullptr) {
      if (node.param->grad.shape() != node.grad.shape()) node.param->grad = Tensor::zeros_like(node.grad);
      auto dst = node.param->grad.data();
      auto src = node.grad.data();
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
      node.param->has_grad = true;
    }
  }
}

const Tensor& Tape::grad(Var v) {
  Node& node = nodes_.at(v.id_);
  if (!node.has_grad && node.grad.shape() != node.val().shape()) node.grad = Tensor(node.val().shape());
  return node.grad;
}

bool Tape::reached(Var v) const { return nodes_.at(v.id_).has_grad; }

std::uint64_t Tape::branch_signature() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  for (const Node& node : nodes_) {
    if (node.op == "relu" || node.op == "leaky_relu" || node.op == "abs") {
      const Tensor& x = nodes_[node.inputs[0]].val();
      for (std::size_t i = 0; i < x.size(); ++i) mix(x[i] > 0.0 ? 1 : x[i] < 0.0 ? 2 : 3);
    } else if (node.op == "max_pool") {
      // Window winners: inputs equal to their window's maximum.
      const Tensor& x = nodes_[node.inputs[0]].val();
      const Tensor& y = node.val();
      const std::size_t nc = x.dim(0) * x.dim(1), hh = x.dim(2), ww = x.dim(3), oh = y.dim(2), ow = y.dim(3);
      const std::size_t f = hh / oh;
      for (std::size_t p = 0; p < nc; ++p)
        for (std::size_t yy = 0; yy < oh * f; ++yy)
          for (std::size_t xx = 0; xx < ow * f; ++xx)
            mix(x[(p * hh + yy) * ww + xx] == y[(p * oh + yy / f) * ow + xx / f] ? 1 : 2);
    }
  }
  return h;
}

}  // namespace semdisc::ad
