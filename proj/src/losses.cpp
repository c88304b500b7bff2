#include "semdisc/losses.hpp"

#include "semdisc/error.hpp"

namespace semdisc {

using ad::Var;

std::string_view to_string(AdvForm form) { return form == AdvForm::kBce ? "bce" : "hinge"; }

AdvForm parse_adv_form(std::string_view name) {
  if (name == "hinge") return AdvForm::kHinge;
  if (name == "bce") return AdvForm::kBce;
  throw ValidationError("unknown adversarial form '" + std::string(name) + "' (expected hinge or bce)");
}

void LossWeights::validate() const {
  if (lambda_s < 0 || lambda_r < 0 || lambda_fm < 0 || lambda_perc < 0) {
    throw ValidationError("loss weights must be nonnegative");
  }
}

Var adv_elementwise(Var d, AdvRole role, AdvForm form) {
  if (form == AdvForm::kHinge) {
    switch (role) {
      case AdvRole::kDiscReal: return ad::relu(-d + 1.0);
      case AdvRole::kDiscFake: return ad::relu(d + 1.0);
      case AdvRole::kGenFake: return -d;
    }
  }
  switch (role) {
    case AdvRole::kDiscReal: return ad::softplus(-d);
    case AdvRole::kDiscFake: return ad::softplus(d);
    case AdvRole::kGenFake: return ad::softplus(-d);
  }
  throw ValidationError("adv_elementwise: bad role");
}

MaskedLoss branch_adv_loss(Var d_map, const Tensor& mask, AdvRole role, AdvForm form) {
  if (d_map.shape() != mask.shape()) {
    throw ShapeError("branch_adv_loss: map " + to_string(d_map.shape()) + " vs mask " + to_string(mask.shape()));
  }
  double mass = 0.0;
  for (double m : mask.data()) {
    if (!(m >= 0.0 && m <= 1.0)) throw ValidationError("branch_adv_loss: mask value " + std::to_string(m) + " outside [0,1]");
    mass += m;
  }
  ad::Tape& tape = d_map.tape();
  if (mass == 0.0) return {tape.constant(Tensor::scalar(0.0)), true};
  Var l = adv_elementwise(d_map, role, form);
  return {ad::scale(ad::sum(l * tape.constant(mask)), 1.0 / mass), false};
}

AdvLoss coarse_to_fine_adv(Var adv, const Tensor& masks, AdvRole role, AdvForm form) {
  const Shape a = adv.shape();
  if (a.size() != 4 || masks.rank() != 4 || a != masks.shape()) {
    throw ShapeError("coarse_to_fine_adv: maps " + to_string(a) + " vs masks " + to_string(masks.shape()));
  }
  const std::size_t n = a[0], k1 = a[1], hw = a[2] * a[3];
  AdvLoss out;
  std::optional<Var> fine;
  for (std::size_t k = 0; k < k1; ++k) {
    Tensor mk({n, 1, a[2], a[3]});
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(masks.data().begin() + static_cast<long>((i * k1 + k) * hw), hw,
                  mk.data().begin() + static_cast<long>(i * hw));
    MaskedLoss b = branch_adv_loss(k1 == 1 ? adv : ad::slice_channels(adv, k, 1), mk, role, form);
    out.void_branches += b.void_mask;
    if (k == 0) {
      out.value = b.value;
    } else {
      fine = fine ? *fine + b.value : b.value;
    }
  }
  if (fine) out.value = out.value + ad::scale(*fine, 1.0 / static_cast<double>(k1 - 1));
  return out;
}

AdvLoss multiscale_adv(const std::vector<DiscOutputs>& outputs, const std::vector<Tensor>& masks, AdvRole role,
                       AdvForm form) {
  if (outputs.empty() || outputs.size() != masks.size()) throw ShapeError("multiscale_adv: scale count mismatch");
  AdvLoss total;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    AdvLoss l = coarse_to_fine_adv(outputs[i].adv, masks[i], role, form);
    total.value = i == 0 ? l.value : total.value + l.value;
    total.void_branches += l.void_branches;
  }
  if (outputs.size() > 1) total.value = ad::scale(total.value, 1.0 / static_cast<double>(outputs.size()));
  return total;
}

namespace {

Var upsample_to(Var x, std::size_t h, std::size_t w, const char* who) {
  const Shape s = x.shape();
  if (s.size() != 4 || h % s[2] != 0 || w % s[3] != 0) {
    throw ShapeError(std::string(who) + ": cannot upsample " + to_string(s) + " to " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  if (h == s[2] && w == s[3]) return x;
  return ad::nearest_upsample(x, h / s[2], w / s[3]);
}

}  // namespace

Var semantic_matching_loss(Var logits, const Tensor& s, SemanticMode mode) {
  const Shape l = logits.shape();
  if (s.rank() != 4 || l.size() != 4 || l[0] != s.dim(0) || l[1] != s.dim(1)) {
    throw ShapeError("semantic_matching_loss: logits " + to_string(l) + " vs semantics " + to_string(s.shape()));
  }
  Var up = upsample_to(logits, s.dim(2), s.dim(3), "semantic_matching_loss");
  if (mode == SemanticMode::kKeypoint) return ad::mean(ad::sigmoid_bce(up, s));

  const std::size_t n = s.dim(0), k = s.dim(1), hw = s.dim(2) * s.dim(3);
  Tensor target(s.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < hw; ++p) {
      std::size_t best = 0;
      double total = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double v = s[(i * k + c) * hw + p];
        total += v;
        if (v > s[(i * k + best) * hw + p]) best = c;
      }
      if (total != 1.0) throw ValidationError("semantic_matching_loss: scene map is not one-hot (keypoint data?)");
      target[(i * k + best) * hw + p] = 1.0;
    }
  return ad::mean(ad::softmax_cross_entropy(up, target));
}

Var reconstruction_loss(Var rec, Var y) {
  const Shape ys = y.shape();
  if (rec.shape().size() != 4 || ys.size() != 4 || rec.shape()[1] != 3 || ys[1] != 3 || rec.shape()[0] != ys[0]) {
    throw ShapeError("reconstruction_loss: maps " + to_string(rec.shape()) + " vs image " + to_string(ys));
  }
  return ad::mean(ad::abs(upsample_to(rec, ys[2], ys[3], "reconstruction_loss") - y));
}

Var feature_matching_loss(const std::vector<Var>& fake, const std::vector<Var>& real) {
  if (fake.empty() || fake.size() != real.size()) {
    throw ShapeError("feature_matching_loss: " + std::to_string(fake.size()) + " vs " + std::to_string(real.size()) +
                     " layers");
  }
  ad::Tape& tape = fake.front().tape();
  Var total;
  for (std::size_t i = 0; i < fake.size(); ++i) {
    Var l = ad::mean(ad::abs(fake[i] - tape.constant(real[i].value())));
    total = i == 0 ? l : total + l;
  }
  if (fake.size() > 1) total = ad::scale(total, 1.0 / static_cast<double>(fake.size()));
  return total;
}

Var perceptual_loss(FeatNet& net, Var fake, Var real) {
  ad::Tape& tape = fake.tape();
  const auto f = net.forward(tape, fake);
  const auto r = net.forward(tape, tape.constant(real.value()));
  return feature_matching_loss(f, r);
}

Var generator_total(const GenTerms& t, const LossWeights& w, Phase phase) {
  w.validate();
  Var total = t.adv;
  auto add = [&](const std::optional<Var>& term, double lambda) {
    if (term && lambda > 0.0) total = total + ad::scale(*term, lambda);
  };
  if (phase == Phase::kFull) {
    add(t.sem, w.lambda_s);
    add(t.rec, w.lambda_r);
  }
  add(t.fm, w.lambda_fm);
  add(t.perc, w.lambda_perc);
  return total;
}

Var discriminator_total(Var adv, std::optional<Var> sem_real, std::optional<Var> rec_real, const LossWeights& w) {
  w.validate();
  Var total = adv;
  if (sem_real && w.lambda_s > 0.0) total = total + ad::scale(*sem_real, w.lambda_s);
  if (rec_real && w.lambda_r > 0.0) total = total + ad::scale(*rec_real, w.lambda_r);
  return total;
}

Tensor stack_masks(const std::vector<MaskSet>& masks, std::size_t channels) {
  if (masks.empty()) throw ShapeError("stack_masks: empty batch");
  const MaskSet& m0 = masks.front();
  if (channels == 0 || channels > m0.count) throw ShapeError("stack_masks: bad channel count");
  const std::size_t hw = m0.height * m0.width;
  Tensor out({masks.size(), channels, m0.height, m0.width});
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const MaskSet& m = masks[i];
    if (m.height != m0.height || m.width != m0.width || m.count != m0.count) throw ShapeError("stack_masks: ragged batch");
    std::copy_n(m.data.begin(), channels * hw, out.data().begin() + static_cast<long>(i * channels * hw));
  }
  return out;
}

}  // namespace semdisc
