#pragma once

// Randomized small loss instances evaluated both through the library and
// through the scalar oracles.

#include <string>
#include <vector>

#include "oracles.hpp"
#include "semdisc/losses.hpp"

namespace loss_cases {

using semdisc::Shape;
using semdisc::Tensor;

struct Comparison {
  std::string what;
  double library;
  double oracle;
};

inline std::vector<double> uniform(semdisc::Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline Tensor tensor(Shape s, const std::vector<double>& v) { return Tensor(std::move(s), v); }

// One random instance; `soft` selects keypoint-style soft masks, otherwise
// masks are binary with M_0 = 1.
inline std::vector<Comparison> run_case(std::uint64_t seed, semdisc::AdvForm form, bool soft) {
  using namespace semdisc;
  Rng rng(seed);
  std::vector<Comparison> out;
  ad::Tape tape;

  const std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, 2));
  const std::size_t k = static_cast<std::size_t>(rng.uniform_int(0, 5));
  const std::size_t h = static_cast<std::size_t>(rng.uniform_int(1, 8));
  const std::size_t w = static_cast<std::size_t>(rng.uniform_int(1, 8));
  const std::size_t k1 = k + 1, hw = h * w;

  // Adversarial maps and masks.
  const auto maps = uniform(rng, n * k1 * hw, -2.5, 2.5);
  std::vector<double> masks(n * k1 * hw);
  const std::size_t empty_branch = k > 0 && rng.bernoulli(0.3) ? static_cast<std::size_t>(rng.uniform_int(1, static_cast<int>(k))) : 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k1; ++c)
      for (std::size_t p = 0; p < hw; ++p) {
        double m;
        if (c == 0) m = soft ? rng.uniform(0.2, 1.0) : 1.0;
        else if (c == empty_branch) m = 0.0;
        else if (soft) m = rng.bernoulli(0.2) ? 0.0 : rng.uniform();
        else m = rng.bernoulli(0.5) ? 1.0 : 0.0;
        masks[(i * k1 + c) * hw + p] = m;
      }

  const Tensor map_t = tensor({n, k1, h, w}, maps), mask_t = tensor({n, k1, h, w}, masks);
  const AdvRole roles[] = {AdvRole::kDiscReal, AdvRole::kDiscFake, AdvRole::kGenFake};
  double adv_vals[3];
  for (int r = 0; r < 3; ++r) {
    const AdvLoss lib = coarse_to_fine_adv(tape.leaf(map_t), mask_t, roles[r], form);
    adv_vals[r] = oracle::coarse_to_fine(maps, masks, n, k1, hw, roles[r], form);
    out.push_back({"coarse_to_fine role " + std::to_string(r), lib.value.value().item(), adv_vals[r]});

    // Single branch on the last map.
    std::vector<double> d, m;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < hw; ++p) {
        d.push_back(maps[(i * k1 + k) * hw + p]);
        m.push_back(masks[(i * k1 + k) * hw + p]);
      }
    const MaskedLoss b = branch_adv_loss(tape.leaf(tensor({n, 1, h, w}, d)), tensor({n, 1, h, w}, m), roles[r], form);
    const oracle::Branch ob = oracle::branch(d, m, roles[r], form);
    out.push_back({"branch role " + std::to_string(r), b.value.value().item(), ob.value});
    out.push_back({"branch void flag", double(b.void_mask), double(ob.void_mask)});
  }

  // Semantic matching and reconstruction on maps upsampled by f.
  const std::size_t sh = static_cast<std::size_t>(rng.uniform_int(1, 4)), sw = static_cast<std::size_t>(rng.uniform_int(1, 4));
  const std::size_t f = static_cast<std::size_t>(rng.uniform_int(1, 2));
  const std::size_t big_h = sh * f, big_w = sw * f;
  const std::size_t kc = std::max<std::size_t>(k, 2);
  const auto logits = uniform(rng, n * kc * sh * sw, -3.0, 3.0);
  std::vector<double> scene(n * kc * big_h * big_w, 0.0), heat(n * kc * big_h * big_w);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < big_h * big_w; ++p)
      scene[(i * kc + static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(kc) - 1))) * big_h * big_w + p] = 1.0;
  for (double& t : heat) t = rng.bernoulli(0.3) ? 1.0 : rng.uniform() * 0.5;
  const double sem_scene =
      semantic_matching_loss(tape.leaf(tensor({n, kc, sh, sw}, logits)), tensor({n, kc, big_h, big_w}, scene),
                             SemanticMode::kScene).value().item();
  const double sem_kp =
      semantic_matching_loss(tape.leaf(tensor({n, kc, sh, sw}, logits)), tensor({n, kc, big_h, big_w}, heat),
                             SemanticMode::kKeypoint).value().item();
  out.push_back({"semantic scene", sem_scene, oracle::semantic_scene(logits, scene, n, kc, sh, sw, big_h, big_w)});
  out.push_back({"semantic keypoint", sem_kp, oracle::semantic_keypoint(logits, heat, n, kc, sh, sw, big_h, big_w)});

  const auto rec = uniform(rng, n * 3 * sh * sw, -1.0, 1.0);
  const auto img = uniform(rng, n * 3 * big_h * big_w, -1.0, 1.0);
  const double rec_lib =
      reconstruction_loss(tape.leaf(tensor({n, 3, sh, sw}, rec)), tape.constant(tensor({n, 3, big_h, big_w}, img)))
          .value().item();
  const double rec_or = oracle::reconstruction(rec, img, n, sh, sw, big_h, big_w);
  out.push_back({"reconstruction", rec_lib, rec_or});

  // Feature matching over 1-4 layers of random sizes.
  const std::size_t layers = static_cast<std::size_t>(rng.uniform_int(1, 4));
  std::vector<std::vector<double>> ff, rf;
  std::vector<ad::Var> fv, rv;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t c = static_cast<std::size_t>(rng.uniform_int(1, 4)), s = static_cast<std::size_t>(rng.uniform_int(1, 4));
    ff.push_back(uniform(rng, n * c * s * s, -1.0, 1.0));
    rf.push_back(uniform(rng, n * c * s * s, -1.0, 1.0));
    fv.push_back(tape.leaf(tensor({n, c, s, s}, ff.back())));
    rv.push_back(tape.leaf(tensor({n, c, s, s}, rf.back())));
  }
  const double fm_lib = feature_matching_loss(fv, rv).value().item();
  const double fm_or = oracle::feature_matching(ff, rf);
  out.push_back({"feature matching", fm_lib, fm_or});

  // Totals, recomposed from the oracle parts.
  LossWeights lw{rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0), rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0)};
  const double perc = rng.uniform(0.0, 1.0);
  const bool full = rng.bernoulli(0.5);
  const double sem_or = oracle::semantic_scene(logits, scene, n, kc, sh, sw, big_h, big_w);
  auto c = [&](double v) { return tape.constant(Tensor::scalar(v)); };
  const double g_lib = generator_total({tape.leaf(Tensor::scalar(adv_vals[2])), c(sem_scene), c(rec_lib), c(fm_lib), c(perc)},
                                       lw, full ? Phase::kFull : Phase::kWarmup).value().item();
  out.push_back({"generator total", g_lib, oracle::generator_total(adv_vals[2], sem_or, rec_or, fm_or, perc, lw, full)});
  const double d_adv = adv_vals[0] + adv_vals[1];
  const double d_lib = discriminator_total(c(d_adv), c(sem_scene), c(rec_lib), lw).value().item();
  out.push_back({"discriminator total", d_lib, oracle::discriminator_total(d_adv, sem_or, rec_or, lw)});
  return out;
}

}  // namespace loss_cases
