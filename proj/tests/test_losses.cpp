#include <doctest.h>

#include <cmath>

#include "loss_cases.hpp"
#include "oracles.hpp"
#include "semdisc/error.hpp"
#include "semdisc/grad_check.hpp"
#include "semdisc/losses.hpp"

using namespace semdisc;
using ad::Var;

namespace {

Tensor t4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::vector<double> v) {
  return Tensor({n, c, h, w}, std::move(v));
}

double value(Var v) { return v.value().item(); }

}  // namespace

TEST_CASE("branch loss examples") {
  ad::Tape tape;
  const Tensor d = t4(1, 1, 2, 2, {0.2, -0.5, 1.0, 0.3});
  const MaskedLoss l = branch_adv_loss(tape.leaf(d), t4(1, 1, 2, 2, {1, 0, 0, 1}), AdvRole::kDiscReal, AdvForm::kHinge);
  CHECK(value(l.value) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_FALSE(l.void_mask);

  // All-ones mask is the plain mean.
  for (AdvForm form : {AdvForm::kHinge, AdvForm::kBce})
    for (AdvRole role : {AdvRole::kDiscReal, AdvRole::kDiscFake, AdvRole::kGenFake}) {
      const double got = value(branch_adv_loss(tape.leaf(d), Tensor({1, 1, 2, 2}, 1.0), role, form).value);
      double mean = 0.0;
      for (double x : d.data()) mean += oracle::adv_element(x, role, form) / 4.0;
      CHECK(got == doctest::Approx(mean).epsilon(1e-14));
    }

  const MaskedLoss v = branch_adv_loss(tape.leaf(d), Tensor({1, 1, 2, 2}), AdvRole::kDiscFake, AdvForm::kHinge);
  CHECK(v.void_mask);
  CHECK(value(v.value) == 0.0);

  CHECK_THROWS_AS(branch_adv_loss(tape.leaf(d), t4(1, 1, 2, 2, {1, 0, 1.5, 0}), AdvRole::kDiscReal, AdvForm::kHinge),
                  ValidationError);
  CHECK_THROWS_AS(branch_adv_loss(tape.leaf(d), t4(1, 1, 2, 2, {1, 0, -0.1, 0}), AdvRole::kDiscReal, AdvForm::kHinge),
                  ValidationError);
  CHECK_THROWS_AS(branch_adv_loss(tape.leaf(d), Tensor({1, 1, 1, 4}, 1.0), AdvRole::kDiscReal, AdvForm::kHinge),
                  ShapeError);
}

TEST_CASE("bce forms") {
  ad::Tape tape;
  const Tensor one = t4(1, 1, 1, 1, {0.0});
  const Tensor m({1, 1, 1, 1}, 1.0);
  for (AdvRole r : {AdvRole::kDiscReal, AdvRole::kDiscFake, AdvRole::kGenFake})
    CHECK(value(branch_adv_loss(tape.leaf(one), m, r, AdvForm::kBce).value) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const Tensor big = t4(1, 1, 1, 1, {3.0});
  CHECK(value(branch_adv_loss(tape.leaf(big), m, AdvRole::kDiscReal, AdvForm::kBce).value) ==
        doctest::Approx(-std::log(1.0 / (1.0 + std::exp(-3.0)))).epsilon(1e-14));
  CHECK(value(branch_adv_loss(tape.leaf(big), m, AdvRole::kDiscFake, AdvForm::kBce).value) ==
        doctest::Approx(-std::log(1.0 - 1.0 / (1.0 + std::exp(-3.0)))).epsilon(1e-14));
}

TEST_CASE("coarse-to-fine aggregation") {
  ad::Tape tape;
  // Three constant maps whose hinge disc_real branch losses are 1.0, 0.4, 0.8.
  Tensor maps({1, 3, 2, 2});
  const double levels[] = {0.0, 0.6, 0.2};
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t p = 0; p < 4; ++p) maps[k * 4 + p] = levels[k];
  Tensor masks({1, 3, 2, 2}, 1.0);
  masks[4 + 1] = 0.0;
  const AdvLoss l = coarse_to_fine_adv(tape.leaf(maps), masks, AdvRole::kDiscReal, AdvForm::kHinge);
  CHECK(value(l.value) == doctest::Approx(1.6).epsilon(1e-15));
  CHECK(l.void_branches == 0);

  // K = 0 reduces to the coarse branch.
  const Tensor d = t4(2, 1, 2, 2, {0.1, -0.7, 0.4, 2.0, -1.5, 0.0, 0.3, 0.9});
  const Tensor ones({2, 1, 2, 2}, 1.0);
  CHECK(value(coarse_to_fine_adv(tape.leaf(d), ones, AdvRole::kDiscFake, AdvForm::kHinge).value) ==
        value(branch_adv_loss(tape.leaf(d), ones, AdvRole::kDiscFake, AdvForm::kHinge).value));

  // Void branches contribute 0 but still count in 1/K.
  Tensor vm = masks;
  for (std::size_t p = 0; p < 4; ++p) vm[8 + p] = 0.0;
  const AdvLoss lv = coarse_to_fine_adv(tape.leaf(maps), vm, AdvRole::kDiscReal, AdvForm::kHinge);
  CHECK(lv.void_branches == 1);
  CHECK(value(lv.value) == doctest::Approx(1.0 + 0.4 / 2).epsilon(1e-15));

  CHECK_THROWS_AS(coarse_to_fine_adv(tape.leaf(maps), Tensor({1, 2, 2, 2}, 1.0), AdvRole::kDiscReal, AdvForm::kHinge),
                  ShapeError);
}

TEST_CASE("semantic matching examples") {
  ad::Tape tape;
  Tensor s({1, 4, 4, 4});
  for (std::size_t p = 0; p < 16; ++p) s[(p % 4) * 16 + p] = 1.0;
  CHECK(value(semantic_matching_loss(tape.leaf(Tensor({1, 4, 2, 2})), s, SemanticMode::kScene)) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(std::log(4.0) == doctest::Approx(1.3863).epsilon(1e-4));

  // Saturated correct logits on 1x1 maps over a single-class target.
  Tensor s1({1, 3, 4, 4});
  for (std::size_t p = 0; p < 16; ++p) s1[16 + p] = 1.0;
  CHECK(value(semantic_matching_loss(tape.leaf(t4(1, 3, 1, 1, {-400, 400, -400})), s1, SemanticMode::kScene)) == 0.0);

  CHECK_THROWS_AS(semantic_matching_loss(tape.leaf(Tensor({1, 4, 3, 3})), s, SemanticMode::kScene), ShapeError);
  Tensor soft({1, 4, 4, 4}, 0.1);
  CHECK_THROWS_AS(semantic_matching_loss(tape.leaf(Tensor({1, 4, 2, 2})), soft, SemanticMode::kScene), ValidationError);
  CHECK_NOTHROW(semantic_matching_loss(tape.leaf(Tensor({1, 4, 2, 2})), soft, SemanticMode::kKeypoint));
}

TEST_CASE("reconstruction and feature matching examples") {
  ad::Tape tape;
  Tensor y({1, 3, 4, 4}, 0.5);
  CHECK(value(reconstruction_loss(tape.leaf(Tensor({1, 3, 1, 1})), tape.constant(y))) == 0.5);
  CHECK(value(reconstruction_loss(tape.leaf(Tensor({1, 3, 2, 2}, 0.5)), tape.constant(y))) == 0.0);

  Var a = tape.leaf(Tensor::scalar(1.0)), b = tape.leaf(Tensor::scalar(3.0));
  CHECK(value(feature_matching_loss({a}, {b})) == 2.0);
  CHECK(value(feature_matching_loss({a, b}, {a, b})) == 0.0);
  CHECK_THROWS_AS(feature_matching_loss({a}, {a, b}), ShapeError);

  // Real-side features are constants: no gradient reaches them.
  Var x = tape.leaf(Tensor({1, 2, 2, 2}, 0.3)), r = tape.leaf(Tensor({1, 2, 2, 2}, -0.1));
  tape.backward(feature_matching_loss({x}, {r}));
  CHECK(tape.reached(x));
  CHECK_FALSE(tape.reached(r));
}

TEST_CASE("perceptual stand-in") {
  FeatNet net(17);
  ad::Tape tape;
  Rng rng(3);
  Tensor y({1, 3, 16, 16});
  for (double& v : y.data()) v = rng.uniform(-1, 1);
  CHECK(value(perceptual_loss(net, tape.leaf(y), tape.constant(y))) == 0.0);
  // Perturbing any sampled pixel changes the value.
  const double base = value(perceptual_loss(net, tape.leaf(Tensor(y.shape())), tape.constant(y)));
  for (int trial = 0; trial < 20; ++trial) {
    Tensor z = y;
    z[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(z.size()) - 1))] += 0.05;
    CHECK(value(perceptual_loss(net, tape.leaf(z), tape.constant(y))) > 0.0);
    CHECK(value(perceptual_loss(net, tape.leaf(z), tape.constant(y))) != base);
  }
}

TEST_CASE("totals") {
  ad::Tape tape;
  auto c = [&](double v) { return tape.constant(Tensor::scalar(v)); };
  LossWeights w{1.0, 1.0, 0.0, 0.0};
  const GenTerms g{c(2.0), c(1.0), c(0.5), c(7.0), c(9.0)};
  CHECK(value(generator_total(g, w, Phase::kFull)) == 3.5);
  CHECK(value(generator_total(g, w, Phase::kWarmup)) == 2.0);
  CHECK(value(generator_total(g, {0, 0, 0, 0}, Phase::kFull)) == 2.0);
  CHECK(value(generator_total({c(2.0), c(1.0), c(0.5), std::nullopt, std::nullopt}, {1, 1, 10, 10}, Phase::kFull)) == 3.5);
  CHECK(value(generator_total(g, {1, 1, 1, 2}, Phase::kWarmup)) == 2.0 + 7.0 + 18.0);
  CHECK(value(discriminator_total(c(1.0), c(0.2), c(0.3), w)) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(value(discriminator_total(c(1.0), c(0.2), c(0.3), {0, 0, 1, 1})) == 1.0);
  CHECK_THROWS_AS(generator_total(g, {-1, 1, 1, 1}, Phase::kFull), ValidationError);
  CHECK_THROWS_AS(discriminator_total(c(1.0), c(0.2), c(0.3), {1, -1, 1, 1}), ValidationError);
}

TEST_CASE("losses agree with scalar oracles on random instances") {
  double worst = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed)
    for (AdvForm form : {AdvForm::kHinge, AdvForm::kBce})
      for (bool soft : {false, true})
        for (const auto& cmp : loss_cases::run_case(mix_seed(seed, 100), form, soft)) {
          const double e = cmp.library == cmp.oracle ? 0.0 : oracle::rel_err(cmp.library, cmp.oracle);
          INFO(cmp.what << ": " << cmp.library << " vs " << cmp.oracle);
          CHECK(e <= 1e-9);
          worst = std::max(worst, e);
          ++count;
        }
  MESSAGE("compared " << count << " values, worst relative error " << worst);
}

TEST_CASE("mask gating is local") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor d({2, 1, 4, 4}), m({2, 1, 4, 4});
    for (double& v : d.data()) v = rng.uniform(-2, 2);
    for (double& v : m.data()) v = rng.bernoulli(0.5) ? rng.uniform() : 0.0;
    m[0] = 1.0;
    for (AdvForm form : {AdvForm::kHinge, AdvForm::kBce}) {
      ad::Tape tape;
      Var dv = tape.leaf(d);
      const MaskedLoss base = branch_adv_loss(dv, m, AdvRole::kDiscReal, form);
      tape.backward(base.value);
      const Tensor& g = tape.grad(dv);
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (m[i] != 0.0) continue;
        CHECK(g[i] == 0.0);
        Tensor p = d;
        p[i] += rng.uniform(-5, 5);
        ad::Tape t2;
        CHECK(value(branch_adv_loss(t2.leaf(p), m, AdvRole::kDiscReal, form).value) == value(base.value));
      }
    }
  }
}

TEST_CASE("normalization is invariant to pixel duplication") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor d({1, 1, 3, 5}), m({1, 1, 3, 5});
    for (double& v : d.data()) v = rng.uniform(-2, 2);
    for (double& v : m.data()) v = rng.bernoulli(0.6) ? 1.0 : 0.0;
    m[0] = 1.0;
    Tensor d2({1, 1, 6, 10}), m2({1, 1, 6, 10});
    for (std::size_t y = 0; y < 6; ++y)
      for (std::size_t x = 0; x < 10; ++x) {
        d2.at(0, 0, y, x) = d.at(0, 0, y / 2, x / 2);
        m2.at(0, 0, y, x) = m.at(0, 0, y / 2, x / 2);
      }
    for (AdvForm form : {AdvForm::kHinge, AdvForm::kBce}) {
      ad::Tape tape;
      const double a = value(branch_adv_loss(tape.leaf(d), m, AdvRole::kDiscFake, form).value);
      const double b = value(branch_adv_loss(tape.leaf(d2), m2, AdvRole::kDiscFake, form).value);
      CHECK(b == doctest::Approx(a).epsilon(1e-13));
    }
  }
}

TEST_CASE("loss gradients pass finite differences away from kinks") {
  Rng rng(13);
  ad::GradCheckOptions opts;
  auto rand = [&](Shape s, double lo, double hi) {
    Tensor t(std::move(s));
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
  };
  Tensor masks = rand({2, 4, 3, 3}, 0.0, 1.0);
  for (std::size_t i = 0; i < 18; ++i) masks[i * 2] = 1.0;
  for (AdvForm form : {AdvForm::kHinge, AdvForm::kBce})
    for (AdvRole role : {AdvRole::kDiscReal, AdvRole::kDiscFake, AdvRole::kGenFake}) {
      const auto r = ad::grad_check(
          [&](ad::Tape&, Var x) { return coarse_to_fine_adv(x, masks, role, form).value; }, rand({2, 4, 3, 3}, -2, 2), opts);
      CHECK(r.pass);
    }

  Tensor s({2, 3, 4, 4});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t p = 0; p < 16; ++p) s[(i * 3 + p % 3) * 16 + p] = 1.0;
  CHECK(ad::grad_check([&](ad::Tape&, Var x) { return semantic_matching_loss(x, s, SemanticMode::kScene); },
                       rand({2, 3, 2, 2}, -2, 2), opts).pass);
  const Tensor heat = rand({2, 3, 4, 4}, 0, 1);
  CHECK(ad::grad_check([&](ad::Tape&, Var x) { return semantic_matching_loss(x, heat, SemanticMode::kKeypoint); },
                       rand({2, 3, 2, 2}, -2, 2), opts).pass);
  const Tensor y = rand({2, 3, 4, 4}, -1, 1);
  CHECK(ad::grad_check([&](ad::Tape& t, Var x) { return reconstruction_loss(x, t.constant(y)); },
                       rand({2, 3, 2, 2}, -1, 1), opts).pass);
  CHECK(ad::grad_check([&](ad::Tape& t, Var x) { return reconstruction_loss(t.constant(Tensor({2, 3, 2, 2}, 0.1)), x); },
                       rand({2, 3, 4, 4}, -1, 1), opts).pass);
  const Tensor real = rand({1, 2, 3, 3}, -1, 1);
  CHECK(ad::grad_check([&](ad::Tape& t, Var x) { return feature_matching_loss({x, x * x}, {t.constant(real), t.constant(real)}); },
                       rand({1, 2, 3, 3}, -1, 1), opts).pass);
  FeatNet net(2);
  const Tensor img = rand({1, 3, 16, 16}, -1, 1);
  CHECK(ad::grad_check([&](ad::Tape& t, Var x) { return perceptual_loss(net, x, t.constant(img)); },
                       rand({1, 3, 16, 16}, -1, 1), opts).pass);
}
