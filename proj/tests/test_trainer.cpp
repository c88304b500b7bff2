#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "semdisc/trainer.hpp"
#include "train_fixtures.hpp"

using namespace semdisc;
namespace fs = std::filesystem;

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  c.epochs = 200;
  c.warmup_epochs = 100;
  CHECK(lr_schedule(0, c) == 2e-4);
  CHECK(lr_schedule(50, c) == 2e-4);
  CHECK(lr_schedule(99, c) == 2e-4);
  CHECK(lr_schedule(100, c) == 2e-4);
  CHECK(lr_schedule(150, c) == 1e-4);
  CHECK(lr_schedule(200, c) == 0.0);
  CHECK(lr_schedule(101, c) == doctest::Approx(2e-4 * 99 / 100).epsilon(1e-15));
  for (std::size_t e = 1; e <= 200; ++e) CHECK(lr_schedule(e, c) <= lr_schedule(e - 1, c));
  CHECK_THROWS_AS(lr_schedule(201, c), ValidationError);

  c.warmup_epochs = 200;
  CHECK(lr_schedule(199, c) == 2e-4);
  CHECK(lr_schedule(200, c) == 0.0);
  c.warmup_epochs = 0;
  CHECK(lr_schedule(0, c) == 2e-4);
  CHECK(lr_schedule(100, c) == 1e-4);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters and moments alone") {
    ad::Parameter p("p", Tensor({3}, std::vector<double>{1.0, -2.0, 0.5}));
    p.has_grad = true;
    AdamState st;
    adam_step({&p}, st, 0.1, 0.9, 0.999);
    CHECK(p.value == Tensor({3}, std::vector<double>{1.0, -2.0, 0.5}));
    CHECK(st.m[0] == Tensor({3}));
    CHECK(st.v[0] == Tensor({3}));
  }
  SUBCASE("first step is lr-sized") {
    ad::Parameter p("p", Tensor::scalar(0.0));
    p.grad = Tensor::scalar(1.0);
    p.has_grad = true;
    AdamState st;
    adam_step({&p}, st, 0.1, 0.5, 0.999);
    CHECK(p.value.item() == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-15));
  }
  SUBCASE("quadratic descent matches the scalar recurrence") {
    ad::Parameter p("p", Tensor::scalar(1.0));
    AdamState st;
    double theta = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 100; ++t) {
      p.grad = Tensor::scalar(2.0 * p.value.item());
      p.has_grad = true;
      adam_step({&p}, st, 0.1, 0.9, 0.999);
      const double g = 2.0 * theta;
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      theta -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    }
    CHECK(std::fabs(p.value.item()) < 0.1);
    CHECK(p.value.item() == doctest::Approx(theta).epsilon(1e-12));
  }
  SUBCASE("unreached parameters are skipped") {
    ad::Parameter a("a", Tensor::scalar(1.0)), b("b", Tensor::scalar(1.0));
    a.grad = Tensor::scalar(1.0);
    a.has_grad = true;
    b.grad = Tensor::scalar(5.0);  // stale, but not reached
    AdamState st;
    adam_step({&a, &b}, st, 0.1, 0.5, 0.999);
    CHECK(a.value.item() != 1.0);
    CHECK(b.value.item() == 1.0);
    CHECK(st.t == std::vector<std::size_t>{1, 0});
  }
  SUBCASE("non-finite gradient aborts before any update") {
    ad::Parameter a("a", Tensor::scalar(1.0)), b("b", Tensor::scalar(1.0));
    a.grad = Tensor::scalar(1.0);
    b.grad = Tensor::scalar(NAN);
    a.has_grad = b.has_grad = true;
    AdamState st;
    CHECK_THROWS_AS(adam_step({&a, &b}, st, 0.1, 0.5, 0.999), NumericError);
    CHECK(a.value.item() == 1.0);
  }
}

TEST_CASE("batches carry per-scale masks") {
  const Dataset ds = fixtures::scene_data(8, 32, 3, 1);
  ModelConfig m = fixtures::tiny_model(32, 3, 2);
  Trainer tr(m, fixtures::tiny_train());
  const Batch b = tr.make_batch(ds, {0, 3, 5});
  CHECK(b.images.shape() == Shape{3, 3, 32, 32});
  CHECK(b.semantics.shape() == Shape{3, 3, 32, 32});
  REQUIRE(b.masks.size() == 2);
  CHECK(b.masks[0].shape() == Shape{3, 4, 2, 2});
  CHECK(b.masks[1].shape() == Shape{3, 4, 1, 1});
  for (std::size_t i = 0; i < 3; ++i) CHECK(b.masks[0].at(i, 0, 1, 1) == 1.0);

  m.disc.coarse_to_fine = false;
  Trainer single(m, fixtures::tiny_train());
  CHECK(single.make_batch(ds, {0}).masks[0].shape() == Shape{1, 1, 2, 2});

  const Dataset other = fixtures::scene_data(2, 32, 4, 1);
  CHECK_THROWS_AS(tr.make_batch(other, {0}), ValidationError);
}

TEST_CASE("fake-only discriminator step leaves the auxiliary heads untouched") {
  const Dataset ds = fixtures::scene_data(4, 16, 3, 2);
  for (bool leak : {false, true}) {
    TrainConfig tc = fixtures::tiny_train();
    tc.leak_aux_on_fake = leak;
    Trainer tr(fixtures::tiny_model(16, 3, 1), tc);
    const Batch b = tr.make_batch(ds, {0, 1, 2, 3});
    ad::Tape tape;
    const Tensor fake = tr.generator().forward(tape, tape.constant(b.semantics)).value();
    const Discriminator before = tr.discriminator().scale(0);
    tr.disc_step(b, fake, 1e-3, /*include_real=*/false);
    const Discriminator& after = tr.discriminator().scale(0);
    auto same = [&](const std::vector<std::size_t>& idx) {
      for (std::size_t i : idx)
        if (!bitwise_equal(before.parameters()[i].value, after.parameters()[i].value)) return false;
      return true;
    };
    CAPTURE(leak);
    CHECK(same(before.sem_params()) == !leak);
    CHECK(same(before.rec_params()) == !leak);
    CHECK_FALSE(same(before.adv_params()));
    CHECK_FALSE(same(before.trunk_params()));
  }
}

TEST_CASE("generator step freezes the discriminator and gates the semantic head") {
  const Dataset ds = fixtures::scene_data(4, 16, 3, 3);
  Trainer base(fixtures::tiny_model(16, 3, 1), fixtures::tiny_train());
  const Batch b = base.make_batch(ds, {0, 1, 2, 3});

  for (Phase phase : {Phase::kWarmup, Phase::kFull}) {
    Trainer a = base, z = base;
    for (std::size_t i : z.discriminator().scale(0).sem_params()) z.discriminator().scale(0).parameters()[i].value.fill(0.0);
    const MultiScaleDisc d_before = a.discriminator();
    a.gen_step(b, 1e-3, phase);
    z.gen_step(b, 1e-3, phase);
    for (std::size_t i = 0; i < d_before.scale(0).parameters().size(); ++i)
      CHECK(bitwise_equal(d_before.scale(0).parameters()[i].value, a.discriminator().scale(0).parameters()[i].value));
    bool same = true;
    for (std::size_t i = 0; i < a.generator().parameters().size(); ++i)
      same &= bitwise_equal(a.generator().parameters()[i].value, z.generator().parameters()[i].value);
    CAPTURE(int(phase));
    CHECK(same == (phase == Phase::kWarmup));
  }
}

TEST_CASE("training smoke run, determinism and log consistency") {
  const Dataset ds = fixtures::scene_data(64, 16, 3, 4);
  const fs::path dir = fs::temp_directory_path() / "semdisc_trainer_smoke";
  fs::remove_all(dir);
  TrainConfig tc = fixtures::tiny_train();
  tc.epochs = 2;
  tc.warmup_epochs = 1;
  tc.batch_size = 16;
  tc.checkpoint_every = 1;
  const ModelConfig mc = fixtures::tiny_model(16, 3, 1);

  std::ostringstream csv1, csv2;
  Trainer t1(mc, tc), t2(mc, tc);
  const TrainResult r1 = t1.train(ds, &csv1, dir);
  t2.train(ds, &csv2);
  CHECK(r1.checkpoints.size() == 2);
  for (const auto& p : r1.checkpoints) CHECK(fs::exists(p));
  CHECK(r1.log.size() == 8);
  CHECK(csv1.str() == csv2.str());
  CHECK(csv1.str().rfind(csv_header(), 0) == 0);

  const LossWeights& w = tc.weights;
  for (const StepRecord& r : r1.log) {
    CHECK(r.d.adv == r.d.adv_real + r.d.adv_fake);
    CHECK(r.d.total == r.d.adv + w.lambda_s * r.d.sem + w.lambda_r * r.d.rec);
    double g = r.g.adv;
    if (r.g.phase == Phase::kFull) g = g + w.lambda_s * r.g.sem + w.lambda_r * r.g.rec;
    g = g + w.lambda_fm * r.g.fm + w.lambda_perc * r.g.perc;
    CHECK(r.g.total == doctest::Approx(g).epsilon(1e-12));
    CHECK((r.g.phase == Phase::kFull) == (r.epoch >= 1));
  }

  // The last checkpoint rebuilds a generator identical to the trained one.
  const LoadedModels lm = load_models(read_checkpoint(r1.checkpoints.back()));
  for (std::size_t i = 0; i < lm.generator.parameters().size(); ++i)
    CHECK(bitwise_equal(lm.generator.parameters()[i].value, t1.generator().parameters()[i].value));
  CHECK(lm.config.disc.classes == 3);
  CHECK(lm.config.num_scales == 1);

  TrainConfig capped = tc;
  capped.max_steps = 3;
  Trainer t3(mc, capped);
  CHECK(t3.train(ds).log.size() == 3);
}

TEST_CASE("non-finite values abort training with the step") {
  const Dataset ds = fixtures::scene_data(8, 16, 3, 5);
  TrainConfig tc = fixtures::tiny_train();
  tc.epochs = 1;
  tc.warmup_epochs = 1;
  Trainer tr(fixtures::tiny_model(16, 3, 1), tc);
  tr.after_gen_step = [](Trainer& t) {
    if (t.steps_done() == 0) t.generator().parameters()[0].value[0] = NAN;
  };
  try {
    tr.train(ds);
    FAIL("expected abort");
  } catch (const TrainingAborted& e) {
    CHECK(e.step() == 1);
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
}

TEST_CASE("variants") {
  CHECK_THROWS_AS(parse_variant("c2f+vgg"), ValidationError);
  const Variant full = parse_variant("full");
  CHECK((full.coarse_to_fine && full.semantic && full.reconstruction && full.perceptual));
  const Variant np = parse_variant("sem+rec-noperc");
  CHECK((!np.coarse_to_fine && np.semantic && np.reconstruction && !np.perceptual));

  ModelConfig m = default_model_config(SemanticMode::kScene, 32, 32, 4);
  TrainConfig t;
  apply_variant(parse_variant("c2f"), m, t);
  CHECK(m.disc.adv_channels() == 5);
  CHECK((!m.disc.semantic_head && !m.disc.reconstruction_head));
  CHECK(t.weights.lambda_s == 0.0);
  CHECK(t.weights.lambda_r == 0.0);

  ModelConfig wide = default_model_config(SemanticMode::kScene, 32, 32, 4);
  TrainConfig tw;
  apply_variant(parse_variant("baseline+10%"), wide, tw);
  ModelConfig fm = default_model_config(SemanticMode::kScene, 32, 32, 4);
  TrainConfig tf;
  apply_variant(full, fm, tf);
  const std::size_t pw = MultiScaleDisc(wide.disc, 2, 0).parameter_count();
  const std::size_t pf = MultiScaleDisc(fm.disc, 2, 0).parameter_count();
  CHECK(wide.disc.extra_last > 0);
  CHECK(pw >= pf);
  CHECK(static_cast<double>(pw - pf) / pf < 0.01);
  CHECK(wide.disc.adv_channels() == 1);
}
