#include "semdisc/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include <json.hpp>

namespace semdisc {

using ad::Var;
using nlohmann::json;

ModelConfig default_model_config(SemanticMode mode, std::size_t height, std::size_t width, std::size_t classes) {
  ModelConfig m;
  m.mode = mode;
  m.height = height;
  m.width = width;
  m.generator = {classes, 8, 3};
  m.disc.classes = classes;
  return m;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ValidationError("epochs must be >= 1");
  if (warmup_epochs > epochs) throw ValidationError("warmup epochs must not exceed epochs");
  if (batch_size == 0) throw ValidationError("batch size must be >= 1");
  if (!(lr0 >= 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
    throw ValidationError("invalid optimizer hyperparameters");
  }
  weights.validate();
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch > cfg.epochs) {
    throw ValidationError("lr_schedule: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + "]");
  }
  if (epoch < cfg.warmup_epochs) return cfg.lr0;
  if (epoch == cfg.epochs) return 0.0;
  const double frac = static_cast<double>(cfg.epochs - epoch) / static_cast<double>(cfg.epochs - cfg.warmup_epochs);
  return cfg.lr0 * frac;
}

void adam_step(const std::vector<ad::Parameter*>& params, AdamState& st, double lr, double beta1, double beta2,
               double eps) {
  if (st.m.size() != params.size()) {
    st.m.clear();
    st.v.clear();
    for (const auto* p : params) {
      st.m.push_back(Tensor::zeros_like(p->value));
      st.v.push_back(Tensor::zeros_like(p->value));
    }
    st.t.assign(params.size(), 0);
  }
  for (const auto* p : params) {
    if (p->has_grad && !p->grad.all_finite()) throw NumericError("adam_step: non-finite gradient for '" + p->name + "'");
    if (p->grad.shape() != p->value.shape()) throw ShapeError("adam_step: gradient shape mismatch for '" + p->name + "'");
  }
  ++st.steps;
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Parameter& p = *params[i];
    if (!p.has_grad) continue;
    const std::size_t t = ++st.t[i];
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    auto theta = p.value.data();
    auto g = p.grad.data();
    auto m = st.m[i].data();
    auto v = st.v[i].data();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      theta[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
    }
  }
}

std::vector<ad::Parameter*> parameter_ptrs(Module& m) {
  std::vector<ad::Parameter*> out;
  for (auto& p : m.parameters()) out.push_back(&p);
  return out;
}

std::vector<ad::Parameter*> parameter_ptrs(MultiScaleDisc& d) {
  std::vector<ad::Parameter*> out;
  for (std::size_t i = 0; i < d.num_scales(); ++i)
    for (auto& p : d.scale(i).parameters()) out.push_back(&p);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Mean over scales of a per-scale loss; nullopt when the head is absent.
template <class F>
std::optional<Var> scale_mean(const std::vector<DiscOutputs>& outs, F&& per_scale) {
  std::optional<Var> total;
  for (const DiscOutputs& o : outs) {
    std::optional<Var> l = per_scale(o);
    if (!l) return std::nullopt;
    total = total ? *total + *l : *l;
  }
  if (total && outs.size() > 1) total = ad::scale(*total, 1.0 / static_cast<double>(outs.size()));
  return total;
}

double item_or_zero(const std::optional<Var>& v) { return v ? v->value().item() : 0.0; }

}  // namespace

std::string csv_header() {
  return "step,epoch,lr,phase,d_total,d_adv_real,d_adv_fake,d_adv,d_sem,d_rec,g_total,g_adv,g_sem,g_rec,g_fm,g_perc";
}

std::string csv_row(const StepRecord& r) {
  std::string s = std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + fmt(r.lr) + "," +
                  (r.g.phase == Phase::kWarmup ? "warmup" : "full");
  for (double v : {r.d.total, r.d.adv_real, r.d.adv_fake, r.d.adv, r.d.sem, r.d.rec, r.g.total, r.g.adv, r.g.sem,
                   r.g.rec, r.g.fm, r.g.perc})
    s += "," + fmt(v);
  return s;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const ModelConfig& model, const TrainConfig& train)
    : model_(model),
      train_(train),
      gen_(model.generator, mix_seed(train.seed, 1)),
      disc_(model.disc, model.num_scales, mix_seed(train.seed, 2)),
      perc_net_(kPerceptualSeed) {
  train_.validate();
  if (model.generator.in_channels != model.disc.classes) {
    throw ValidationError("generator input channels must equal the number of semantic channels");
  }
  const std::size_t f = std::size_t{16} << (model.num_scales - 1);
  if (model.height % f != 0 || model.width % f != 0) {
    throw ValidationError("image size " + std::to_string(model.height) + "x" + std::to_string(model.width) +
                          " must be divisible by " + std::to_string(f) + " for " + std::to_string(model.num_scales) +
                          " scales");
  }
}

Batch Trainer::make_batch(const Dataset& data, const std::vector<std::size_t>& indices) const {
  const DatasetHeader& h = data.header;
  if (h.mode != model_.mode || h.channels != model_.classes() || h.height != model_.height || h.width != model_.width) {
    throw ValidationError("dataset geometry does not match the model configuration");
  }
  const std::size_t n = indices.size(), k = h.channels, hw = static_cast<std::size_t>(h.height) * h.width;
  Batch b{Tensor({n, 3, h.height, h.width}), Tensor({n, k, h.height, h.width}), {}};
  std::vector<std::vector<MaskSet>> per_scale(model_.num_scales);
  for (std::size_t i = 0; i < n; ++i) {
    const Example& ex = data.examples.at(indices[i]);
    for (std::size_t j = 0; j < 3 * hw; ++j) b.images[i * 3 * hw + j] = ex.image[j];
    for (std::size_t j = 0; j < k * hw; ++j) b.semantics[i * k * hw + j] = ex.semantics.data[j];
    for (std::size_t s = 0; s < model_.num_scales; ++s) {
      const std::size_t f = std::size_t{16} << s;
      per_scale[s].push_back(make_masks(ex.semantics, h.height / f, h.width / f, model_.masks));
    }
  }
  for (auto& ms : per_scale) b.masks.push_back(stack_masks(ms, model_.disc.adv_channels()));
  return b;
}

DiscLoss Trainer::disc_loss(ad::Tape& tape, const Batch& batch, const Tensor& fake, bool include_real) {
  const LossWeights& w = train_.weights;
  Var real = tape.constant(batch.images);
  Var fk = tape.constant(fake);
  const auto out_f = disc_.forward(tape, fk, true, !train_.detach_aux_on_fake);
  const AdvLoss a_fake = multiscale_adv(out_f, batch.masks, AdvRole::kDiscFake, train_.adv_form);
  DiscLoss l;
  l.diag.adv_fake = a_fake.value.value().item();
  l.diag.void_branches = a_fake.void_branches;
  if (!include_real) {
    l.total = a_fake.value;
    l.diag.adv = l.diag.adv_fake;
  } else {
    const auto out_r = disc_.forward(tape, real);
    const AdvLoss a_real = multiscale_adv(out_r, batch.masks, AdvRole::kDiscReal, train_.adv_form);
    Var adv = a_real.value + a_fake.value;
    const std::optional<Var> sem = sem_loss(out_r, batch);
    const std::optional<Var> rec = rec_loss(out_r, real);
    l.total = discriminator_total(adv, sem, rec, w);
    l.diag.adv_real = a_real.value.value().item();
    l.diag.adv = adv.value().item();
    l.diag.sem = item_or_zero(sem);
    l.diag.rec = item_or_zero(rec);
    l.diag.void_branches += a_real.void_branches;
  }
  if (train_.leak_aux_on_fake) l.total = with_fake_aux(l.total, out_f, fk, batch);
  l.diag.total = l.total.value().item();
  return l;
}

DiscDiagnostics Trainer::disc_step(const Batch& batch, const Tensor& fake, double lr, bool include_real) {
  disc_.zero_grad();
  ad::Tape tape;
  const DiscLoss l = disc_loss(tape, batch, fake, include_real);
  tape.backward(l.total);
  adam_step(parameter_ptrs(disc_), opt_d_, lr, train_.beta1, train_.beta2, train_.eps);
  return l.diag;
}

std::optional<Var> Trainer::sem_loss(const std::vector<DiscOutputs>& outs, const Batch& batch) const {
  return scale_mean(outs, [&](const DiscOutputs& o) -> std::optional<Var> {
    if (!o.sem.valid()) return std::nullopt;
    return semantic_matching_loss(o.sem, batch.semantics, model_.mode);
  });
}

std::optional<Var> Trainer::rec_loss(const std::vector<DiscOutputs>& outs, Var target) const {
  return scale_mean(outs, [&](const DiscOutputs& o) -> std::optional<Var> {
    if (!o.rec.valid()) return std::nullopt;
    return reconstruction_loss(o.rec, target);
  });
}

Var Trainer::with_fake_aux(Var total, const std::vector<DiscOutputs>& out_f, Var fake, const Batch& batch) const {
  const LossWeights& w = train_.weights;
  if (auto s = sem_loss(out_f, batch); s && w.lambda_s > 0) total = total + ad::scale(*s, w.lambda_s);
  if (auto r = rec_loss(out_f, fake); r && w.lambda_r > 0) total = total + ad::scale(*r, w.lambda_r);
  return total;
}

GenLoss Trainer::gen_loss(ad::Tape& tape, Var fake, const Batch& batch, Phase phase) {
  const LossWeights& w = train_.weights;
  const auto out_f = disc_.forward(tape, fake, /*trainable=*/false);
  GenTerms terms;
  terms.adv = multiscale_adv(out_f, batch.masks, AdvRole::kGenFake, train_.adv_form).value;
  terms.sem = sem_loss(out_f, batch);
  if (train_.gen_rec_on_fake) terms.rec = rec_loss(out_f, fake);
  Var real = tape.constant(batch.images);
  if (train_.feature_matching && w.lambda_fm > 0) {
    const auto out_r = disc_.forward(tape, real, /*trainable=*/false);
    std::vector<Var> ff, rf;
    for (std::size_t s = 0; s < out_f.size(); ++s) {
      ff.insert(ff.end(), out_f[s].trunk_feats.begin(), out_f[s].trunk_feats.end());
      rf.insert(rf.end(), out_r[s].trunk_feats.begin(), out_r[s].trunk_feats.end());
    }
    terms.fm = feature_matching_loss(ff, rf);
  }
  if (train_.perceptual && w.lambda_perc > 0) terms.perc = perceptual_loss(perc_net_, fake, real);

  GenLoss l;
  l.total = generator_total(terms, w, phase);
  l.diag.total = l.total.value().item();
  l.diag.adv = terms.adv.value().item();
  l.diag.sem = item_or_zero(terms.sem);
  l.diag.rec = item_or_zero(terms.rec);
  l.diag.fm = item_or_zero(terms.fm);
  l.diag.perc = item_or_zero(terms.perc);
  l.diag.phase = phase;
  return l;
}

GenDiagnostics Trainer::gen_update(ad::Tape& tape, Var fake, const Batch& batch, double lr, Phase phase) {
  gen_.zero_grad();
  const GenLoss l = gen_loss(tape, fake, batch, phase);
  tape.backward(l.total);
  adam_step(parameter_ptrs(gen_), opt_g_, lr, train_.beta1, train_.beta2, train_.eps);
  return l.diag;
}

GenDiagnostics Trainer::gen_step(const Batch& batch, double lr, Phase phase) {
  ad::Tape tape;
  Var fake = gen_.forward(tape, tape.constant(batch.semantics));
  return gen_update(tape, fake, batch, lr, phase);
}

StepRecord Trainer::step(const Batch& batch, std::size_t epoch) {
  StepRecord r;
  r.step = step_;
  r.epoch = epoch;
  r.lr = lr_schedule(epoch, train_);
  const Phase phase = epoch < train_.warmup_epochs ? Phase::kWarmup : Phase::kFull;
  try {
    ad::Tape tape;
    Var fake = gen_.forward(tape, tape.constant(batch.semantics));
    r.d = disc_step(batch, fake.value(), r.lr);
    if (before_gen_step) before_gen_step(*this);
    r.g = gen_update(tape, fake, batch, r.lr, phase);
    if (after_gen_step) after_gen_step(*this);
  } catch (const NumericError& e) {
    throw TrainingAborted("training aborted at step " + std::to_string(step_) + " (epoch " + std::to_string(epoch) +
                              "): " + e.what(),
                          step_, epoch);
  }
  ++step_;
  return r;
}

std::vector<std::size_t> Trainer::epoch_order(std::size_t epoch, std::size_t count) const {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(train_.seed, 1000 + epoch));
  for (std::size_t i = count; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

TrainResult Trainer::train(const Dataset& data, std::ostream* csv, const std::filesystem::path& out_dir) {
  if (data.examples.empty()) throw ValidationError("train: empty dataset");
  TrainResult result;
  if (csv) *csv << csv_header() << "\n";
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  const std::size_t n = data.examples.size(), bs = train_.batch_size;
  for (std::size_t epoch = 0; epoch < train_.epochs; ++epoch) {
    const auto order = epoch_order(epoch, n);
    bool stop = false;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<long>(start),
                                         order.begin() + static_cast<long>(std::min(n, start + bs)));
      const StepRecord rec = step(make_batch(data, idx), epoch);
      if (csv) *csv << csv_row(rec) << "\n";
      result.log.push_back(rec);
      if (train_.max_steps && step_ >= train_.max_steps) {
        stop = true;
        break;
      }
    }
    const bool last = stop || epoch + 1 == train_.epochs;
    if (!out_dir.empty() && (last || (train_.checkpoint_every && (epoch + 1) % train_.checkpoint_every == 0))) {
      char name[32];
      std::snprintf(name, sizeof name, "ckpt_e%03zu.sdc", epoch + 1);
      const auto path = out_dir / name;
      write_checkpoint(path, checkpoint(epoch + 1));
      result.checkpoints.push_back(path);
    }
    if (stop) break;
  }
  if (csv) csv->flush();
  return result;
}

Checkpoint Trainer::checkpoint(std::size_t epoch) const {
  Checkpoint ck;
  ck.meta = config_json(model_, train_, epoch, step_);
  append_parameters(ck.params, gen_.parameters(), "G.");
  for (std::size_t i = 0; i < disc_.num_scales(); ++i)
    append_parameters(ck.params, disc_.scale(i).parameters(), "D" + std::to_string(i) + ".");
  return ck;
}

// ---------------------------------------------------------------------------

std::string config_json(const ModelConfig& m, const TrainConfig& t, std::size_t epoch, std::size_t step) {
  json j;
  j["model"] = {
      {"mode", std::string(to_string(m.mode))},
      {"height", m.height},
      {"width", m.width},
      {"generator", {{"in_channels", m.generator.in_channels}, {"base_width", m.generator.base_width},
                     {"res_blocks", m.generator.res_blocks}}},
      {"disc", {{"classes", m.disc.classes}, {"coarse_to_fine", m.disc.coarse_to_fine},
                {"semantic_head", m.disc.semantic_head}, {"reconstruction_head", m.disc.reconstruction_head},
                {"widths", m.disc.widths}, {"extra_last", m.disc.extra_last}}},
      {"num_scales", m.num_scales},
      {"mask_sigma", m.masks.sigma},
      {"mask_sigma_is_variance", m.masks.convention == SigmaConvention::kVariance},
  };
  j["train"] = {
      {"lr0", t.lr0}, {"beta1", t.beta1}, {"beta2", t.beta2}, {"eps", t.eps},
      {"epochs", t.epochs}, {"warmup_epochs", t.warmup_epochs}, {"batch_size", t.batch_size},
      {"adv_form", std::string(to_string(t.adv_form))},
      {"lambda_s", t.weights.lambda_s}, {"lambda_r", t.weights.lambda_r},
      {"lambda_fm", t.weights.lambda_fm}, {"lambda_perc", t.weights.lambda_perc},
      {"perceptual", t.perceptual}, {"feature_matching", t.feature_matching},
      {"gen_rec_on_fake", t.gen_rec_on_fake}, {"seed", t.seed},
  };
  j["epoch"] = epoch;
  j["step"] = step;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  try {
    const json j = json::parse(text).at("model");
    ModelConfig m;
    m.mode = parse_mode(j.at("mode").get<std::string>());
    m.height = j.at("height");
    m.width = j.at("width");
    const json& g = j.at("generator");
    m.generator = {g.at("in_channels"), g.at("base_width"), g.at("res_blocks")};
    const json& d = j.at("disc");
    m.disc.classes = d.at("classes");
    m.disc.coarse_to_fine = d.at("coarse_to_fine");
    m.disc.semantic_head = d.at("semantic_head");
    m.disc.reconstruction_head = d.at("reconstruction_head");
    m.disc.widths = d.at("widths").get<std::vector<std::size_t>>();
    m.disc.extra_last = d.at("extra_last");
    m.num_scales = j.at("num_scales");
    m.masks.sigma = j.at("mask_sigma");
    m.masks.convention = j.at("mask_sigma_is_variance").get<bool>() ? SigmaConvention::kVariance : SigmaConvention::kStdDev;
    return m;
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::kFormat, std::string("checkpoint metadata: ") + e.what());
  }
}

LoadedModels load_models(const Checkpoint& ckpt) {
  LoadedModels lm;
  lm.config = model_config_from_json(ckpt.meta);
  lm.generator = Generator(lm.config.generator, 0);
  load_parameters(lm.generator.parameters(), ckpt.params, "G.");
  lm.discriminator = MultiScaleDisc(lm.config.disc, lm.config.num_scales, 0);
  for (std::size_t i = 0; i < lm.config.num_scales; ++i)
    load_parameters(lm.discriminator.scale(i).parameters(), ckpt.params, "D" + std::to_string(i) + ".");
  return lm;
}

// ---------------------------------------------------------------------------

Variant parse_variant(std::string_view name) {
  Variant v;
  v.name = std::string(name);
  std::string_view base = name;
  constexpr std::string_view kNoPerc = "-noperc";
  if (base.size() > kNoPerc.size() && base.substr(base.size() - kNoPerc.size()) == kNoPerc) {
    v.perceptual = false;
    base.remove_suffix(kNoPerc.size());
  }
  if (base == "baseline") return v;
  if (base == "baseline+10%" || base == "wide") {
    v.widened = true;
    return v;
  }
  if (base == "full") base = "c2f+sem+rec";
  if (base == "sem") v.semantic = true;
  else if (base == "sem+rec") v.semantic = v.reconstruction = true;
  else if (base == "c2f") v.coarse_to_fine = true;
  else if (base == "c2f+sem") v.coarse_to_fine = v.semantic = true;
  else if (base == "c2f+sem+rec") v.coarse_to_fine = v.semantic = v.reconstruction = true;
  else {
    throw ValidationError("unknown variant '" + std::string(name) +
                          "' (expected baseline, sem, sem+rec, c2f, c2f+sem, c2f+sem+rec, full, baseline+10%, "
                          "optionally with -noperc)");
  }
  return v;
}

void apply_variant(const Variant& v, ModelConfig& model, TrainConfig& train) {
  model.disc.coarse_to_fine = v.coarse_to_fine;
  model.disc.semantic_head = v.semantic;
  model.disc.reconstruction_head = v.reconstruction;
  model.disc.extra_last = 0;
  if (v.widened) {
    DiscSpec full = model.disc;
    full.coarse_to_fine = full.semantic_head = full.reconstruction_head = true;
    model.disc.extra_last = matching_extra_width(full, model.num_scales);
  }
  if (!v.semantic) train.weights.lambda_s = 0.0;
  if (!v.reconstruction) train.weights.lambda_r = 0.0;
  train.perceptual = v.perceptual;
}

}  // namespace semdisc
