#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semdisc/dataset_io.hpp"
#include "semdisc/error.hpp"
#include "semdisc/losses.hpp"
#include "semdisc/models.hpp"

namespace semdisc {

struct ModelConfig {
  SemanticMode mode = SemanticMode::kScene;
  std::size_t height = 32;
  std::size_t width = 32;
  GeneratorSpec generator;
  DiscSpec disc;
  std::size_t num_scales = 2;
  MaskOptions masks;

  std::size_t classes() const { return disc.classes; }
};

// Default architecture for a dataset geometry.
ModelConfig default_model_config(SemanticMode mode, std::size_t height, std::size_t width, std::size_t classes);

struct TrainConfig {
  double lr0 = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 40;
  std::size_t warmup_epochs = 20;
  std::size_t batch_size = 16;
  AdvForm adv_form = AdvForm::kHinge;
  LossWeights weights;
  bool perceptual = true;
  bool feature_matching = true;
  bool gen_rec_on_fake = true;  // G's reconstruction-consistency term through D_r
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 10;  // epochs; the last epoch is always saved
  std::size_t max_steps = 0;          // 0 = no limit

  // Diagnostics for routing checks. `detach_aux_on_fake` freezes the
  // semantic and reconstruction heads during D's fake pass (a no-op under
  // correct routing); `leak_aux_on_fake` deliberately adds their losses on
  // fakes to L_D.
  bool detach_aux_on_fake = false;
  bool leak_aux_on_fake = false;

  void validate() const;
};

// lr0 before warmup_epochs, then linear to 0 at epochs.
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::vector<std::size_t> t;  // per-parameter step counts
  std::size_t steps = 0;
};

// One bias-corrected Adam update. Parameters whose has_grad is false are
// skipped entirely (moments and step count untouched). Non-finite gradients
// abort before any parameter is modified.
void adam_step(const std::vector<ad::Parameter*>& params, AdamState& state, double lr, double beta1, double beta2,
               double eps = 1e-8);

struct Batch {
  Tensor images;     // [N,3,H,W]
  Tensor semantics;  // [N,K,H,W]
  std::vector<Tensor> masks;  // per scale, [N,adv_channels,h,w]
};

struct DiscDiagnostics {
  double total = 0.0;
  double adv_real = 0.0;
  double adv_fake = 0.0;
  double adv = 0.0;
  double sem = 0.0;  // on real images
  double rec = 0.0;
  std::size_t void_branches = 0;
};

struct GenDiagnostics {
  double total = 0.0;
  double adv = 0.0;
  double sem = 0.0;
  double rec = 0.0;
  double fm = 0.0;
  double perc = 0.0;
  Phase phase = Phase::kWarmup;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  DiscDiagnostics d;
  GenDiagnostics g;
};

std::string csv_header();
std::string csv_row(const StepRecord& r);

struct DiscLoss {
  ad::Var total;
  DiscDiagnostics diag;
};

struct GenLoss {
  ad::Var total;
  GenDiagnostics diag;
};

class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, std::size_t step, std::size_t epoch)
      : NumericError(what), step_(step), epoch_(epoch) {}
  std::size_t step() const { return step_; }
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t step_, epoch_;
};

struct TrainResult {
  std::vector<StepRecord> log;
  std::vector<std::filesystem::path> checkpoints;
};

class Trainer {
 public:
  Trainer(const ModelConfig& model, const TrainConfig& train);

  Generator& generator() { return gen_; }
  MultiScaleDisc& discriminator() { return disc_; }
  const ModelConfig& model_config() const { return model_; }
  const TrainConfig& train_config() const { return train_; }
  std::size_t steps_done() const { return step_; }

  Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices) const;

  // L_D on real images and the constant `fake`, with D's parameters bound
  // trainable on `tape`.
  DiscLoss disc_loss(ad::Tape& tape, const Batch& batch, const Tensor& fake, bool include_real = true);
  // L_G for a generator output recorded on `tape`; D is bound frozen.
  GenLoss gen_loss(ad::Tape& tape, ad::Var fake, const Batch& batch, Phase phase);

  // D update on real images and detached fakes. With include_real = false
  // only the fake half of the adversarial loss is used.
  DiscDiagnostics disc_step(const Batch& batch, const Tensor& fake, double lr, bool include_real = true);
  // G update with D frozen; runs its own generator forward.
  GenDiagnostics gen_step(const Batch& batch, double lr, Phase phase);
  // One D step then one G step, sharing the generator forward.
  StepRecord step(const Batch& batch, std::size_t epoch);

  // Called around every G update inside step(); used by routing checks.
  std::function<void(Trainer&)> before_gen_step;
  std::function<void(Trainer&)> after_gen_step;

  // Trains for cfg.epochs (or max_steps). Rows go to `csv` when given;
  // checkpoints to `out_dir` when non-empty.
  TrainResult train(const Dataset& data, std::ostream* csv = nullptr, const std::filesystem::path& out_dir = {});

  Checkpoint checkpoint(std::size_t epoch) const;
  std::vector<std::size_t> epoch_order(std::size_t epoch, std::size_t count) const;

 private:
  GenDiagnostics gen_update(ad::Tape& tape, ad::Var fake, const Batch& batch, double lr, Phase phase);
  std::optional<ad::Var> sem_loss(const std::vector<DiscOutputs>& outs, const Batch& batch) const;
  std::optional<ad::Var> rec_loss(const std::vector<DiscOutputs>& outs, ad::Var target) const;
  ad::Var with_fake_aux(ad::Var total, const std::vector<DiscOutputs>& out_f, ad::Var fake, const Batch& batch) const;

  ModelConfig model_;
  TrainConfig train_;
  Generator gen_;
  MultiScaleDisc disc_;
  FeatNet perc_net_;
  AdamState opt_g_, opt_d_;
  std::size_t step_ = 0;
};

std::vector<ad::Parameter*> parameter_ptrs(Module& m);
std::vector<ad::Parameter*> parameter_ptrs(MultiScaleDisc& d);

// Checkpoint metadata round-trip.
std::string config_json(const ModelConfig& model, const TrainConfig& train, std::size_t epoch, std::size_t step);
ModelConfig model_config_from_json(const std::string& json);

// Rebuilds the generator and discriminator stored in a checkpoint.
struct LoadedModels {
  ModelConfig config;
  Generator generator;
  MultiScaleDisc discriminator;
};
LoadedModels load_models(const Checkpoint& ckpt);

// Ablation variants: baseline, sem, sem+rec, c2f, c2f+sem, c2f+sem+rec
// (alias full), baseline+10% (alias wide); "-noperc" turns the perceptual
// term off.
struct Variant {
  std::string name;
  bool coarse_to_fine = false;
  bool semantic = false;
  bool reconstruction = false;
  bool widened = false;
  bool perceptual = true;
};

Variant parse_variant(std::string_view name);
void apply_variant(const Variant& v, ModelConfig& model, TrainConfig& train);

// Fixed seeds of the frozen feature networks.
inline constexpr std::uint64_t kPerceptualSeed = 0x5eed0001;
inline constexpr std::uint64_t kFrechetSeed = 0x5eed0002;

}  // namespace semdisc
