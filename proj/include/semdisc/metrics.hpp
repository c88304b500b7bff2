#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "semdisc/dataset_io.hpp"
#include "semdisc/models.hpp"
#include "semdisc/trainer.hpp"

namespace semdisc {

struct SegScores {
  double miou = 0.0;
  double pixel_acc = 0.0;
  double class_acc = 0.0;
};

// Row = truth, column = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes) : c_(classes), counts_(classes * classes, 0) {}
  void add(std::span<const int> pred, std::span<const int> truth);
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * c_ + pred]; }
  std::size_t classes() const { return c_; }
  // Classes absent from both prediction and truth are left out of the means.
  SegScores scores() const;

 private:
  std::size_t c_;
  std::vector<std::uint64_t> counts_;
};

SegScores seg_scores(std::span<const int> pred, std::span<const int> truth, std::size_t classes);

struct FrechetStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Sample mean and unbiased covariance of the rows.
FrechetStats frechet_stats(const std::vector<std::vector<double>>& rows);

// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}). The square-root trace
// comes from the eigenvalues of the symmetric S_a^{1/2} S_b S_a^{1/2}. When a
// covariance is near-singular both get +eps*I first.
double frechet_distance(const FrechetStats& a, const FrechetStats& b, double eps = 1e-6);

// Small encoder-decoder predicting class logits (scene) or keypoint
// heatmap logits from an image.
class ProbeNet : public Module {
 public:
  ProbeNet() = default;
  ProbeNet(std::size_t outputs, std::uint64_t seed);
  ad::Var forward(ad::Tape& tape, ad::Var x, bool trainable = true);
  std::size_t outputs() const { return outputs_; }

 private:
  std::size_t outputs_ = 0;
  Conv c0_, c1_, c2_, c3_, head_;
};

struct ProbeConfig {
  std::size_t epochs = 6;
  std::size_t batch_size = 16;
  double lr = 2e-3;
  std::uint64_t seed = 7;
};

struct Probe {
  SemanticMode mode = SemanticMode::kScene;
  ProbeNet net;
  double validation_score = 0.0;  // mIoU (scene) or localization accuracy (keypoint)
  SegScores validation;
  bool accepted = false;
};

inline constexpr double kProbeAcceptMiou = 0.9;
inline constexpr double kKeypointRadius = 3.0;  // pixels, for the localization score

// Trains on real pairs only, then scores on `heldout`.
Probe train_probe(const Dataset& train, const Dataset& heldout, const ProbeConfig& cfg = {});
void save_probe(const std::filesystem::path& path, const Probe& probe);
Probe load_probe(const std::filesystem::path& path);

// Per-pixel class predictions for [N,3,H,W] images.
std::vector<int> probe_labels(ProbeNet& net, const Tensor& images);
// Per-keypoint (row, col) argmax predictions, [N][K].
std::vector<std::vector<std::pair<std::size_t, std::size_t>>> probe_keypoints(ProbeNet& net, const Tensor& images);

struct EvalReport {
  SemanticMode mode = SemanticMode::kScene;
  std::size_t count = 0;
  SegScores seg;                 // scene mode
  double keypoint_score = 0.0;   // keypoint mode: fraction of present joints within kKeypointRadius
  double frechet = 0.0;
};

Tensor dataset_images(const Dataset& data);
Tensor dataset_semantics(const Dataset& data);
Tensor generate_images(Generator& g, const Tensor& semantics, std::size_t batch = 32);

// Scores `images` against the semantics of `data`; the Frechet distance is
// between `images` and the real images of `data`.
EvalReport evaluate_images(const Tensor& images, const Dataset& data, Probe& probe, FeatNet& featnet);
EvalReport evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& data, Probe& probe, FeatNet& featnet);

std::string report_json(const EvalReport& r);

struct AblationRun {
  std::string variant;
  std::uint64_t seed = 0;
  std::size_t disc_params = 0;
  EvalReport report;
  double seconds = 0.0;
};

struct AblationSummary {
  std::string variant;
  std::size_t runs = 0;
  std::size_t disc_params = 0;
  double miou_mean = 0.0, miou_std = 0.0;
  double pixel_mean = 0.0, class_mean = 0.0;
  double keypoint_mean = 0.0;
  double frechet_mean = 0.0, frechet_std = 0.0;
};

struct AblationConfig {
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  TrainConfig train;
  GeneratorSpec generator;             // in_channels is taken from the data
  std::vector<std::size_t> disc_widths = {16, 32, 64, 128};
  std::size_t num_scales = 2;
  std::filesystem::path out_dir;       // per-run logs and checkpoints when set
};

// Trains every variant with every seed and evaluates on `test`.
std::vector<AblationRun> ablation_grid(const Dataset& train, const Dataset& test, Probe& probe,
                                       const AblationConfig& cfg, std::ostream* progress = nullptr);
std::vector<AblationSummary> summarize_runs(const std::vector<AblationRun>& runs);
std::string runs_csv(const std::vector<AblationRun>& runs);
std::string summary_csv(const std::vector<AblationSummary>& rows);

// Pooled standard deviation of two groups of per-seed values.
double pooled_std(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace semdisc
