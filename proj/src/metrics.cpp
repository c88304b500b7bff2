#include "semdisc/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "semdisc/error.hpp"
#include "semdisc/rng.hpp"

namespace semdisc {

using ad::Var;
using json = nlohmann::json;

void ConfusionMatrix::add(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw ShapeError("seg_scores: prediction and truth sizes differ");
  const int c = static_cast<int>(c_);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= c || truth[i] < 0 || truth[i] >= c) {
      throw ValidationError("seg_scores: label out of range [0, " + std::to_string(c_) + ") at pixel " +
                            std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < pred.size(); ++i) ++counts_[static_cast<std::size_t>(truth[i]) * c_ + pred[i]];
}

SegScores ConfusionMatrix::scores() const {
  std::uint64_t total = 0, diag = 0;
  double iou_sum = 0.0, recall_sum = 0.0;
  std::size_t iou_n = 0, recall_n = 0;
  for (std::size_t k = 0; k < c_; ++k) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < c_; ++j) {
      row += at(k, j);
      col += at(j, k);
    }
    const std::uint64_t tp = at(k, k);
    total += row;
    diag += tp;
    if (row + col > 0) {
      iou_sum += static_cast<double>(tp) / static_cast<double>(row + col - tp);
      ++iou_n;
    }
    if (row > 0) {
      recall_sum += static_cast<double>(tp) / static_cast<double>(row);
      ++recall_n;
    }
  }
  SegScores s;
  if (total == 0) return s;
  s.pixel_acc = static_cast<double>(diag) / static_cast<double>(total);
  s.miou = iou_n ? iou_sum / static_cast<double>(iou_n) : 0.0;
  s.class_acc = recall_n ? recall_sum / static_cast<double>(recall_n) : 0.0;
  return s;
}

SegScores seg_scores(std::span<const int> pred, std::span<const int> truth, std::size_t classes) {
  if (classes == 0) throw ValidationError("seg_scores: need at least one class");
  ConfusionMatrix cm(classes);
  cm.add(pred, truth);
  return cm.scores();
}

// ---------------------------------------------------------------------------

FrechetStats frechet_stats(const std::vector<std::vector<double>>& rows) {
  if (rows.size() < 2) throw ValidationError("frechet_stats: need at least two samples");
  const std::size_t d = rows.front().size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) throw ShapeError("frechet_stats: rows have different dimensions");
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  FrechetStats s;
  s.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - s.mean.transpose();
  s.cov = centered.transpose() * centered / static_cast<double>(rows.size() - 1);
  return s;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double tol, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericError(std::string("frechet_distance: eigensolver failed on ") + what);
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -tol) throw NumericError(std::string("frechet_distance: ") + what + " is not positive semi-definite");
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

}  // namespace

double frechet_distance(const FrechetStats& a, const FrechetStats& b, double eps) {
  const Eigen::Index d = a.mean.size();
  if (b.mean.size() != d || a.cov.rows() != d || a.cov.cols() != d || b.cov.rows() != d || b.cov.cols() != d) {
    throw ShapeError("frechet_distance: feature dimensions differ");
  }
  if (d == 0) throw ShapeError("frechet_distance: empty statistics");
  Eigen::MatrixXd sa = 0.5 * (a.cov + a.cov.transpose());
  Eigen::MatrixXd sb = 0.5 * (b.cov + b.cov.transpose());
  if (std::min(min_eigenvalue(sa), min_eigenvalue(sb)) < eps) {
    sa += eps * Eigen::MatrixXd::Identity(d, d);
    sb += eps * Eigen::MatrixXd::Identity(d, d);
  }
  const double tol = 1e-10 * std::max({1.0, sa.diagonal().maxCoeff(), sb.diagonal().maxCoeff()});
  const Eigen::MatrixXd ra = psd_sqrt(sa, tol, "covariance");
  Eigen::MatrixXd inner = ra * sb * ra;
  inner = 0.5 * (inner + inner.transpose());
  const double inner_tol = 1e-10 * std::max(1.0, inner.diagonal().maxCoeff());
  const Eigen::MatrixXd root = psd_sqrt(inner, inner_tol, "covariance product");
  const double dist = (a.mean - b.mean).squaredNorm() + sa.trace() + sb.trace() - 2.0 * root.trace();
  return std::max(dist, 0.0);
}

// ---------------------------------------------------------------------------

ProbeNet::ProbeNet(std::size_t outputs, std::uint64_t seed) : outputs_(outputs) {
  if (outputs == 0) throw ValidationError("probe: need at least one output channel");
  Rng rng(seed);
  c0_ = add_conv("c0", 3, 16, 3, 1, 1, rng, Init::kHe);
  c1_ = add_conv("c1", 16, 32, 4, 2, 1, rng, Init::kHe);
  c2_ = add_conv("c2", 32, 32, 3, 1, 1, rng, Init::kHe);
  c3_ = add_conv("c3", 48, 16, 3, 1, 1, rng, Init::kHe);
  head_ = add_conv("head", 16, outputs, 1, 1, 0, rng, Init::kHe);
}

Var ProbeNet::forward(ad::Tape& tape, Var x, bool trainable) {
  if (x.shape().size() != 4 || x.shape()[2] % 2 || x.shape()[3] % 2) {
    throw ShapeError("probe: expected [N,3,H,W] with even H and W");
  }
  Var f0 = ad::relu(apply(tape, x, c0_, trainable));
  Var f1 = ad::relu(apply(tape, f0, c1_, trainable));
  f1 = ad::relu(apply(tape, f1, c2_, trainable));
  Var up = ad::nearest_upsample(f1, 2, 2);
  Var f = ad::relu(apply(tape, ad::concat_channels({up, f0}), c3_, trainable));
  return apply(tape, f, head_, trainable);
}

// ---------------------------------------------------------------------------

namespace {

Tensor gather(const Dataset& data, const std::vector<std::size_t>& idx, bool images) {
  const auto& h = data.header;
  const std::size_t c = images ? 3 : h.channels, hw = static_cast<std::size_t>(h.height) * h.width;
  Tensor t({idx.size(), c, h.height, h.width});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Example& ex = data.examples.at(idx[i]);
    const auto& src = images ? ex.image : ex.semantics.data;
    for (std::size_t j = 0; j < c * hw; ++j) t[i * c * hw + j] = src[j];
  }
  return t;
}

std::vector<std::size_t> all_indices(const Dataset& data) {
  std::vector<std::size_t> idx(data.examples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

Tensor slice_batch(const Tensor& t, std::size_t begin, std::size_t count) {
  const std::size_t per = t.size() / t.dim(0);
  Tensor out({count, t.dim(1), t.dim(2), t.dim(3)});
  std::copy(t.data().begin() + static_cast<long>(begin * per), t.data().begin() + static_cast<long>((begin + count) * per),
            out.data().begin());
  return out;
}

template <typename Fn>
void for_batches(std::size_t n, std::size_t batch, Fn fn) {
  for (std::size_t b = 0; b < n; b += batch) fn(b, std::min(batch, n - b));
}

Tensor probe_logits(ProbeNet& net, const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != 3) throw ShapeError("probe: expected [N,3,H,W] images");
  Tensor out({images.dim(0), net.outputs(), images.dim(2), images.dim(3)});
  const std::size_t per = out.size() / out.dim(0);
  for_batches(images.dim(0), 32, [&](std::size_t b, std::size_t n) {
    ad::Tape tape;
    Var y = net.forward(tape, tape.constant(slice_batch(images, b, n)), false);
    std::copy(y.value().data().begin(), y.value().data().end(), out.data().begin() + static_cast<long>(b * per));
  });
  return out;
}

std::vector<int> truth_labels(const Dataset& data) {
  std::vector<int> labels;
  for (const Example& ex : data.examples) {
    const auto l = class_labels(ex.semantics);
    labels.insert(labels.end(), l.begin(), l.end());
  }
  return labels;
}

double keypoint_score(const Dataset& data,
                      const std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& pred) {
  std::size_t present = 0, hits = 0;
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    const auto truth = keypoint_locations(data.examples[i].semantics);
    for (std::size_t k = 0; k < truth.size(); ++k) {
      if (!truth[k]) continue;
      ++present;
      const double dy = static_cast<double>(pred[i][k].first) - static_cast<double>(truth[k]->first);
      const double dx = static_cast<double>(pred[i][k].second) - static_cast<double>(truth[k]->second);
      if (dy * dy + dx * dx <= kKeypointRadius * kKeypointRadius) ++hits;
    }
  }
  return present ? static_cast<double>(hits) / static_cast<double>(present) : 0.0;
}

void score_probe(Probe& p, const Dataset& heldout) {
  const Tensor images = dataset_images(heldout);
  if (p.mode == SemanticMode::kScene) {
    p.validation = seg_scores(probe_labels(p.net, images), truth_labels(heldout), heldout.header.channels);
    p.validation_score = p.validation.miou;
  } else {
    p.validation = {};
    p.validation_score = keypoint_score(heldout, probe_keypoints(p.net, images));
  }
  p.accepted = p.validation_score >= kProbeAcceptMiou;
}

}  // namespace

Tensor dataset_images(const Dataset& data) { return gather(data, all_indices(data), true); }
Tensor dataset_semantics(const Dataset& data) { return gather(data, all_indices(data), false); }

std::vector<int> probe_labels(ProbeNet& net, const Tensor& images) {
  const Tensor logits = probe_logits(net, images);
  const std::size_t n = logits.dim(0), c = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  std::vector<int> labels(n * hw, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < hw; ++p) {
      double best = logits[i * c * hw + p];
      for (std::size_t k = 1; k < c; ++k) {
        const double v = logits[(i * c + k) * hw + p];
        if (v > best) {
          best = v;
          labels[i * hw + p] = static_cast<int>(k);
        }
      }
    }
  return labels;
}

std::vector<std::vector<std::pair<std::size_t, std::size_t>>> probe_keypoints(ProbeNet& net, const Tensor& images) {
  const Tensor logits = probe_logits(net, images);
  const std::size_t n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> out(n, std::vector<std::pair<std::size_t, std::size_t>>(c));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) {
      const double* m = logits.data().data() + (i * c + k) * h * w;
      const std::size_t best = static_cast<std::size_t>(std::max_element(m, m + h * w) - m);
      out[i][k] = {best / w, best % w};
    }
  return out;
}

Probe train_probe(const Dataset& train, const Dataset& heldout, const ProbeConfig& cfg) {
  const auto& h = train.header;
  if (heldout.header.mode != h.mode || heldout.header.channels != h.channels || heldout.header.height != h.height ||
      heldout.header.width != h.width) {
    throw ValidationError("probe: training and held-out datasets differ in geometry");
  }
  if (train.examples.empty() || heldout.examples.empty()) throw ValidationError("probe: empty dataset");
  if (cfg.batch_size == 0 || cfg.epochs == 0) throw ValidationError("probe: batch size and epochs must be positive");

  Probe p;
  p.mode = h.mode;
  p.net = ProbeNet(h.channels, mix_seed(cfg.seed, 0));
  std::vector<ad::Parameter*> params;
  for (auto& q : p.net.parameters()) params.push_back(&q);
  AdamState opt;
  const std::size_t n = train.examples.size();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = all_indices(train);
    Rng rng(mix_seed(cfg.seed, 1000 + epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.next_u64() % i]);
    for_batches(n, cfg.batch_size, [&](std::size_t b, std::size_t count) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<long>(b), order.begin() + static_cast<long>(b + count));
      const Tensor target = gather(train, idx, false);
      p.net.zero_grad();
      ad::Tape tape;
      Var logits = p.net.forward(tape, tape.constant(gather(train, idx, true)));
      Var loss = h.mode == SemanticMode::kScene ? ad::mean(ad::softmax_cross_entropy(logits, target))
                                                : ad::mean(ad::sigmoid_bce(logits, target));
      tape.backward(loss);
      adam_step(params, opt, cfg.lr, 0.9, 0.999);
    });
  }
  score_probe(p, heldout);
  return p;
}

void save_probe(const std::filesystem::path& path, const Probe& probe) {
  json meta = {{"kind", "probe"},
               {"mode", std::string(to_string(probe.mode))},
               {"outputs", probe.net.outputs()},
               {"validation_score", probe.validation_score},
               {"miou", probe.validation.miou},
               {"pixel_acc", probe.validation.pixel_acc},
               {"class_acc", probe.validation.class_acc},
               {"accepted", probe.accepted}};
  Checkpoint c{meta.dump(), {}};
  append_parameters(c.params, probe.net.parameters(), "P.");
  write_checkpoint(path, c);
}

Probe load_probe(const std::filesystem::path& path) {
  const Checkpoint c = read_checkpoint(path);
  json meta;
  try {
    meta = json::parse(c.meta);
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::kFormat, path.string() + ": probe metadata is not valid JSON: " + e.what());
  }
  if (meta.value("kind", "") != "probe") throw IoError(IoError::Kind::kFormat, path.string() + ": not a probe file");
  Probe p;
  try {
    p.mode = parse_mode(meta.at("mode").get<std::string>());
    p.net = ProbeNet(meta.at("outputs").get<std::size_t>(), 0);
    p.validation_score = meta.at("validation_score").get<double>();
    p.validation = {meta.at("miou").get<double>(), meta.at("pixel_acc").get<double>(),
                    meta.at("class_acc").get<double>()};
    p.accepted = meta.at("accepted").get<bool>();
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::kFormat, path.string() + ": incomplete probe metadata: " + e.what());
  }
  load_parameters(p.net.parameters(), c.params, "P.");
  return p;
}

// ---------------------------------------------------------------------------

Tensor generate_images(Generator& g, const Tensor& semantics, std::size_t batch) {
  if (batch == 0) throw ValidationError("generate_images: batch must be positive");
  Tensor out({semantics.dim(0), 3, semantics.dim(2), semantics.dim(3)});
  const std::size_t per = out.size() / std::max<std::size_t>(out.dim(0), 1);
  for_batches(semantics.dim(0), batch, [&](std::size_t b, std::size_t n) {
    ad::Tape tape;
    Var y = g.forward(tape, tape.constant(slice_batch(semantics, b, n)), false);
    std::copy(y.value().data().begin(), y.value().data().end(), out.data().begin() + static_cast<long>(b * per));
  });
  return out;
}

EvalReport evaluate_images(const Tensor& images, const Dataset& data, Probe& probe, FeatNet& featnet) {
  const auto& h = data.header;
  if (probe.mode != h.mode) throw ValidationError("evaluate: probe mode does not match the dataset mode");
  if (images.rank() != 4 || images.dim(0) != data.examples.size() || images.dim(1) != 3 || images.dim(2) != h.height ||
      images.dim(3) != h.width) {
    throw ShapeError("evaluate: images " + to_string(images.shape()) + " do not match the dataset");
  }
  if (probe.net.outputs() != h.channels) throw ValidationError("evaluate: probe outputs do not match the dataset");
  EvalReport r;
  r.mode = h.mode;
  r.count = data.examples.size();
  if (h.mode == SemanticMode::kScene) {
    r.seg = seg_scores(probe_labels(probe.net, images), truth_labels(data), h.channels);
  } else {
    r.keypoint_score = keypoint_score(data, probe_keypoints(probe.net, images));
  }
  std::vector<std::vector<double>> fake_rows, real_rows;
  const Tensor real = dataset_images(data);
  for_batches(r.count, 64, [&](std::size_t b, std::size_t n) {
    for (auto& row : featnet.pooled_features(slice_batch(images, b, n))) fake_rows.push_back(std::move(row));
    for (auto& row : featnet.pooled_features(slice_batch(real, b, n))) real_rows.push_back(std::move(row));
  });
  r.frechet = frechet_distance(frechet_stats(fake_rows), frechet_stats(real_rows));
  return r;
}

EvalReport evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& data, Probe& probe, FeatNet& featnet) {
  LoadedModels m = load_models(ckpt);
  const auto& h = data.header;
  if (m.config.mode != h.mode) throw ValidationError("evaluate: checkpoint mode does not match the dataset mode");
  if (m.config.classes() != h.channels || m.config.height != h.height || m.config.width != h.width) {
    throw ValidationError("evaluate: checkpoint geometry does not match the dataset");
  }
  return evaluate_images(generate_images(m.generator, dataset_semantics(data)), data, probe, featnet);
}

std::string report_json(const EvalReport& r) {
  json j = {{"mode", std::string(to_string(r.mode))}, {"count", r.count}, {"frechet", r.frechet}};
  if (r.mode == SemanticMode::kScene) {
    j["miou"] = r.seg.miou;
    j["pixel_acc"] = r.seg.pixel_acc;
    j["class_acc"] = r.seg.class_acc;
  } else {
    j["keypoint_score"] = r.keypoint_score;
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------

std::vector<AblationRun> ablation_grid(const Dataset& train, const Dataset& test, Probe& probe,
                                       const AblationConfig& cfg, std::ostream* progress) {
  if (cfg.variants.empty()) throw ValidationError("ablate: no variants requested");
  if (cfg.seeds.empty()) throw ValidationError("ablate: no seeds requested");
  std::vector<Variant> variants;
  for (const auto& name : cfg.variants) variants.push_back(parse_variant(name));
  const auto& h = train.header;
  FeatNet featnet(kFrechetSeed);
  std::vector<AblationRun> runs;
  for (const Variant& v : variants)
    for (std::uint64_t seed : cfg.seeds) {
      ModelConfig m = default_model_config(h.mode, h.height, h.width, h.channels);
      m.generator = cfg.generator;
      m.generator.in_channels = h.channels;
      m.disc.widths = cfg.disc_widths;
      m.num_scales = cfg.num_scales;
      TrainConfig t = cfg.train;
      t.seed = seed;
      apply_variant(v, m, t);

      const auto t0 = std::chrono::steady_clock::now();
      Trainer trainer(m, t);
      std::filesystem::path dir;
      std::ofstream log;
      if (!cfg.out_dir.empty()) {
        dir = cfg.out_dir / (v.name + "_s" + std::to_string(seed));
        std::filesystem::create_directories(dir);
        log.open(dir / "train_log.csv");
      }
      trainer.train(train, log.is_open() ? &log : nullptr, dir);

      AblationRun run;
      run.variant = v.name;
      run.seed = seed;
      run.disc_params = trainer.discriminator().parameter_count();
      run.report =
          evaluate_images(generate_images(trainer.generator(), dataset_semantics(test)), test, probe, featnet);
      run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (progress) {
        *progress << v.name << " seed " << seed << ": miou " << run.report.seg.miou << " frechet " << run.report.frechet
                  << " (" << run.seconds << " s)" << std::endl;
      }
      runs.push_back(run);
    }
  return runs;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

}  // namespace

std::vector<AblationSummary> summarize_runs(const std::vector<AblationRun>& runs) {
  std::vector<AblationSummary> out;
  std::vector<std::string> names;
  for (const auto& r : runs)
    if (std::find(names.begin(), names.end(), r.variant) == names.end()) names.push_back(r.variant);
  for (const auto& name : names) {
    std::vector<double> miou, pix, cls, kp, fr;
    AblationSummary s;
    s.variant = name;
    for (const auto& r : runs) {
      if (r.variant != name) continue;
      miou.push_back(r.report.seg.miou);
      pix.push_back(r.report.seg.pixel_acc);
      cls.push_back(r.report.seg.class_acc);
      kp.push_back(r.report.keypoint_score);
      fr.push_back(r.report.frechet);
      s.disc_params = r.disc_params;
    }
    s.runs = miou.size();
    std::tie(s.miou_mean, s.miou_std) = mean_std(miou);
    s.pixel_mean = mean_std(pix).first;
    s.class_mean = mean_std(cls).first;
    s.keypoint_mean = mean_std(kp).first;
    std::tie(s.frechet_mean, s.frechet_std) = mean_std(fr);
    out.push_back(s);
  }
  return out;
}

std::string runs_csv(const std::vector<AblationRun>& runs) {
  std::ostringstream os;
  os << "variant,seed,disc_params,miou,pixel_acc,class_acc,keypoint_score,frechet,seconds\n";
  for (const auto& r : runs) {
    os << r.variant << "," << r.seed << "," << r.disc_params << "," << fmt(r.report.seg.miou) << ","
       << fmt(r.report.seg.pixel_acc) << "," << fmt(r.report.seg.class_acc) << "," << fmt(r.report.keypoint_score)
       << "," << fmt(r.report.frechet) << "," << fmt(r.seconds) << "\n";
  }
  return os.str();
}

std::string summary_csv(const std::vector<AblationSummary>& rows) {
  std::ostringstream os;
  os << "variant,runs,disc_params,miou_mean,miou_std,pixel_acc_mean,class_acc_mean,keypoint_mean,frechet_mean,"
        "frechet_std\n";
  for (const auto& s : rows) {
    os << s.variant << "," << s.runs << "," << s.disc_params << "," << fmt(s.miou_mean) << "," << fmt(s.miou_std)
       << "," << fmt(s.pixel_mean) << "," << fmt(s.class_mean) << "," << fmt(s.keypoint_mean) << ","
       << fmt(s.frechet_mean) << "," << fmt(s.frechet_std) << "\n";
  }
  return os.str();
}

double pooled_std(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() + b.size() < 3) throw ValidationError("pooled_std: need at least three values");
  const double sa = mean_std(a).second, sb = mean_std(b).second;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  return std::sqrt(((na - 1.0) * sa * sa + (nb - 1.0) * sb * sb) / (na + nb - 2.0));
}

}  // namespace semdisc
