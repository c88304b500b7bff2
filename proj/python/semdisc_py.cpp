#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "semdisc/dataset_io.hpp"
#include "semdisc/losses.hpp"
#include "semdisc/metrics.hpp"
#include "semdisc/trainer.hpp"

namespace py = pybind11;
using namespace semdisc;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array a(shape);
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

py::array_t<float> dataset_array(const Dataset& d, bool images) {
  const auto& h = d.header;
  const std::size_t c = images ? 3 : h.channels, per = c * h.height * h.width;
  py::array_t<float> a({static_cast<py::ssize_t>(d.examples.size()), static_cast<py::ssize_t>(c),
                        static_cast<py::ssize_t>(h.height), static_cast<py::ssize_t>(h.width)});
  float* out = a.mutable_data();
  for (std::size_t i = 0; i < d.examples.size(); ++i) {
    const auto& src = images ? d.examples[i].image : d.examples[i].semantics.data;
    std::copy(src.begin(), src.end(), out + i * per);
  }
  return a;
}

py::dict dataset_dict(const Dataset& d) {
  py::dict out;
  out["mode"] = std::string(to_string(d.header.mode));
  out["images"] = dataset_array(d, true);
  out["semantics"] = dataset_array(d, false);
  return out;
}

double scalar_loss(const Array& adv, const Array& masks, const std::string& role, const std::string& form) {
  AdvRole r;
  if (role == "disc_real") r = AdvRole::kDiscReal;
  else if (role == "disc_fake") r = AdvRole::kDiscFake;
  else if (role == "gen_fake") r = AdvRole::kGenFake;
  else throw ValidationError("unknown role '" + role + "' (expected disc_real, disc_fake or gen_fake)");
  ad::Tape tape;
  return coarse_to_fine_adv(tape.constant(to_tensor(adv)), to_tensor(masks), r, parse_adv_form(form)).value.value().item();
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["mode"] = std::string(to_string(r.mode));
  d["count"] = r.count;
  d["frechet"] = r.frechet;
  if (r.mode == SemanticMode::kScene) {
    d["miou"] = r.seg.miou;
    d["pixel_acc"] = r.seg.pixel_acc;
    d["class_acc"] = r.seg.class_acc;
  } else {
    d["keypoint_score"] = r.keypoint_score;
  }
  return d;
}

std::string train_run(const std::filesystem::path& data, const std::filesystem::path& out, const std::string& variant,
                      std::size_t epochs, std::size_t warmup, std::size_t batch, std::size_t gen_width,
                      std::size_t scales, std::uint64_t seed, std::size_t max_steps) {
  const Dataset ds = read_dataset(data);
  ModelConfig m = default_model_config(ds.header.mode, ds.header.height, ds.header.width, ds.header.channels);
  m.generator.base_width = gen_width;
  m.num_scales = scales;
  TrainConfig t;
  t.epochs = epochs;
  t.warmup_epochs = warmup;
  t.batch_size = batch;
  t.seed = seed;
  t.max_steps = max_steps;
  apply_variant(parse_variant(variant), m, t);
  t.validate();
  Trainer trainer(m, t);
  std::ostringstream csv;
  if (!out.empty()) std::filesystem::create_directories(out);
  {
    py::gil_scoped_release release;
    trainer.train(ds, &csv, out);
  }
  return csv.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Semantic-aware discriminator toolkit";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "generate_dataset",
      [](const std::string& mode, std::size_t n, std::size_t h, std::size_t w, std::size_t channels,
         std::uint64_t seed) {
        const SemanticMode md = parse_mode(mode);
        return dataset_dict(make_dataset(md, h, w, channels, generate_examples({md, n, h, w, channels, seed})));
      },
      py::arg("mode"), py::arg("n"), py::arg("h") = 32, py::arg("w") = 32, py::arg("channels") = 4, py::arg("seed") = 0,
      "Synthetic (image, semantics) pairs as float32 NCHW arrays.");
  m.def(
      "write_dataset",
      [](const std::filesystem::path& path, const std::string& mode, std::size_t n, std::size_t h, std::size_t w,
         std::size_t channels, std::uint64_t seed) {
        const SemanticMode md = parse_mode(mode);
        write_dataset(path, make_dataset(md, h, w, channels, generate_examples({md, n, h, w, channels, seed})));
      },
      py::arg("path"), py::arg("mode"), py::arg("n"), py::arg("h") = 32, py::arg("w") = 32, py::arg("channels") = 4,
      py::arg("seed") = 0);
  m.def("read_dataset", [](const std::filesystem::path& path) { return dataset_dict(read_dataset(path)); },
        py::arg("path"));

  m.def(
      "masks_from_scene",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& s, std::size_t out_h, std::size_t out_w) {
        if (s.ndim() != 3) throw ShapeError("masks_from_scene: expected [K,H,W]");
        SemanticMap map{SemanticMode::kScene, static_cast<std::size_t>(s.shape(0)), static_cast<std::size_t>(s.shape(1)),
                        static_cast<std::size_t>(s.shape(2)), std::vector<float>(s.data(), s.data() + s.size())};
        const MaskSet ms = masks_from_scene(map, out_h, out_w);
        return to_array(Tensor({ms.count, ms.height, ms.width}, ms.data));
      },
      py::arg("semantics"), py::arg("out_h"), py::arg("out_w"), "K+1 gating masks; mask 0 is all ones.");

  m.def("coarse_to_fine_adv", &scalar_loss, py::arg("adv"), py::arg("masks"), py::arg("role"),
        py::arg("form") = "hinge", "Masked K+1-branch adversarial loss for [N,K+1,h,w] maps.");

  m.def(
      "lr_schedule",
      [](std::size_t epoch, std::size_t epochs, std::size_t warmup, double lr0) {
        TrainConfig t;
        t.epochs = epochs;
        t.warmup_epochs = warmup;
        t.lr0 = lr0;
        t.validate();
        return lr_schedule(epoch, t);
      },
      py::arg("epoch"), py::arg("epochs") = 40, py::arg("warmup") = 20, py::arg("lr0") = 2e-4);

  m.def(
      "seg_scores",
      [](const py::array_t<int, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<int, py::array::c_style | py::array::forcecast>& truth, std::size_t classes) {
        const SegScores s = seg_scores(std::span<const int>(pred.data(), static_cast<std::size_t>(pred.size())),
                                       std::span<const int>(truth.data(), static_cast<std::size_t>(truth.size())),
                                       classes);
        py::dict d;
        d["miou"] = s.miou;
        d["pixel_acc"] = s.pixel_acc;
        d["class_acc"] = s.class_acc;
        return d;
      },
      py::arg("pred"), py::arg("truth"), py::arg("classes"));

  m.def(
      "frechet_distance",
      [](const Array& mu_a, const Array& cov_a, const Array& mu_b, const Array& cov_b) {
        auto stats = [](const Array& mu, const Array& cov) {
          if (mu.ndim() != 1 || cov.ndim() != 2) throw ShapeError("frechet_distance: expected a vector and a matrix");
          FrechetStats s;
          s.mean = Eigen::Map<const Eigen::VectorXd>(mu.data(), mu.shape(0));
          s.cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
              cov.data(), cov.shape(0), cov.shape(1));
          return s;
        };
        return frechet_distance(stats(mu_a, cov_a), stats(mu_b, cov_b));
      },
      py::arg("mu_a"), py::arg("cov_a"), py::arg("mu_b"), py::arg("cov_b"));

  m.def("parameter_counts", [](std::size_t classes, const std::string& variant, std::size_t scales) {
    ModelConfig mc = default_model_config(SemanticMode::kScene, 32, 32, classes);
    mc.num_scales = scales;
    TrainConfig t;
    apply_variant(parse_variant(variant), mc, t);
    const ModelSummary s = summarize(mc.generator, mc.disc, scales);
    py::dict d;
    d["generator"] = s.generator;
    d["discriminator"] = s.discriminator;
    d["baseline_discriminator"] = s.baseline_discriminator;
    return d;
  }, py::arg("classes") = 4, py::arg("variant") = "full", py::arg("scales") = 2);

  m.def("train", &train_run, py::arg("data"), py::arg("out") = std::filesystem::path(), py::arg("variant") = "full",
        py::arg("epochs") = 40, py::arg("warmup") = 20, py::arg("batch") = 16, py::arg("gen_width") = 8,
        py::arg("scales") = 2, py::arg("seed") = 0, py::arg("max_steps") = 0,
        "Trains from a dataset file; returns the loss log as CSV text and writes checkpoints to `out` when set.");

  m.def(
      "train_probe",
      [](const std::filesystem::path& train, const std::filesystem::path& heldout, const std::filesystem::path& out,
         std::size_t epochs, std::uint64_t seed) {
        ProbeConfig cfg;
        cfg.epochs = epochs;
        cfg.seed = seed;
        const Probe p = train_probe(read_dataset(train), read_dataset(heldout), cfg);
        save_probe(out, p);
        return py::make_tuple(p.validation_score, p.accepted);
      },
      py::arg("train"), py::arg("heldout"), py::arg("out"), py::arg("epochs") = 6, py::arg("seed") = 7);

  m.def(
      "evaluate_checkpoint",
      [](const std::filesystem::path& ckpt, const std::filesystem::path& data, const std::filesystem::path& probe) {
        Probe p = load_probe(probe);
        FeatNet featnet(kFrechetSeed);
        return report_dict(evaluate_checkpoint(read_checkpoint(ckpt), read_dataset(data), p, featnet));
      },
      py::arg("ckpt"), py::arg("data"), py::arg("probe"));

  m.def(
      "generate_images",
      [](const std::filesystem::path& ckpt, const Array& semantics) {
        LoadedModels lm = load_models(read_checkpoint(ckpt));
        return to_array(generate_images(lm.generator, to_tensor(semantics)));
      },
      py::arg("ckpt"), py::arg("semantics"), "Generator outputs in [-1, 1] for [N,K,H,W] semantics.");

  m.def("checkpoint_meta", [](const std::filesystem::path& ckpt) { return read_checkpoint(ckpt).meta; },
        py::arg("ckpt"));
}
