// semdisc command-line tool: dataset generation, training, evaluation,
// ablation grids and sample rendering.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "semdisc/dataset_io.hpp"
#include "semdisc/metrics.hpp"
#include "semdisc/png.hpp"
#include "semdisc/trainer.hpp"

#ifndef SEMDISC_VERSION
#define SEMDISC_VERSION "dev"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace semdisc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

// FNV-1a, 64 bit.
std::string content_hash(const std::vector<unsigned char>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError(IoError::Kind::kOpen, p.string() + ": cannot open");
  return content_hash(std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {}));
}

std::string code_version() { return std::string("semdisc ") + SEMDISC_VERSION; }

// Accepts a dataset file or a directory holding dataset.sdl.
fs::path dataset_path(const fs::path& p) {
  if (fs::is_directory(p)) return p / "dataset.sdl";
  return p;
}

void require_file(const fs::path& p, const std::string& flag) {
  if (!fs::is_regular_file(p)) throw IoError(IoError::Kind::kOpen, flag + ": no such file '" + p.string() + "'");
}

struct Manifest {
  std::string command;
  std::uint64_t seed = 0;
  json inputs = json::object();
  std::vector<std::string> outputs;
};

void write_manifest(const fs::path& dir, const CLI::App& sub, const Manifest& m) {
  json j = {{"command", m.command},
            {"seed", m.seed},
            {"code_version", code_version()},
            {"code_hash", content_hash(std::vector<unsigned char>(code_version().begin(), code_version().end()))},
            {"config", sub.config_to_str(true, false)},
            {"inputs", m.inputs},
            {"outputs", m.outputs}};
  std::ofstream out(dir / "manifest.json");
  out << j.dump(2) << "\n";
  if (!out) throw IoError(IoError::Kind::kWrite, (dir / "manifest.json").string() + ": write failed");
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
  if (!out) throw IoError(IoError::Kind::kWrite, p.string() + ": write failed");
}

png::RgbImage example_image(const Example& ex, std::size_t h, std::size_t w) {
  return png::from_planar(std::span<const float>(ex.image), h, w);
}

png::RgbImage tensor_image(const Tensor& t, std::size_t i) {
  const std::size_t h = t.dim(2), w = t.dim(3), per = 3 * h * w;
  return png::from_planar(std::span<const double>(t.data().data() + i * per, per), h, w);
}

Dataset subset(const Dataset& d, std::size_t n) {
  Dataset out = d;
  out.examples.resize(std::min(n, d.examples.size()));
  out.header.count = static_cast<std::uint32_t>(out.examples.size());
  return out;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string mode = "scene";
  std::size_t n = 512, h = 32, w = 32, classes = 4, keypoints = 8, previews = 8;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gen_data(const CLI::App& sub, const GenDataArgs& a) {
  const SemanticMode mode = parse_mode(a.mode);
  const std::size_t k = mode == SemanticMode::kScene ? a.classes : a.keypoints;
  if (mode == SemanticMode::kScene && (a.classes < 2 || a.classes > kPaletteSize)) {
    throw ValidationError("--classes: " + std::to_string(a.classes) + " is outside the palette range [2, " +
                          std::to_string(kPaletteSize) + "]");
  }
  const fs::path dir(a.out);
  fs::create_directories(dir);
  const Dataset ds = make_dataset(mode, a.h, a.w, k, generate_examples({mode, a.n, a.h, a.w, k, a.seed}));
  write_dataset(dir / "dataset.sdl", ds);

  std::vector<std::vector<png::RgbImage>> rows;
  for (std::size_t i = 0; i < std::min(a.previews, ds.examples.size()); ++i) {
    rows.push_back({example_image(ds.examples[i], a.h, a.w), png::colorize(ds.examples[i].semantics)});
  }
  Manifest m{"gen-data", a.seed, json::object(), {"dataset.sdl"}};
  if (!rows.empty()) {
    png::write(dir / "preview.png", png::grid(rows));
    m.outputs.push_back("preview.png");
  }
  m.inputs["dataset_hash"] = file_hash(dir / "dataset.sdl");
  write_manifest(dir, sub, m);
  std::cout << "wrote " << ds.examples.size() << " examples to " << (dir / "dataset.sdl").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, out, variant = "full", adv_form = "hinge";
  std::size_t epochs = 40, warmup = 20, batch = 16, scales = 2, gen_width = 8, res_blocks = 3;
  std::size_t checkpoint_every = 10, max_steps = 0;
  double lambda_s = 1.0, lambda_r = 1.0, lambda_fm = 10.0, lambda_perc = 10.0, lr = 2e-4;
  std::uint64_t seed = 0;
};

void fill_configs(const TrainArgs& a, const Dataset& ds, ModelConfig& m, TrainConfig& t) {
  m = default_model_config(ds.header.mode, ds.header.height, ds.header.width, ds.header.channels);
  m.generator.base_width = a.gen_width;
  m.generator.res_blocks = a.res_blocks;
  m.num_scales = a.scales;
  t.lr0 = a.lr;
  t.epochs = a.epochs;
  t.warmup_epochs = a.warmup;
  t.batch_size = a.batch;
  t.adv_form = parse_adv_form(a.adv_form);
  t.weights = {a.lambda_s, a.lambda_r, a.lambda_fm, a.lambda_perc};
  t.seed = a.seed;
  t.checkpoint_every = a.checkpoint_every;
  t.max_steps = a.max_steps;
  apply_variant(parse_variant(a.variant), m, t);
  t.validate();
}

int cmd_train(const CLI::App& sub, const TrainArgs& a) {
  const fs::path data = dataset_path(a.data);
  require_file(data, "--data");
  const Dataset ds = read_dataset(data);
  ModelConfig m;
  TrainConfig t;
  fill_configs(a, ds, m, t);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  Trainer trainer(m, t);
  std::ofstream log(dir / "train_log.csv");
  Manifest man{"train", a.seed, {{"dataset", data.string()}, {"dataset_hash", file_hash(data)}}, {"train_log.csv"}};
  try {
    const TrainResult r = trainer.train(ds, &log, dir);
    for (const auto& c : r.checkpoints) man.outputs.push_back(c.filename().string());
  } catch (const TrainingAborted& e) {
    log.flush();
    write_manifest(dir, sub, man);
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  write_manifest(dir, sub, man);
  std::cout << "trained " << trainer.steps_done() << " steps; outputs in " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ProbeArgs {
  std::string data, heldout, out;
  std::size_t epochs = 6, batch = 16;
  double lr = 2e-3;
  std::uint64_t seed = 7;
};

int cmd_train_probe(const CLI::App& sub, const ProbeArgs& a) {
  const fs::path data = dataset_path(a.data), held = dataset_path(a.heldout);
  require_file(data, "--data");
  require_file(held, "--heldout");
  const fs::path dir(a.out);
  fs::create_directories(dir);
  ProbeConfig cfg{a.epochs, a.batch, a.lr, a.seed};
  const Probe p = train_probe(read_dataset(data), read_dataset(held), cfg);
  save_probe(dir / "probe.sdc", p);
  Manifest m{"train-probe", a.seed, {{"dataset_hash", file_hash(data)}, {"heldout_hash", file_hash(held)}}, {"probe.sdc"}};
  write_manifest(dir, sub, m);
  std::cout << "probe validation score " << p.validation_score << (p.accepted ? " (accepted)" : " (below threshold)")
            << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, data, probe, out;
};

int cmd_eval(const CLI::App& sub, const EvalArgs& a) {
  const fs::path data = dataset_path(a.data);
  require_file(a.ckpt, "--ckpt");
  require_file(data, "--data");
  require_file(a.probe, "--probe");
  Probe probe = load_probe(a.probe);
  if (!probe.accepted) std::cerr << "warning: probe is below the acceptance threshold\n";
  FeatNet featnet(kFrechetSeed);
  const EvalReport r = evaluate_checkpoint(read_checkpoint(a.ckpt), read_dataset(data), probe, featnet);
  const std::string report = report_json(r);
  std::cout << report << "\n";
  if (!a.out.empty()) {
    const fs::path dir(a.out);
    fs::create_directories(dir);
    write_text(dir / "report.json", report + "\n");
    Manifest m{"eval", 0,
               {{"checkpoint_hash", file_hash(a.ckpt)}, {"dataset_hash", file_hash(data)}, {"probe_hash", file_hash(a.probe)}},
               {"report.json"}};
    write_manifest(dir, sub, m);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string data, test, probe, out;
  std::vector<std::string> variants{"baseline", "full"};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t epochs = 40, warmup = 20, batch = 16, scales = 2, gen_width = 8, res_blocks = 3;
};

int cmd_ablate(const CLI::App& sub, const AblateArgs& a) {
  const fs::path data = dataset_path(a.data), test = dataset_path(a.test);
  require_file(data, "--data");
  require_file(test, "--test");
  for (const auto& v : a.variants) parse_variant(v);
  const Dataset train_ds = read_dataset(data), test_ds = read_dataset(test);
  const fs::path dir(a.out);
  fs::create_directories(dir);

  Probe probe;
  Manifest m{"ablate", a.seeds.front(), {{"dataset_hash", file_hash(data)}, {"test_hash", file_hash(test)}}, {}};
  if (!a.probe.empty()) {
    require_file(a.probe, "--probe");
    probe = load_probe(a.probe);
    m.inputs["probe_hash"] = file_hash(a.probe);
  } else {
    probe = train_probe(train_ds, test_ds);
    save_probe(dir / "probe.sdc", probe);
    m.outputs.push_back("probe.sdc");
  }
  std::cout << "probe validation score " << probe.validation_score << "\n";

  AblationConfig cfg;
  cfg.variants = a.variants;
  cfg.seeds = a.seeds;
  cfg.train.epochs = a.epochs;
  cfg.train.warmup_epochs = a.warmup;
  cfg.train.batch_size = a.batch;
  cfg.generator = {train_ds.header.channels, a.gen_width, a.res_blocks};
  cfg.num_scales = a.scales;
  cfg.out_dir = dir / "runs";
  std::vector<AblationRun> runs;
  try {
    runs = ablation_grid(train_ds, test_ds, probe, cfg, &std::cout);
  } catch (const TrainingAborted& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  write_text(dir / "runs.csv", runs_csv(runs));
  const std::string table = summary_csv(summarize_runs(runs));
  write_text(dir / "summary.csv", table);
  m.outputs.insert(m.outputs.end(), {"runs.csv", "summary.csv", "runs/"});
  write_manifest(dir, sub, m);
  std::cout << table;
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
  std::string ckpt, baseline_ckpt, data, out;
  std::size_t n = 8;
};

int cmd_render(const CLI::App& sub, const RenderArgs& a) {
  const fs::path data = dataset_path(a.data);
  require_file(a.ckpt, "--ckpt");
  require_file(data, "--data");
  if (!a.baseline_ckpt.empty()) require_file(a.baseline_ckpt, "--baseline-ckpt");
  if (a.n == 0) throw ValidationError("--n: must be positive");
  const Dataset ds = subset(read_dataset(data), a.n);
  const auto& h = ds.header;
  const Tensor sem = dataset_semantics(ds);

  auto outputs = [&](const std::string& path) {
    LoadedModels lm = load_models(read_checkpoint(path));
    if (lm.config.mode != h.mode || lm.config.classes() != h.channels || lm.config.height != h.height ||
        lm.config.width != h.width) {
      throw ValidationError(path + ": checkpoint geometry does not match the dataset");
    }
    return generate_images(lm.generator, sem);
  };
  const Tensor main = outputs(a.ckpt);
  std::optional<Tensor> base;
  if (!a.baseline_ckpt.empty()) base = outputs(a.baseline_ckpt);

  std::vector<std::vector<png::RgbImage>> rows;
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    std::vector<png::RgbImage> row{example_image(ds.examples[i], h.height, h.width), png::colorize(ds.examples[i].semantics)};
    if (base) row.push_back(tensor_image(*base, i));
    row.push_back(tensor_image(main, i));
    rows.push_back(std::move(row));
  }
  const fs::path dir(a.out);
  fs::create_directories(dir);
  png::write(dir / "grid.png", png::grid(rows));
  Manifest m{"render", 0, {{"checkpoint_hash", file_hash(a.ckpt)}, {"dataset_hash", file_hash(data)}}, {"grid.png"}};
  if (base) m.inputs["baseline_checkpoint_hash"] = file_hash(a.baseline_ckpt);
  write_manifest(dir, sub, m);
  std::cout << "wrote " << rows.size() << " rows to " << (dir / "grid.png").string() << "\n";
  return kExitOk;
}

std::string config_path;

void add_config_flag(CLI::App* sub) {
  sub->add_option("--config", config_path, "key=value file supplying any flag; command-line flags win");
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  s = s.substr(b, e - b + 1);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
  return s;
}

// Appends "--key value" for every config entry whose flag is not already on
// the command line. Lines: key = value; '#' starts a comment; [sections] are
// ignored.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw IoError(IoError::Kind::kOpen, "--config: cannot open '" + path + "'");
  auto given = [&](const std::string& flag) {
    for (const auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  std::vector<std::string> extra;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    line = line.substr(0, line.find('#'));
    if (trim(line).empty() || trim(line).front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("--config: " + path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (key == "config") continue;
    if (!given("--" + key)) {
      extra.push_back("--" + key);
      extra.push_back(trim(line.substr(eq + 1)));
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semdisc: semantic-aware discriminator toolkit", "semdisc"};
  app.set_version_flag("--version", code_version());
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->set_help_flag("--help", "Print this help message and exit");  // -h would clash with --h
  add_config_flag(gen);
  gen->add_option("--mode", gd.mode, "scene or keypoint")->check(CLI::IsMember({"scene", "keypoint"}))->capture_default_str();
  gen->add_option("--n", gd.n, "Number of examples")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--h", gd.h, "Image height")->capture_default_str();
  gen->add_option("--w", gd.w, "Image width")->capture_default_str();
  gen->add_option("--classes", gd.classes, "Scene classes (including background)")->capture_default_str();
  gen->add_option("--keypoints", gd.keypoints, "Keypoint count")->capture_default_str();
  gen->add_option("--previews", gd.previews, "Rows in preview.png")->capture_default_str();
  gen->add_option("--seed", gd.seed, "Random seed")->capture_default_str();
  gen->add_option("--out", gd.out, "Output directory")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a generator and discriminator");
  add_config_flag(train);
  train->add_option("--data", tr.data, "Dataset file or directory")->required();
  train->add_option("--out", tr.out, "Output directory")->required();
  train->add_option("--variant", tr.variant, "Discriminator variant")->capture_default_str();
  train->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--warmup", tr.warmup, "Epochs before the semantic terms reach G")->capture_default_str();
  train->add_option("--batch", tr.batch)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--lambda-s", tr.lambda_s)->check(CLI::NonNegativeNumber)->capture_default_str();
  train->add_option("--lambda-r", tr.lambda_r)->check(CLI::NonNegativeNumber)->capture_default_str();
  train->add_option("--lambda-fm", tr.lambda_fm)->check(CLI::NonNegativeNumber)->capture_default_str();
  train->add_option("--lambda-perc", tr.lambda_perc)->check(CLI::NonNegativeNumber)->capture_default_str();
  train->add_option("--lr", tr.lr)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--adv-form", tr.adv_form)->check(CLI::IsMember({"hinge", "bce"}))->capture_default_str();
  train->add_option("--scales", tr.scales)->check(CLI::Range(1, 4))->capture_default_str();
  train->add_option("--gen-width", tr.gen_width)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--res-blocks", tr.res_blocks)->capture_default_str();
  train->add_option("--checkpoint-every", tr.checkpoint_every)->capture_default_str();
  train->add_option("--max-steps", tr.max_steps, "Stop early after this many steps (0 = no limit)")->capture_default_str();
  train->add_option("--seed", tr.seed)->capture_default_str();

  ProbeArgs pr;
  auto* probe = app.add_subcommand("train-probe", "Train the probe segmenter on real pairs");
  add_config_flag(probe);
  probe->add_option("--data", pr.data, "Training dataset")->required();
  probe->add_option("--heldout", pr.heldout, "Held-out dataset for validation")->required();
  probe->add_option("--out", pr.out, "Output directory")->required();
  probe->add_option("--epochs", pr.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  probe->add_option("--batch", pr.batch)->check(CLI::PositiveNumber)->capture_default_str();
  probe->add_option("--lr", pr.lr)->check(CLI::PositiveNumber)->capture_default_str();
  probe->add_option("--seed", pr.seed)->capture_default_str();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint with the probe and Frechet distance");
  add_config_flag(eval);
  eval->add_option("--ckpt", ev.ckpt)->required();
  eval->add_option("--data", ev.data, "Test dataset")->required();
  eval->add_option("--probe", ev.probe, "Probe file from train-probe")->required();
  eval->add_option("--out", ev.out, "Directory for report.json");

  AblateArgs ab;
  auto* ablate = app.add_subcommand("ablate", "Train and score a grid of variants and seeds");
  add_config_flag(ablate);
  ablate->add_option("--data", ab.data, "Training dataset")->required();
  ablate->add_option("--test", ab.test, "Test dataset")->required();
  ablate->add_option("--probe", ab.probe, "Probe file; trained on --data when absent");
  ablate->add_option("--out", ab.out, "Output directory")->required();
  ablate->add_option("--variants", ab.variants)->delimiter(',')->capture_default_str();
  ablate->add_option("--seeds", ab.seeds)->delimiter(',')->capture_default_str();
  ablate->add_option("--epochs", ab.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  ablate->add_option("--warmup", ab.warmup)->capture_default_str();
  ablate->add_option("--batch", ab.batch)->check(CLI::PositiveNumber)->capture_default_str();
  ablate->add_option("--scales", ab.scales)->check(CLI::Range(1, 4))->capture_default_str();
  ablate->add_option("--gen-width", ab.gen_width)->check(CLI::PositiveNumber)->capture_default_str();
  ablate->add_option("--res-blocks", ab.res_blocks)->capture_default_str();

  RenderArgs rd;
  auto* render = app.add_subcommand("render", "Write a comparison grid PNG");
  add_config_flag(render);
  render->add_option("--ckpt", rd.ckpt, "Checkpoint shown in the last column")->required();
  render->add_option("--baseline-ckpt", rd.baseline_ckpt, "Optional comparison checkpoint");
  render->add_option("--data", rd.data)->required();
  render->add_option("--n", rd.n, "Rows")->capture_default_str();
  render->add_option("--out", rd.out, "Output directory")->required();

  std::vector<std::string> args(argv, argv + argc);
  try {
    args = expand_config(std::move(args));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(*gen, gd);
    if (train->parsed()) return cmd_train(*train, tr);
    if (probe->parsed()) return cmd_train_probe(*probe, pr);
    if (eval->parsed()) return cmd_eval(*eval, ev);
    if (ablate->parsed()) return cmd_ablate(*ablate, ab);
    if (render->parsed()) return cmd_render(*render, rd);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
