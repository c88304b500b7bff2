#include "semdisc/models.hpp"

#include <cmath>
#include <cstring>

#include "semdisc/binary_io.hpp"
#include "semdisc/error.hpp"

namespace semdisc {

using ad::Var;

std::size_t Module::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void Module::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

ad::Parameter* Module::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Module::Conv Module::add_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
                              std::size_t stride, std::size_t pad, Rng& rng, Init init) {
  Tensor w({out, in, kernel, kernel});
  const double sd = init == Init::kGan ? 0.02 : std::sqrt(2.0 / static_cast<double>(in * kernel * kernel));
  for (double& v : w.data()) v = rng.normal(0.0, sd);
  Conv c;
  c.weight = params_.size();
  params_.emplace_back(name + ".weight", std::move(w));
  c.bias = params_.size();
  params_.emplace_back(name + ".bias", Tensor({out}));
  c.attrs = {stride, pad};
  return c;
}

Var Module::apply(ad::Tape& tape, Var x, const Conv& c, bool trainable) {
  return ad::conv2d(x, tape.param(params_[c.weight], trainable), tape.param(params_[c.bias], trainable), c.attrs);
}

// ---------------------------------------------------------------------------

Generator::Generator(const GeneratorSpec& spec, std::uint64_t seed) : spec_(spec) {
  if (spec.in_channels == 0 || spec.base_width == 0) throw ValidationError("Generator: empty spec");
  Rng rng(seed);
  const std::size_t b = spec.base_width;
  in_ = add_conv("in", spec.in_channels, b, 3, 1, 1, rng);
  down_.push_back(add_conv("down0", b, 2 * b, 4, 2, 1, rng));
  down_.push_back(add_conv("down1", 2 * b, 4 * b, 4, 2, 1, rng));
  for (std::size_t r = 0; r < spec.res_blocks; ++r) {
    res_.push_back(add_conv("res" + std::to_string(r) + ".a", 4 * b, 4 * b, 3, 1, 1, rng));
    res_.push_back(add_conv("res" + std::to_string(r) + ".b", 4 * b, 4 * b, 3, 1, 1, rng));
  }
  up_.push_back(add_conv("up0", 4 * b, 2 * b, 3, 1, 1, rng));
  up_.push_back(add_conv("up1", 2 * b, b, 3, 1, 1, rng));
  out_ = add_conv("out", b, 3, 3, 1, 1, rng);
}

Var Generator::forward(ad::Tape& tape, Var s, bool trainable) {
  const Shape sh = s.shape();
  if (sh.size() != 4 || sh[1] != spec_.in_channels) {
    throw ShapeError("Generator: expected [N," + std::to_string(spec_.in_channels) + ",H,W] input, got " +
                     to_string(sh));
  }
  if (sh[2] % 4 != 0 || sh[3] % 4 != 0) throw ShapeError("Generator: H and W must be divisible by 4, got " + to_string(sh));

  Var h = ad::relu(ad::instance_norm(apply(tape, s, in_, trainable)));
  for (const Conv& c : down_) h = ad::relu(ad::instance_norm(apply(tape, h, c, trainable)));
  for (std::size_t r = 0; r < res_.size(); r += 2) {
    Var t = ad::relu(ad::instance_norm(apply(tape, h, res_[r], trainable)));
    t = ad::instance_norm(apply(tape, t, res_[r + 1], trainable));
    h = h + t;
  }
  for (const Conv& c : up_) h = ad::relu(ad::instance_norm(apply(tape, ad::nearest_upsample(h, 2, 2), c, trainable)));
  return ad::tanh(apply(tape, h, out_, trainable));
}

// ---------------------------------------------------------------------------

Discriminator::Discriminator(const DiscSpec& spec, std::uint64_t seed) : spec_(spec) {
  if (spec.widths.size() != 4) throw ValidationError("Discriminator: trunk needs exactly 4 widths");
  if (spec.coarse_to_fine && spec.classes == 0) throw ValidationError("Discriminator: coarse-to-fine head needs K >= 1");
  if (spec.semantic_head && spec.classes == 0) throw ValidationError("Discriminator: semantic head needs K >= 1");
  Rng rng(seed);
  std::size_t in = 3;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t out = spec.widths[i] + (i == 3 ? spec.extra_last : 0);
    trunk_.push_back(add_conv("trunk" + std::to_string(i), in, out, 4, 2, 1, rng));
    in = out;
  }
  // Heads are created after the trunk and the adversarial head so that
  // switching them on or off leaves the other initial weights untouched.
  adv_ = add_conv("adv", in, spec.adv_channels(), 3, 1, 1, rng);
  if (spec.semantic_head) sem_ = add_conv("sem", in, spec.sem_channels(), 3, 1, 1, rng);
  if (spec.reconstruction_head) rec_ = add_conv("rec", in, 3, 3, 1, 1, rng);
}

DiscOutputs Discriminator::forward(ad::Tape& tape, Var x, bool trainable, bool aux_trainable) {
  const Shape sh = x.shape();
  if (sh.size() != 4 || sh[1] != 3) throw ShapeError("Discriminator: expected [N,3,H,W] input, got " + to_string(sh));
  if (sh[2] % 16 != 0 || sh[3] % 16 != 0) {
    throw ShapeError("Discriminator: H and W must be divisible by 16, got " + to_string(sh));
  }
  DiscOutputs out;
  Var h = x;
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    h = apply(tape, h, trunk_[i], trainable);
    // No norm on the first block (PatchGAN) or the last, which can be 1x1.
    if (i == 1 || i == 2) h = ad::instance_norm(h);
    h = ad::leaky_relu(h, 0.2);
    out.trunk_feats.push_back(h);
  }
  out.adv = apply(tape, h, adv_, trainable);
  if (spec_.semantic_head) out.sem = apply(tape, h, sem_, trainable && aux_trainable);
  if (spec_.reconstruction_head) out.rec = apply(tape, h, rec_, trainable && aux_trainable);
  return out;
}

std::vector<std::size_t> Discriminator::trunk_params() const {
  std::vector<std::size_t> idx;
  for (const Conv& c : trunk_) {
    idx.push_back(c.weight);
    idx.push_back(c.bias);
  }
  return idx;
}

std::vector<std::size_t> Discriminator::sem_params() const {
  if (!spec_.semantic_head) return {};
  return {sem_.weight, sem_.bias};
}

std::vector<std::size_t> Discriminator::rec_params() const {
  if (!spec_.reconstruction_head) return {};
  return {rec_.weight, rec_.bias};
}

// ---------------------------------------------------------------------------

MultiScaleDisc::MultiScaleDisc(const DiscSpec& spec, std::size_t num_scales, std::uint64_t seed) {
  if (num_scales == 0) throw ValidationError("MultiScaleDisc: num_scales must be >= 1");
  for (std::size_t i = 0; i < num_scales; ++i) scales_.emplace_back(spec, mix_seed(seed, i));
}

std::vector<DiscOutputs> MultiScaleDisc::forward(ad::Tape& tape, Var x, bool trainable, bool aux_trainable) {
  std::vector<DiscOutputs> outs;
  Var xi = x;
  for (std::size_t i = 0; i < scales_.size(); ++i) {
    if (i > 0) xi = ad::avg_pool(xi, 2);
    outs.push_back(scales_[i].forward(tape, xi, trainable, aux_trainable));
  }
  return outs;
}

std::size_t MultiScaleDisc::parameter_count() const {
  std::size_t n = 0;
  for (const auto& d : scales_) n += d.parameter_count();
  return n;
}

void MultiScaleDisc::zero_grad() {
  for (auto& d : scales_) d.zero_grad();
}

// ---------------------------------------------------------------------------

FeatNet::FeatNet(std::uint64_t seed) {
  Rng rng(seed);
  layers_.push_back(add_conv("f0", 3, 8, 3, 1, 1, rng, Init::kHe));
  layers_.push_back(add_conv("f1", 8, 16, 4, 2, 1, rng, Init::kHe));
  layers_.push_back(add_conv("f2", 16, 32, 4, 2, 1, rng, Init::kHe));
  layers_.push_back(add_conv("f3", 32, 64, 4, 2, 1, rng, Init::kHe));
}

std::vector<Var> FeatNet::forward(ad::Tape& tape, Var x) {
  std::vector<Var> feats;
  Var h = x;
  for (const Conv& c : layers_) {
    h = ad::relu(apply(tape, h, c, /*trainable=*/false));
    feats.push_back(h);
  }
  return feats;
}

std::vector<std::vector<double>> FeatNet::pooled_features(const Tensor& images) {
  ad::Tape tape;
  const auto feats = forward(tape, tape.constant(images));
  const std::size_t n = images.dim(0);
  std::vector<std::vector<double>> rows(n);
  for (const Var& f : feats) {
    const Tensor& v = f.value();
    const std::size_t c = v.dim(1), hw = v.dim(2) * v.dim(3);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        const double* p = v.data().data() + (i * c + ch) * hw;
        for (std::size_t j = 0; j < hw; ++j) s += p[j];
        rows[i].push_back(s / static_cast<double>(hw));
      }
  }
  return rows;
}

// ---------------------------------------------------------------------------

ModelSummary summarize(const GeneratorSpec& g, const DiscSpec& d, std::size_t num_scales) {
  DiscSpec base = d;
  base.coarse_to_fine = base.semantic_head = base.reconstruction_head = false;
  base.extra_last = 0;
  ModelSummary s;
  s.generator = Generator(g, 0).parameter_count();
  s.discriminator = MultiScaleDisc(d, num_scales, 0).parameter_count();
  s.baseline_discriminator = MultiScaleDisc(base, num_scales, 0).parameter_count();
  s.heads = s.discriminator - s.baseline_discriminator;
  return s;
}

std::size_t matching_extra_width(const DiscSpec& d, std::size_t num_scales) {
  DiscSpec base = d;
  base.coarse_to_fine = base.semantic_head = base.reconstruction_head = false;
  base.extra_last = 0;
  const std::size_t target = MultiScaleDisc(d, num_scales, 0).parameter_count();
  // Each extra channel costs in*16 + 1 trunk parameters and 9 head weights.
  for (std::size_t extra = 0;; ++extra) {
    base.extra_last = extra;
    if (MultiScaleDisc(base, num_scales, 0).parameter_count() >= target) return extra;
  }
}

// ---------------------------------------------------------------------------

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  io::ByteWriter w;
  w.magic("SDC1");
  w.str(ckpt.meta);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.u64(d);
    w.bytes(p.value.data().data(), p.value.size() * sizeof(double));
  }
  return w.buffer();
}

Checkpoint decode_checkpoint(std::vector<unsigned char> bytes, const std::string& source) {
  io::ByteReader r(std::move(bytes), source);
  r.expect_magic("SDC1");
  Checkpoint ckpt;
  ckpt.meta = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw IoError(IoError::Kind::kFormat, source + ": block '" + name + "' has rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    const std::size_t n = numel(shape);
    if (n > r.remaining() / sizeof(double)) {
      throw IoError(IoError::Kind::kTruncated, source + ": truncated in block '" + name + "'");
    }
    std::vector<double> data(n);
    r.bytes(data.data(), n * sizeof(double));
    ckpt.params.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (r.remaining() != 0) throw IoError(IoError::Kind::kFormat, source + ": trailing bytes after last block");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

void load_parameters(std::vector<ad::Parameter>& dst, const std::vector<ad::Parameter>& src,
                     const std::string& prefix) {
  for (auto& p : dst) {
    const std::string want = prefix + p.name;
    const ad::Parameter* hit = nullptr;
    for (const auto& q : src)
      if (q.name == want) {
        hit = &q;
        break;
      }
    if (!hit) throw IoError(IoError::Kind::kFormat, "checkpoint is missing parameter '" + want + "'");
    if (hit->value.shape() != p.value.shape()) {
      throw IoError(IoError::Kind::kFormat, "checkpoint parameter '" + want + "' has shape " +
                                                to_string(hit->value.shape()) + ", model expects " +
                                                to_string(p.value.shape()));
    }
    p.value = hit->value;
    p.zero_grad();
  }
}

void append_parameters(std::vector<ad::Parameter>& out, const std::vector<ad::Parameter>& src,
                       const std::string& prefix) {
  for (const auto& p : src) out.emplace_back(prefix + p.name, p.value);
}

}  // namespace semdisc
