#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "semdisc/autodiff.hpp"
#include "semdisc/rng.hpp"

namespace semdisc {

// Owns a flat list of named parameters. Layers refer to parameters by index,
// so a model can be copied and the copy's tape bindings stay valid.
class Module {
 public:
  std::vector<ad::Parameter>& parameters() { return params_; }
  const std::vector<ad::Parameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  void zero_grad();

  ad::Parameter* find(const std::string& name);

 protected:
  struct Conv {
    std::size_t weight = 0;
    std::size_t bias = 0;
    ad::Conv2dAttrs attrs;
  };

  enum class Init { kGan, kHe };

  Conv add_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                std::size_t pad, Rng& rng, Init init = Init::kGan);
  ad::Var apply(ad::Tape& tape, ad::Var x, const Conv& c, bool trainable);

  std::vector<ad::Parameter> params_;
};

struct GeneratorSpec {
  std::size_t in_channels = 4;
  std::size_t base_width = 32;
  std::size_t res_blocks = 3;
};

// conv-in, two stride-2 downsampling blocks, residual blocks, two
// nearest-upsample blocks, conv-out with tanh.
class Generator : public Module {
 public:
  Generator() = default;
  Generator(const GeneratorSpec& spec, std::uint64_t seed);

  // s: [N,K,H,W] with H, W divisible by 4. Returns [N,3,H,W] in (-1, 1).
  ad::Var forward(ad::Tape& tape, ad::Var s, bool trainable = true);
  const GeneratorSpec& spec() const { return spec_; }

 private:
  GeneratorSpec spec_;
  Conv in_;
  std::vector<Conv> down_;
  std::vector<Conv> res_;  // two per block
  std::vector<Conv> up_;
  Conv out_;
};

struct DiscSpec {
  std::size_t classes = 4;       // K
  bool coarse_to_fine = true;    // adversarial head has K+1 maps, otherwise 1
  bool semantic_head = true;     // K maps
  bool reconstruction_head = true;  // 3 maps
  std::vector<std::size_t> widths = {16, 32, 64, 128};
  std::size_t extra_last = 0;    // capacity control: widens the last trunk block

  std::size_t adv_channels() const { return coarse_to_fine ? classes + 1 : 1; }
  std::size_t sem_channels() const { return semantic_head ? classes : 0; }
  std::size_t rec_channels() const { return reconstruction_head ? 3 : 0; }
};

// Output maps are at 1/16 of the input resolution.
struct DiscOutputs {
  ad::Var adv;
  ad::Var sem;  // invalid when the head is absent
  ad::Var rec;
  std::vector<ad::Var> trunk_feats;
};

// Four stride-2 conv blocks shared by up to three parallel head convolutions.
// With every optional head off this is the single-map PatchGAN baseline.
class Discriminator : public Module {
 public:
  Discriminator() = default;
  Discriminator(const DiscSpec& spec, std::uint64_t seed);

  // `aux_trainable` = false records the semantic and reconstruction heads
  // as constants even when the rest is trainable.
  DiscOutputs forward(ad::Tape& tape, ad::Var x, bool trainable = true, bool aux_trainable = true);
  const DiscSpec& spec() const { return spec_; }

  // Parameter index ranges of each part, for routing checks.
  std::vector<std::size_t> trunk_params() const;
  std::vector<std::size_t> adv_params() const { return {adv_.weight, adv_.bias}; }
  std::vector<std::size_t> sem_params() const;
  std::vector<std::size_t> rec_params() const;

 private:
  DiscSpec spec_;
  std::vector<Conv> trunk_;
  Conv adv_, sem_, rec_;
};

// Independent discriminators on x, x/2, x/4, ...
class MultiScaleDisc {
 public:
  MultiScaleDisc() = default;
  MultiScaleDisc(const DiscSpec& spec, std::size_t num_scales, std::uint64_t seed);

  std::vector<DiscOutputs> forward(ad::Tape& tape, ad::Var x, bool trainable = true, bool aux_trainable = true);

  std::size_t num_scales() const { return scales_.size(); }
  Discriminator& scale(std::size_t i) { return scales_.at(i); }
  const Discriminator& scale(std::size_t i) const { return scales_.at(i); }
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::vector<Discriminator> scales_;
};

// Frozen random conv net standing in for a pretrained feature extractor.
// Returns the four post-activation feature maps.
class FeatNet : public Module {
 public:
  FeatNet() = default;
  explicit FeatNet(std::uint64_t seed);

  std::vector<ad::Var> forward(ad::Tape& tape, ad::Var x);
  // Global-average-pooled activations of all layers, one row per image.
  std::vector<std::vector<double>> pooled_features(const Tensor& images);

 private:
  std::vector<Conv> layers_;
};

// Parameter increase of a discriminator configuration over the baseline.
struct ModelSummary {
  std::size_t generator = 0;
  std::size_t discriminator = 0;
  std::size_t baseline_discriminator = 0;
  std::size_t heads = 0;  // sem + rec heads + extra adversarial maps
  double increase() const {
    return baseline_discriminator ? static_cast<double>(discriminator) / baseline_discriminator - 1.0 : 0.0;
  }
};

ModelSummary summarize(const GeneratorSpec& g, const DiscSpec& d, std::size_t num_scales);

// Smallest extra_last whose widened baseline has at least as many
// discriminator parameters as `d`.
std::size_t matching_extra_width(const DiscSpec& d, std::size_t num_scales);

// Checkpoint: "SDC1", JSON metadata string, then named f64 parameter blocks.
struct Checkpoint {
  std::string meta;  // JSON
  std::vector<ad::Parameter> params;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);
std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::vector<unsigned char> bytes, const std::string& source = "checkpoint");

// Copies values by name from `src` into `dst`; throws on missing names or
// shape mismatches.
void load_parameters(std::vector<ad::Parameter>& dst, const std::vector<ad::Parameter>& src,
                     const std::string& prefix);
void append_parameters(std::vector<ad::Parameter>& out, const std::vector<ad::Parameter>& src,
                       const std::string& prefix);

}  // namespace semdisc
