#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

namespace semdisc {

enum class SemanticMode : std::uint32_t { kScene = 0, kKeypoint = 1 };

std::string_view to_string(SemanticMode mode);
SemanticMode parse_mode(std::string_view name);

// K spatial channels conditioning generation: one-hot class masks in scene
// mode, single-pixel keypoint peaks in keypoint mode. Layout is [K][H][W].
struct SemanticMap {
  SemanticMode mode = SemanticMode::kScene;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  float at(std::size_t k, std::size_t y, std::size_t x) const { return data[(k * height + y) * width + x]; }
  float& at(std::size_t k, std::size_t y, std::size_t x) { return data[(k * height + y) * width + x]; }
};

// Paired training example. `image` is [3][H][W] in [-1, 1].
struct Example {
  std::vector<float> image;
  SemanticMap semantics;
  std::uint64_t seed = 0;
};

// K+1 gating masks aligned with a discriminator output; mask 0 is all ones.
struct MaskSet {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  double at(std::size_t k, std::size_t y, std::size_t x) const { return data[(k * height + y) * width + x]; }
  double& at(std::size_t k, std::size_t y, std::size_t x) { return data[(k * height + y) * width + x]; }
};

inline constexpr std::size_t kPaletteSize = 12;

// Base RGB colour of palette entry i, components in [-1, 1].
std::array<float, 3> palette_color(std::size_t i);

// Scene mode: 1-4 shapes over a textured background; class 0 is background.
Example gen_scene(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t num_classes);

// Keypoint mode: a stick figure with a fixed binary-tree topology.
Example gen_keypoint(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t num_keypoints);

// Parent of joint k in the keypoint skeleton (-1 for the root).
int keypoint_parent(std::size_t k);

// Max-pool downsampling of each class channel; covered input cells of an
// output cell are [floor(i*H/h), ceil((i+1)*H/h)).
MaskSet masks_from_scene(const SemanticMap& s, std::size_t out_h, std::size_t out_w);

enum class SigmaConvention { kStdDev, kVariance };

// Gaussian bumps around each keypoint, evaluated in input-pixel units at the
// centres of the output grid cells. Absent keypoints yield all-zero masks.
MaskSet masks_from_keypoints(const SemanticMap& s, std::size_t out_h, std::size_t out_w, double sigma = 6.0,
                             SigmaConvention convention = SigmaConvention::kStdDev);

struct MaskOptions {
  double sigma = 6.0;
  SigmaConvention convention = SigmaConvention::kStdDev;
};

MaskSet make_masks(const SemanticMap& s, std::size_t out_h, std::size_t out_w, const MaskOptions& opts = {});

// Per-pixel class index (argmax over channels) of a scene map.
std::vector<int> class_labels(const SemanticMap& s);

// (row, col) of each keypoint peak, or nullopt when the channel is empty.
std::vector<std::optional<std::pair<std::size_t, std::size_t>>> keypoint_locations(const SemanticMap& s);

struct DatasetSpec {
  SemanticMode mode = SemanticMode::kScene;
  std::size_t count = 0;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 4;  // classes (scene) or keypoints
  std::uint64_t seed = 0;
};

// Example i is generated from mix_seed(spec.seed, i).
std::vector<Example> generate_examples(const DatasetSpec& spec);

}  // namespace semdisc
