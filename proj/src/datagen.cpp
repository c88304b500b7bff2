#include "semdisc/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "semdisc/error.hpp"
#include "semdisc/rng.hpp"

namespace semdisc {
namespace {

// Hues spaced around the colour wheel plus a few distinct greys/darks so
// that neighbouring class indices stay visually separable.
constexpr std::array<std::array<float, 3>, kPaletteSize> kPalette = {{
    {-0.20f, -0.10f, -0.30f},  // background: muted olive-grey
    {0.85f, -0.70f, -0.70f},   // red
    {-0.70f, 0.75f, -0.70f},   // green
    {-0.70f, -0.60f, 0.85f},   // blue
    {0.85f, 0.80f, -0.75f},    // yellow
    {0.80f, -0.70f, 0.80f},    // magenta
    {-0.75f, 0.80f, 0.80f},    // cyan
    {0.90f, 0.10f, -0.80f},    // orange
    {0.10f, -0.80f, 0.60f},    // purple
    {0.85f, 0.85f, 0.85f},     // white
    {-0.85f, -0.85f, -0.85f},  // black
    {0.20f, 0.45f, -0.40f},    // moss
}};

void check_dims(std::string_view op, std::size_t h, std::size_t w, std::size_t min_extent) {
  if (h < min_extent || w < min_extent) {
    throw ValidationError(std::string(op) + ": image must be at least " + std::to_string(min_extent) + "x" +
                          std::to_string(min_extent) + ", got " + std::to_string(h) + "x" + std::to_string(w));
  }
}

float clamp_unit(double v) { return static_cast<float>(std::clamp(v, -1.0, 1.0)); }

// Edge function sign test for a point inside a triangle.
bool in_triangle(double px, double py, const std::array<double, 6>& t) {
  auto edge = [](double ax, double ay, double bx, double by, double x, double y) {
    return (bx - ax) * (y - ay) - (by - ay) * (x - ax);
  };
  const double e0 = edge(t[0], t[1], t[2], t[3], px, py);
  const double e1 = edge(t[2], t[3], t[4], t[5], px, py);
  const double e2 = edge(t[4], t[5], t[0], t[1], px, py);
  return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = ax + t * dx - px, qy = ay + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

}  // namespace

std::string_view to_string(SemanticMode mode) { return mode == SemanticMode::kScene ? "scene" : "keypoint"; }

SemanticMode parse_mode(std::string_view name) {
  if (name == "scene") return SemanticMode::kScene;
  if (name == "keypoint") return SemanticMode::kKeypoint;
  throw ValidationError("unknown semantic mode '" + std::string(name) + "'");
}

std::array<float, 3> palette_color(std::size_t i) { return kPalette.at(i); }

Example gen_scene(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t num_classes) {
  check_dims("gen_scene", height, width, 16);
  if (num_classes < 2) throw ValidationError("gen_scene: need at least 2 classes");
  if (num_classes > kPaletteSize) {
    throw ValidationError("gen_scene: " + std::to_string(num_classes) + " classes exceed the palette size " +
                          std::to_string(kPaletteSize));
  }
  Rng rng(seed);
  const double H = static_cast<double>(height), W = static_cast<double>(width);
  std::vector<int> labels(height * width, 0);

  const int shapes = rng.uniform_int(1, 4);
  for (int s = 0; s < shapes; ++s) {
    const int cls = rng.uniform_int(1, static_cast<int>(num_classes) - 1);
    const int kind = rng.uniform_int(0, 3);
    auto paint = [&](auto inside) {
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
          if (inside(x + 0.5, y + 0.5)) labels[y * width + x] = cls;
    };
    if (kind == 0) {  // axis-aligned rectangle
      const double rw = rng.uniform(W / 6, W / 2), rh = rng.uniform(H / 6, H / 2);
      const double x0 = rng.uniform(0, W - rw), y0 = rng.uniform(0, H - rh);
      paint([&](double x, double y) { return x >= x0 && x < x0 + rw && y >= y0 && y < y0 + rh; });
    } else if (kind == 1) {  // disk
      const double r = rng.uniform(std::min(H, W) / 10, std::min(H, W) / 4);
      const double cx = rng.uniform(r, W - r), cy = rng.uniform(r, H - r);
      paint([&](double x, double y) { return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r; });
    } else if (kind == 2) {  // triangle inside a random box
      const double bw = rng.uniform(W / 4, W / 2), bh = rng.uniform(H / 4, H / 2);
      const double x0 = rng.uniform(0, W - bw), y0 = rng.uniform(0, H - bh);
      std::array<double, 6> tri{};
      for (int v = 0; v < 3; ++v) {
        tri[2 * v] = x0 + rng.uniform() * bw;
        tri[2 * v + 1] = y0 + rng.uniform() * bh;
      }
      // Keep the first two vertices on opposite box edges so the area is never tiny.
      tri[0] = x0;
      tri[2] = x0 + bw;
      paint([&](double x, double y) { return in_triangle(x, y, tri); });
    } else {  // full-length stripe
      const bool horizontal = rng.bernoulli(0.5);
      const double extent = horizontal ? H : W;
      const double thick = rng.uniform(2.0, std::max(3.0, extent / 6));
      const double start = rng.uniform(0, extent - thick);
      paint([&](double x, double y) {
        const double c = horizontal ? y : x;
        return c >= start && c < start + thick;
      });
    }
  }

  std::vector<std::array<double, 3>> colors(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const auto base = kPalette[k];
    for (int ch = 0; ch < 3; ++ch) colors[k][ch] = base[ch] + rng.normal(0.0, 0.08);
  }
  const double fx = rng.uniform(0.05, 0.25), fy = rng.uniform(0.05, 0.25), phase = rng.uniform(0, 2 * M_PI);

  Example ex;
  ex.seed = seed;
  ex.image.resize(3 * height * width);
  ex.semantics = {SemanticMode::kScene, num_classes, height, width, std::vector<float>(num_classes * height * width)};
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const int cls = labels[y * width + x];
      ex.semantics.at(cls, y, x) = 1.0f;
      const double texture = cls == 0 ? 0.12 * std::sin(2 * M_PI * (fx * x + fy * y) + phase) : 0.0;
      for (int ch = 0; ch < 3; ++ch) {
        ex.image[(ch * height + y) * width + x] = clamp_unit(colors[cls][ch] + texture + rng.normal(0.0, 0.04));
      }
    }
  return ex;
}

int keypoint_parent(std::size_t k) { return k == 0 ? -1 : static_cast<int>((k - 1) / 2); }

Example gen_keypoint(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t num_keypoints) {
  check_dims("gen_keypoint", height, width, 8);
  if (num_keypoints < 2) throw ValidationError("gen_keypoint: need at least 2 keypoints");
  Rng rng(seed);
  const double H = static_cast<double>(height), W = static_cast<double>(width);
  const double limb = std::min(H, W) / 6;

  std::vector<std::pair<long, long>> joints(num_keypoints);
  std::vector<bool> present(num_keypoints, true);
  joints[0] = {static_cast<long>(rng.uniform(H / 4, 3 * H / 4)), static_cast<long>(rng.uniform(W / 4, 3 * W / 4))};
  for (std::size_t k = 1; k < num_keypoints; ++k) {
    const auto [py, px] = joints[static_cast<std::size_t>(keypoint_parent(k))];
    const double theta = rng.uniform(0, 2 * M_PI);
    const double len = limb * rng.uniform(0.7, 1.3);
    const long y = std::lround(py + len * std::sin(theta));
    const long x = std::lround(px + len * std::cos(theta));
    joints[k] = {std::clamp(y, 1L, static_cast<long>(height) - 2), std::clamp(x, 1L, static_cast<long>(width) - 2)};
    present[k] = !rng.bernoulli(0.1);
  }

  Example ex;
  ex.seed = seed;
  ex.image.resize(3 * height * width);
  ex.semantics = {SemanticMode::kKeypoint, num_keypoints, height, width,
                  std::vector<float>(num_keypoints * height * width)};
  std::array<double, 3> bg{};
  for (int ch = 0; ch < 3; ++ch) bg[ch] = -0.4 + rng.normal(0.0, 0.08);
  const double radius = std::max(1.5, std::min(H, W) / 24);

  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      std::array<double, 3> c = bg;
      const double fy = static_cast<double>(y), fx = static_cast<double>(x);
      for (std::size_t k = 1; k < num_keypoints; ++k) {
        const auto p = static_cast<std::size_t>(keypoint_parent(k));
        if (!present[k] || !present[p]) continue;
        const double d = segment_distance(fx, fy, joints[p].second, joints[p].first, joints[k].second,
                                          joints[k].first);
        if (d <= radius * 0.6) {
          const auto col = kPalette[1 + (k % (kPaletteSize - 1))];
          for (int ch = 0; ch < 3; ++ch) c[ch] = 0.5 * col[ch];
        }
      }
      for (std::size_t k = 0; k < num_keypoints; ++k) {
        if (!present[k]) continue;
        const double dy = fy - joints[k].first, dx = fx - joints[k].second;
        if (dy * dy + dx * dx <= radius * radius) {
          const auto col = kPalette[1 + (k % (kPaletteSize - 1))];
          for (int ch = 0; ch < 3; ++ch) c[ch] = col[ch];
        }
      }
      for (int ch = 0; ch < 3; ++ch) {
        ex.image[(ch * height + y) * width + x] = clamp_unit(c[ch] + rng.normal(0.0, 0.04));
      }
    }
  for (std::size_t k = 0; k < num_keypoints; ++k) {
    if (present[k]) {
      ex.semantics.at(k, static_cast<std::size_t>(joints[k].first), static_cast<std::size_t>(joints[k].second)) = 1.0f;
    }
  }
  return ex;
}

MaskSet masks_from_scene(const SemanticMap& s, std::size_t out_h, std::size_t out_w) {
  if (s.mode != SemanticMode::kScene) throw ValidationError("masks_from_scene: semantic map is not in scene mode");
  if (out_h == 0 || out_w == 0 || out_h > s.height || out_w > s.width) {
    throw ValidationError("masks_from_scene: invalid output size " + std::to_string(out_h) + "x" +
                          std::to_string(out_w));
  }
  MaskSet m{s.channels + 1, out_h, out_w, std::vector<double>((s.channels + 1) * out_h * out_w, 0.0)};
  std::fill(m.data.begin(), m.data.begin() + static_cast<long>(out_h * out_w), 1.0);
  for (std::size_t i = 0; i < out_h; ++i) {
    const std::size_t y0 = i * s.height / out_h, y1 = ((i + 1) * s.height + out_h - 1) / out_h;
    for (std::size_t j = 0; j < out_w; ++j) {
      const std::size_t x0 = j * s.width / out_w, x1 = ((j + 1) * s.width + out_w - 1) / out_w;
      for (std::size_t k = 0; k < s.channels; ++k) {
        float best = 0.0f;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) best = std::max(best, s.at(k, y, x));
        m.at(k + 1, i, j) = best;
      }
    }
  }
  return m;
}

std::vector<std::optional<std::pair<std::size_t, std::size_t>>> keypoint_locations(const SemanticMap& s) {
  std::vector<std::optional<std::pair<std::size_t, std::size_t>>> out(s.channels);
  for (std::size_t k = 0; k < s.channels; ++k)
    for (std::size_t y = 0; y < s.height && !out[k]; ++y)
      for (std::size_t x = 0; x < s.width; ++x)
        if (s.at(k, y, x) == 1.0f) {
          out[k] = std::make_pair(y, x);
          break;
        }
  return out;
}

MaskSet masks_from_keypoints(const SemanticMap& s, std::size_t out_h, std::size_t out_w, double sigma,
                             SigmaConvention convention) {
  if (s.mode != SemanticMode::kKeypoint) {
    throw ValidationError("masks_from_keypoints: semantic map is not in keypoint mode");
  }
  if (!(sigma > 0.0)) throw ValidationError("masks_from_keypoints: sigma must be positive");
  if (out_h == 0 || out_w == 0) throw ValidationError("masks_from_keypoints: empty output grid");
  const double var = convention == SigmaConvention::kStdDev ? sigma * sigma : sigma;
  const auto keys = keypoint_locations(s);
  MaskSet m{s.channels + 1, out_h, out_w, std::vector<double>((s.channels + 1) * out_h * out_w, 0.0)};
  std::fill(m.data.begin(), m.data.begin() + static_cast<long>(out_h * out_w), 1.0);
  const double sy = static_cast<double>(s.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(s.width) / static_cast<double>(out_w);
  for (std::size_t k = 0; k < s.channels; ++k) {
    if (!keys[k]) continue;
    const double ky = static_cast<double>(keys[k]->first), kx = static_cast<double>(keys[k]->second);
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j) {
        const double cy = (static_cast<double>(i) + 0.5) * sy - 0.5;
        const double cx = (static_cast<double>(j) + 0.5) * sx - 0.5;
        const double d2 = (cy - ky) * (cy - ky) + (cx - kx) * (cx - kx);
        m.at(k + 1, i, j) = std::exp(-d2 / (2.0 * var));
      }
  }
  return m;
}

MaskSet make_masks(const SemanticMap& s, std::size_t out_h, std::size_t out_w, const MaskOptions& opts) {
  return s.mode == SemanticMode::kScene ? masks_from_scene(s, out_h, out_w)
                                        : masks_from_keypoints(s, out_h, out_w, opts.sigma, opts.convention);
}

std::vector<int> class_labels(const SemanticMap& s) {
  std::vector<int> labels(s.height * s.width, 0);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    float best = -1.0f;
    for (std::size_t k = 0; k < s.channels; ++k) {
      const float v = s.data[k * s.height * s.width + p];
      if (v > best) {
        best = v;
        labels[p] = static_cast<int>(k);
      }
    }
  }
  return labels;
}

std::vector<Example> generate_examples(const DatasetSpec& spec) {
  std::vector<Example> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::uint64_t seed = mix_seed(spec.seed, i);
    out.push_back(spec.mode == SemanticMode::kScene ? gen_scene(seed, spec.height, spec.width, spec.channels)
                                                    : gen_keypoint(seed, spec.height, spec.width, spec.channels));
  }
  return out;
}

}  // namespace semdisc
