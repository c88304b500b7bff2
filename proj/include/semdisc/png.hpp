#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "semdisc/datagen.hpp"

namespace semdisc::png {

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * 3, fill) {}
};

// Planar [3][H][W] values in [-1, 1] to 8-bit RGB.
RgbImage from_planar(std::span<const float> chw, std::size_t height, std::size_t width);
RgbImage from_planar(std::span<const double> chw, std::size_t height, std::size_t width);

// Scene maps are painted with the class palette; keypoint maps draw each
// peak as a small dot in its joint colour.
RgbImage colorize(const SemanticMap& s);

// Tiles rows of equally sized images with a 1-pixel separator.
RgbImage grid(const std::vector<std::vector<RgbImage>>& rows);

std::vector<unsigned char> encode(const RgbImage& img);
void write(const std::filesystem::path& path, const RgbImage& img);

}  // namespace semdisc::png
