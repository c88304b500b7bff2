#include "semdisc/png.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>

#include "semdisc/binary_io.hpp"
#include "semdisc/error.hpp"

namespace semdisc::png {
namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp((v + 1.0) * 127.5, 0.0, 255.0)));
}

template <class T>
RgbImage planar_to_rgb(std::span<const T> chw, std::size_t height, std::size_t width) {
  if (chw.size() != 3 * height * width) throw ShapeError("png: planar image size mismatch");
  RgbImage img(width, height);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.pixels[(y * width + x) * 3 + c] = to_byte(static_cast<double>(chw[(c * height + y) * width + x]));
  return img;
}

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

void chunk(std::vector<unsigned char>& out, const char* type, const std::vector<unsigned char>& payload) {
  put_be32(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

RgbImage from_planar(std::span<const float> chw, std::size_t height, std::size_t width) {
  return planar_to_rgb(chw, height, width);
}

RgbImage from_planar(std::span<const double> chw, std::size_t height, std::size_t width) {
  return planar_to_rgb(chw, height, width);
}

RgbImage colorize(const SemanticMap& s) {
  RgbImage img(s.width, s.height);
  if (s.mode == SemanticMode::kScene) {
    const auto labels = class_labels(s);
    for (std::size_t p = 0; p < labels.size(); ++p) {
      const auto col = palette_color(static_cast<std::size_t>(labels[p]) % kPaletteSize);
      for (std::size_t c = 0; c < 3; ++c) img.pixels[p * 3 + c] = to_byte(col[c]);
    }
    return img;
  }
  const auto keys = keypoint_locations(s);
  for (std::size_t k = 0; k < keys.size(); ++k) {
    if (!keys[k]) continue;
    const auto col = palette_color(1 + (k % (kPaletteSize - 1)));
    const long ky = static_cast<long>(keys[k]->first), kx = static_cast<long>(keys[k]->second);
    for (long dy = -1; dy <= 1; ++dy)
      for (long dx = -1; dx <= 1; ++dx) {
        const long y = ky + dy, x = kx + dx;
        if (y < 0 || x < 0 || y >= static_cast<long>(s.height) || x >= static_cast<long>(s.width)) continue;
        for (std::size_t c = 0; c < 3; ++c) img.pixels[(static_cast<std::size_t>(y) * s.width + x) * 3 + c] = to_byte(col[c]);
      }
  }
  return img;
}

RgbImage grid(const std::vector<std::vector<RgbImage>>& rows) {
  if (rows.empty() || rows.front().empty()) throw ValidationError("png::grid: no tiles");
  const std::size_t tw = rows.front().front().width, th = rows.front().front().height;
  std::size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  RgbImage out(cols * (tw + 1) + 1, rows.size() * (th + 1) + 1, 255);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      const RgbImage& t = rows[i][j];
      if (t.width != tw || t.height != th) throw ValidationError("png::grid: tiles differ in size");
      for (std::size_t y = 0; y < th; ++y) {
        const std::size_t oy = 1 + i * (th + 1) + y, ox = 1 + j * (tw + 1);
        std::copy_n(t.pixels.begin() + static_cast<long>(y * tw * 3), tw * 3,
                    out.pixels.begin() + static_cast<long>((oy * out.width + ox) * 3));
      }
    }
  return out;
}

std::vector<unsigned char> encode(const RgbImage& img) {
  std::vector<unsigned char> raw;
  raw.reserve(img.height * (img.width * 3 + 1));
  for (std::size_t y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), img.pixels.begin() + static_cast<long>(y * img.width * 3),
               img.pixels.begin() + static_cast<long>((y + 1) * img.width * 3));
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw IoError(IoError::Kind::kWrite, "png: deflate failed");
  }
  z.resize(zlen);

  std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<unsigned char> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(img.width));
  put_be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit RGB, deflate, no filter, no interlace
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", z);
  chunk(out, "IEND", {});
  return out;
}

void write(const std::filesystem::path& path, const RgbImage& img) { io::write_file(path, encode(img)); }

}  // namespace semdisc::png
