#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "semdisc/datagen.hpp"

namespace semdisc {

// On-disk layout (little-endian):
//   "SDL1" | u32 mode | u32 count | u32 H | u32 W | u32 K
//   then per example: f32 image[3][H][W], f32 semantics[K][H][W]
struct DatasetHeader {
  SemanticMode mode = SemanticMode::kScene;
  std::uint32_t count = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Example> examples;
};

Dataset make_dataset(SemanticMode mode, std::size_t height, std::size_t width, std::size_t channels,
                     std::vector<Example> examples);

std::vector<unsigned char> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::vector<unsigned char> bytes, const std::string& source = "<memory>");

void write_dataset(const std::filesystem::path& path, const Dataset& ds);
// Throws IoError (bad magic, version, truncation) without returning partial data.
Dataset read_dataset(const std::filesystem::path& path);

// Images and semantics of two datasets are bit-identical (seeds are not stored).
bool same_content(const Dataset& a, const Dataset& b);

}  // namespace semdisc
