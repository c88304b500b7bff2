#include "semdisc/dataset_io.hpp"

#include <cstring>

#include "semdisc/binary_io.hpp"
#include "semdisc/error.hpp"

namespace semdisc {

Dataset make_dataset(SemanticMode mode, std::size_t height, std::size_t width, std::size_t channels,
                     std::vector<Example> examples) {
  Dataset ds;
  ds.header = {mode, static_cast<std::uint32_t>(examples.size()), static_cast<std::uint32_t>(height),
               static_cast<std::uint32_t>(width), static_cast<std::uint32_t>(channels)};
  for (const Example& ex : examples) {
    if (ex.image.size() != 3 * height * width || ex.semantics.channels != channels || ex.semantics.height != height ||
        ex.semantics.width != width || ex.semantics.mode != mode) {
      throw ValidationError("make_dataset: example does not match dataset geometry");
    }
  }
  ds.examples = std::move(examples);
  return ds;
}

std::vector<unsigned char> encode_dataset(const Dataset& ds) {
  const DatasetHeader& h = ds.header;
  if (ds.examples.size() != h.count) throw ValidationError("encode_dataset: header count does not match examples");
  io::ByteWriter w;
  w.magic("SDL1");
  w.u32(static_cast<std::uint32_t>(h.mode));
  w.u32(h.count);
  w.u32(h.height);
  w.u32(h.width);
  w.u32(h.channels);
  for (const Example& ex : ds.examples) {
    w.bytes(ex.image.data(), ex.image.size() * sizeof(float));
    w.bytes(ex.semantics.data.data(), ex.semantics.data.size() * sizeof(float));
  }
  return w.buffer();
}

Dataset decode_dataset(std::vector<unsigned char> bytes, const std::string& source) {
  io::ByteReader r(std::move(bytes), source);
  r.expect_magic("SDL1");
  Dataset ds;
  DatasetHeader& h = ds.header;
  const std::uint32_t mode = r.u32();
  if (mode > 1) throw IoError(IoError::Kind::kFormat, source + ": unknown mode " + std::to_string(mode));
  h.mode = static_cast<SemanticMode>(mode);
  h.count = r.u32();
  h.height = r.u32();
  h.width = r.u32();
  h.channels = r.u32();
  const std::size_t plane = static_cast<std::size_t>(h.height) * h.width;
  const std::size_t per_example = (3 + static_cast<std::size_t>(h.channels)) * plane * sizeof(float);
  if (per_example * h.count > r.remaining()) {
    throw IoError(IoError::Kind::kTruncated, source + ": truncated, header declares " + std::to_string(h.count) +
                                                 " examples but only " + std::to_string(r.remaining()) +
                                                 " payload bytes follow");
  }
  ds.examples.reserve(h.count);
  for (std::uint32_t i = 0; i < h.count; ++i) {
    Example ex;
    ex.image.resize(3 * plane);
    r.bytes(ex.image.data(), ex.image.size() * sizeof(float));
    ex.semantics = {h.mode, h.channels, h.height, h.width, std::vector<float>(h.channels * plane)};
    r.bytes(ex.semantics.data.data(), ex.semantics.data.size() * sizeof(float));
    ds.examples.push_back(std::move(ex));
  }
  if (r.remaining() != 0) {
    throw IoError(IoError::Kind::kFormat, source + ": " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) { io::write_file(path, encode_dataset(ds)); }

Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(io::read_file(path), path.string()); }

bool same_content(const Dataset& a, const Dataset& b) {
  auto same_bits = [](const std::vector<float>& x, const std::vector<float>& y) {
    return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) == 0;
  };
  const DatasetHeader &ha = a.header, &hb = b.header;
  if (ha.mode != hb.mode || ha.count != hb.count || ha.height != hb.height || ha.width != hb.width ||
      ha.channels != hb.channels || a.examples.size() != b.examples.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.examples.size(); ++i) {
    if (!same_bits(a.examples[i].image, b.examples[i].image) ||
        !same_bits(a.examples[i].semantics.data, b.examples[i].semantics.data)) {
      return false;
    }
  }
  return true;
}

}  // namespace semdisc
