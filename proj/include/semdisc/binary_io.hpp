#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "semdisc/error.hpp"

namespace semdisc::io {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

// Append-only little-endian byte buffer.
class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void magic(std::string_view m) { bytes(m.data(), m.size()); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f32(float v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  const std::vector<unsigned char>& buffer() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

// Bounds-checked reader; any read past the end raises a truncation error.
class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}

  void bytes(void* p, std::size_t n) {
    if (n > data_.size() - pos_) {
      throw IoError(IoError::Kind::kTruncated, source_ + ": truncated at byte " + std::to_string(pos_) +
                                                   " (needed " + std::to_string(n) + " more)");
    }
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() { return read<std::uint32_t>(); }
  std::uint64_t u64() { return read<std::uint64_t>(); }
  float f32() { return read<float>(); }
  double f64() { return read<double>(); }
  std::string str() {
    std::string s(u32(), '\0');
    bytes(s.data(), s.size());
    return s;
  }

  // Checks a 4-byte magic whose last character is the format version.
  void expect_magic(std::string_view magic) {
    char got[4];
    bytes(got, 4);
    if (std::memcmp(got, magic.data(), 3) != 0) {
      throw IoError(IoError::Kind::kBadMagic, source_ + ": bad magic, expected '" + std::string(magic) + "'");
    }
    if (got[3] != magic[3]) {
      throw IoError(IoError::Kind::kVersion, source_ + ": format version '" + std::string(got, 4) +
                                                 "' is not supported (expected '" + std::string(magic) + "')");
    }
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& source() const { return source_; }

 private:
  template <class T>
  T read() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }

  std::vector<unsigned char> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);

// 64-bit FNV-1a, used for content hashes in run manifests.
std::uint64_t fnv1a(const unsigned char* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view s);
std::string hex64(std::uint64_t v);

}  // namespace semdisc::io
