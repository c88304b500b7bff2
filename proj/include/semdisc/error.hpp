#pragma once

#include <stdexcept>
#include <string>

namespace semdisc {

// Root of every error the library throws. Each subclass maps to one failure
// category so callers (and the CLI exit-code policy) can dispatch on type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes; the message names the op and the shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced by a forward op, a loss, or a gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Out-of-range argument or configuration value.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  enum class Kind { kOpen, kBadMagic, kVersion, kTruncated, kFormat, kWrite };

  IoError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace semdisc
