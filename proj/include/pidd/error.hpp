#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pidd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition violated by a caller-supplied value or shape.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Malformed container, manifest or config contents.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(what) {}
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_ = 0;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Divergence, non-finite values, or other numerical breakdown.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A metric whose reference image carries no energy.
class UndefinedReference : public Error {
 public:
  using Error::Error;
};

}  // namespace pidd
