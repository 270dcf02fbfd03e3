#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace xmas {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure of an underlying byte sink or source.
class IoError : public Error {
 public:
  IoError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

enum class ParseErrorKind {
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kNonFinite,
  kOutOfRange,
  kInvalidLayout,
  kInvariant,
};

const char* to_string(ParseErrorKind kind) noexcept;

/// Rejected file contents. Carries the offending record when one is known.
class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, const std::string& what,
             std::optional<std::uint64_t> example_id = std::nullopt,
             std::optional<std::uint32_t> checkpoint = std::nullopt);

  ParseErrorKind kind() const noexcept { return kind_; }
  std::optional<std::uint64_t> example_id() const noexcept { return example_id_; }
  std::optional<std::uint32_t> checkpoint() const noexcept { return checkpoint_; }

 private:
  ParseErrorKind kind_;
  std::optional<std::uint64_t> example_id_;
  std::optional<std::uint32_t> checkpoint_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Non-finite input or an operation undefined at the given values.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace xmas
