#include "xmas/errors.hpp"

namespace xmas {

const char* to_string(ParseErrorKind kind) noexcept {
  switch (kind) {
    case ParseErrorKind::kBadMagic: return "bad_magic";
    case ParseErrorKind::kVersionMismatch: return "version_mismatch";
    case ParseErrorKind::kTruncated: return "truncated";
    case ParseErrorKind::kNonFinite: return "non_finite";
    case ParseErrorKind::kOutOfRange: return "out_of_range";
    case ParseErrorKind::kInvalidLayout: return "invalid_layout";
    case ParseErrorKind::kInvariant: return "invariant";
  }
  return "unknown";
}

namespace {

std::string decorate(ParseErrorKind kind, const std::string& what,
                     std::optional<std::uint64_t> example_id, std::optional<std::uint32_t> checkpoint) {
  std::string out = std::string(to_string(kind)) + ": " + what;
  if (example_id) out += " [example_id=" + std::to_string(*example_id);
  if (checkpoint) out += (example_id ? ", " : " [") + std::string("checkpoint=") + std::to_string(*checkpoint);
  if (example_id || checkpoint) out += "]";
  return out;
}

}  // namespace

ParseError::ParseError(ParseErrorKind kind, const std::string& what,
                       std::optional<std::uint64_t> example_id, std::optional<std::uint32_t> checkpoint)
    : Error(decorate(kind, what, example_id, checkpoint)),
      kind_(kind),
      example_id_(example_id),
      checkpoint_(checkpoint) {}

}  // namespace xmas
