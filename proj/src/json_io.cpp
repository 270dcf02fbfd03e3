#include "xmas/json_io.hpp"

#include "xmas/attn_store.hpp"
#include "xmas/errors.hpp"

#include <fstream>

namespace xmas {

void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing", 0);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write of " + path.string() + " failed", 0);
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(ParseErrorKind::kInvalidLayout, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace xmas
