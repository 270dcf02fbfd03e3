#include "xmas/attn_store.hpp"

#include "xmas/errors.hpp"
#include "xmas/parallel.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <string>

namespace xmas {

namespace {

constexpr char kDumpMagic[4] = {'X', 'M', 'A', 'D'};
constexpr char kTableMagic[4] = {'X', 'M', 'A', 'T'};

// Little-endian encoding independent of host byte order.
class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }

  /// Flushes the buffer to `out`, advancing `offset`.
  void flush(std::ostream& out, std::uint64_t& offset) {
    if (buf_.empty()) return;
    out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw IoError("write to byte sink failed", offset);
    offset += buf_.size();
    buf_.clear();
  }

 private:
  std::vector<std::uint8_t> buf_;
};

std::uint32_t load_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t load_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

float load_f32(const std::uint8_t* p) { return std::bit_cast<float>(load_u32(p)); }

std::string byte_count_message(const char* what, std::uint64_t expected, std::uint64_t actual) {
  return std::string(what) + ": expected " + std::to_string(expected) + " bytes, have " + std::to_string(actual);
}

void check_value(float v, std::uint32_t layer_count, std::uint64_t id, std::uint32_t checkpoint) {
  if (!std::isfinite(v)) {
    throw ParseError(ParseErrorKind::kNonFinite, "non-finite attention entry", id, checkpoint);
  }
  if (v < 0.0f || v > static_cast<float>(layer_count)) {
    throw ParseError(ParseErrorKind::kOutOfRange,
                     "attention entry " + std::to_string(v) + " outside [0, " + std::to_string(layer_count) + "]",
                     id, checkpoint);
  }
}

std::uint64_t record_size(const AttentionRecord& rec) {
  std::uint64_t size = 8;
  for (const auto& m : rec.checkpoints) size += 8 + 4 * static_cast<std::uint64_t>(m.size());
  return size;
}

void check_magic_and_version(std::span<const std::uint8_t> bytes, const char (&magic)[4], std::size_t header,
                             const char* kind) {
  if (bytes.size() < 4) {
    throw ParseError(ParseErrorKind::kTruncated, byte_count_message(kind, header, bytes.size()));
  }
  if (std::memcmp(bytes.data(), magic, 4) != 0) {
    throw ParseError(ParseErrorKind::kBadMagic, std::string("expected magic \"") + std::string(magic, 4) + "\", got \"" +
                                                    std::string(reinterpret_cast<const char*>(bytes.data()), 4) + "\"");
  }
  if (bytes.size() < header) {
    throw ParseError(ParseErrorKind::kTruncated, byte_count_message(kind, header, bytes.size()));
  }
  const std::uint32_t version = load_u32(bytes.data() + 4);
  if (version != kFormatVersion) {
    throw ParseError(ParseErrorKind::kVersionMismatch,
                     "unsupported format version " + std::to_string(version) + " (expected 1)");
  }
}

struct ParsedRecord {
  AttentionRecord record;
  std::uint64_t end = 0;
};

// Parses the record starting at `begin`; it must fit in [begin, limit).
ParsedRecord parse_record(std::span<const std::uint8_t> bytes, std::uint64_t begin, std::uint64_t limit,
                          bool is_last, std::uint32_t n_checkpoints, std::uint32_t layer_count,
                          std::size_t index) {
  auto out_of_space = [&](std::uint64_t need, std::optional<std::uint64_t> id, std::optional<std::uint32_t> cp) {
    if (is_last) {
      throw ParseError(ParseErrorKind::kTruncated, byte_count_message("payload truncated", need, bytes.size()), id,
                       cp);
    }
    throw ParseError(ParseErrorKind::kInvalidLayout,
                     "record " + std::to_string(index) + " overruns the next index offset " + std::to_string(limit), id,
                     cp);
  };

  std::uint64_t pos = begin;
  if (limit - pos < 8) out_of_space(pos + 8, std::nullopt, std::nullopt);
  ParsedRecord parsed;
  AttentionRecord& rec = parsed.record;
  rec.example_id = load_u64(bytes.data() + pos);
  pos += 8;
  rec.checkpoints.reserve(n_checkpoints);
  for (std::uint32_t c = 0; c < n_checkpoints; ++c) {
    if (limit - pos < 8) out_of_space(pos + 8, rec.example_id, c);
    const std::uint32_t n_text = load_u32(bytes.data() + pos);
    const std::uint32_t n_image = load_u32(bytes.data() + pos + 4);
    pos += 8;
    const std::uint64_t payload = 4ull * n_text * n_image;
    if (limit - pos < payload) out_of_space(pos + payload, rec.example_id, c);
    Eigen::MatrixXd m(n_text, n_image);
    const std::uint8_t* p = bytes.data() + pos;
    for (std::uint32_t r = 0; r < n_text; ++r) {
      for (std::uint32_t col = 0; col < n_image; ++col, p += 4) {
        const float v = load_f32(p);
        check_value(v, layer_count, rec.example_id, c);
        m(r, col) = static_cast<double>(v);
      }
    }
    pos += payload;
    rec.checkpoints.push_back(std::move(m));
  }
  parsed.end = pos;
  return parsed;
}

}  // namespace

void validate(const AttentionDump& dump) {
  const std::size_t n = dump.records.size();
  if (dump.layer_count == 0) throw ParseError(ParseErrorKind::kInvariant, "layer_count must be at least 1");
  if (n > 0 && dump.n_checkpoints == 0) {
    throw ParseError(ParseErrorKind::kInvariant, "n_checkpoints must be at least 1 when examples are present");
  }
  std::vector<bool> seen(n, false);
  for (const auto& rec : dump.records) {
    if (rec.example_id >= n) {
      throw ParseError(ParseErrorKind::kInvariant, "example_id outside [0, " + std::to_string(n) + ")", rec.example_id);
    }
    if (seen[rec.example_id]) throw ParseError(ParseErrorKind::kInvariant, "duplicate example_id", rec.example_id);
    seen[rec.example_id] = true;
    if (rec.checkpoints.size() != dump.n_checkpoints) {
      throw ParseError(ParseErrorKind::kInvariant,
                       "record has " + std::to_string(rec.checkpoints.size()) + " checkpoints, header declares " +
                           std::to_string(dump.n_checkpoints),
                       rec.example_id);
    }
    for (std::uint32_t c = 0; c < dump.n_checkpoints; ++c) {
      const auto& m = rec.checkpoints[c];
      if (static_cast<std::uint64_t>(m.rows()) > std::numeric_limits<std::uint32_t>::max() ||
          static_cast<std::uint64_t>(m.cols()) > std::numeric_limits<std::uint32_t>::max()) {
        throw ParseError(ParseErrorKind::kInvariant, "matrix dimension exceeds u32", rec.example_id, c);
      }
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        check_value(static_cast<float>(m.data()[i]), dump.layer_count, rec.example_id, c);
      }
    }
  }
}

void validate(const TrajectoryTable& table) {
  const auto& s = table.scores;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      const float v = static_cast<float>(s(i, j));
      if (!std::isfinite(v)) {
        throw ParseError(ParseErrorKind::kNonFinite, "non-finite score", static_cast<std::uint64_t>(i),
                         static_cast<std::uint32_t>(j));
      }
      if (v < 0.0f) {
        throw ParseError(ParseErrorKind::kOutOfRange, "negative score " + std::to_string(v),
                         static_cast<std::uint64_t>(i), static_cast<std::uint32_t>(j));
      }
    }
  }
}

std::uint64_t encoded_size(const AttentionDump& dump) {
  std::uint64_t size = kDumpHeaderBytes + 8ull * dump.records.size();
  for (const auto& rec : dump.records) size += record_size(rec);
  return size;
}

void write_attention_dump(const AttentionDump& dump, std::ostream& out) {
  validate(dump);
  std::uint64_t offset = 0;
  ByteWriter w;
  w.raw(kDumpMagic, 4);
  w.u32(kFormatVersion);
  w.u32(dump.layer_count);
  w.u32(dump.n_checkpoints);
  w.u64(dump.records.size());
  std::uint64_t record_offset = kDumpHeaderBytes + 8ull * dump.records.size();
  for (const auto& rec : dump.records) {
    w.u64(record_offset);
    record_offset += record_size(rec);
  }
  w.flush(out, offset);

  for (const auto& rec : dump.records) {
    w.u64(rec.example_id);
    for (const auto& m : rec.checkpoints) {
      w.u32(static_cast<std::uint32_t>(m.rows()));
      w.u32(static_cast<std::uint32_t>(m.cols()));
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) w.f32(static_cast<float>(m(r, c)));
      }
    }
    w.flush(out, offset);
  }
  out.flush();
  if (!out) throw IoError("flush of byte sink failed", offset);
}

AttentionDump read_attention_dump(std::span<const std::uint8_t> bytes, int threads) {
  check_magic_and_version(bytes, kDumpMagic, kDumpHeaderBytes, "XMAD header");
  AttentionDump dump;
  dump.layer_count = load_u32(bytes.data() + 8);
  dump.n_checkpoints = load_u32(bytes.data() + 12);
  const std::uint64_t n = load_u64(bytes.data() + 16);
  if (dump.layer_count == 0) throw ParseError(ParseErrorKind::kInvariant, "layer_count must be at least 1");

  const std::uint64_t available = bytes.size() - kDumpHeaderBytes;
  if (n > available / 8) {
    throw ParseError(ParseErrorKind::kTruncated,
                     byte_count_message("index block truncated", kDumpHeaderBytes + 8 * n, bytes.size()));
  }
  if (n > 0 && dump.n_checkpoints == 0) {
    throw ParseError(ParseErrorKind::kInvariant, "n_checkpoints must be at least 1 when examples are present");
  }

  std::vector<std::uint64_t> offsets(n);
  const std::uint64_t data_start = kDumpHeaderBytes + 8 * n;
  for (std::uint64_t i = 0; i < n; ++i) {
    offsets[i] = load_u64(bytes.data() + kDumpHeaderBytes + 8 * i);
    const std::uint64_t expected_min = i == 0 ? data_start : offsets[i - 1] + 8;
    if ((i == 0 && offsets[i] != data_start) || offsets[i] < expected_min) {
      throw ParseError(ParseErrorKind::kInvalidLayout, "index offset " + std::to_string(i) + " = " +
                                                           std::to_string(offsets[i]) + " is inconsistent");
    }
  }
  if (n > 0 && offsets.back() > bytes.size()) {
    throw ParseError(ParseErrorKind::kTruncated,
                     byte_count_message("record block truncated", offsets.back() + 8, bytes.size()));
  }
  if (n == 0 && bytes.size() != kDumpHeaderBytes) {
    throw ParseError(ParseErrorKind::kInvalidLayout,
                     byte_count_message("trailing bytes after empty dump", kDumpHeaderBytes, bytes.size()));
  }

  // Each record lies in [offsets[i], offsets[i+1]); records are decoded in parallel shards.
  std::vector<ParsedRecord> parsed(n);
  for_each_chunk(n, 64, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const bool last = i + 1 == n;
      const std::uint64_t limit = last ? bytes.size() : offsets[i + 1];
      parsed[i] = parse_record(bytes, offsets[i], limit, last, dump.n_checkpoints, dump.layer_count, i);
    }
  });

  dump.records.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t limit = i + 1 == n ? bytes.size() : offsets[i + 1];
    if (parsed[i].end != limit) {
      throw ParseError(ParseErrorKind::kInvalidLayout,
                       i + 1 == n ? byte_count_message("trailing bytes after last record", parsed[i].end, bytes.size())
                                  : "record " + std::to_string(i) + " ends before the next index offset",
                       parsed[i].record.example_id);
    }
    dump.records.push_back(std::move(parsed[i].record));
  }

  std::vector<bool> seen(n, false);
  for (const auto& rec : dump.records) {
    if (rec.example_id >= n) {
      throw ParseError(ParseErrorKind::kInvariant, "example_id outside [0, " + std::to_string(n) + ")", rec.example_id);
    }
    if (seen[rec.example_id]) throw ParseError(ParseErrorKind::kInvariant, "duplicate example_id", rec.example_id);
    seen[rec.example_id] = true;
  }
  return dump;
}

AttentionDump read_attention_dump(std::istream& in, int threads) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read from byte source failed", bytes.size());
  return read_attention_dump(std::span<const std::uint8_t>(bytes), threads);
}

void write_trajectory_table(const TrajectoryTable& table, std::ostream& out) {
  validate(table);
  std::uint64_t offset = 0;
  ByteWriter w;
  w.raw(kTableMagic, 4);
  w.u32(kFormatVersion);
  w.u64(table.n_examples());
  w.u32(static_cast<std::uint32_t>(table.n_checkpoints()));
  w.flush(out, offset);
  for (Eigen::Index i = 0; i < table.scores.rows(); ++i) {
    for (Eigen::Index j = 0; j < table.scores.cols(); ++j) w.f32(static_cast<float>(table.scores(i, j)));
    w.flush(out, offset);
  }
  out.flush();
  if (!out) throw IoError("flush of byte sink failed", offset);
}

TrajectoryTable read_trajectory_table(std::span<const std::uint8_t> bytes) {
  check_magic_and_version(bytes, kTableMagic, kTableHeaderBytes, "XMAT header");
  const std::uint64_t n = load_u64(bytes.data() + 8);
  const std::uint32_t r = load_u32(bytes.data() + 16);
  const std::uint64_t available = bytes.size() - kTableHeaderBytes;
  if (r > 0 && n > available / (4ull * r)) {
    throw ParseError(ParseErrorKind::kTruncated,
                     "score block truncated: expected " + std::to_string(n) + "x" + std::to_string(r) +
                         " floats, have " + std::to_string(available) + " payload bytes");
  }
  const std::uint64_t expected = kTableHeaderBytes + 4ull * n * r;
  if (bytes.size() != expected) {
    throw ParseError(ParseErrorKind::kInvalidLayout, byte_count_message("trailing bytes", expected, bytes.size()));
  }
  TrajectoryTable table;
  table.scores.resize(static_cast<Eigen::Index>(n), r);
  const std::uint8_t* p = bytes.data() + kTableHeaderBytes;
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < r; ++j, p += 4) {
      const float v = load_f32(p);
      if (!std::isfinite(v)) throw ParseError(ParseErrorKind::kNonFinite, "non-finite score", i, j);
      if (v < 0.0f) throw ParseError(ParseErrorKind::kOutOfRange, "negative score " + std::to_string(v), i, j);
      table.scores(static_cast<Eigen::Index>(i), j) = static_cast<double>(v);
    }
  }
  return table;
}

TrajectoryTable read_trajectory_table(std::istream& in) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read from byte source failed", bytes.size());
  return read_trajectory_table(std::span<const std::uint8_t>(bytes));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading", 0);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read of " + path.string() + " failed", bytes.size());
  return bytes;
}

AttentionDump load_attention_dump(const std::filesystem::path& path, int threads) {
  const auto bytes = read_file_bytes(path);
  return read_attention_dump(std::span<const std::uint8_t>(bytes), threads);
}

void save_attention_dump(const AttentionDump& dump, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing", 0);
  write_attention_dump(dump, out);
}

TrajectoryTable load_trajectory_table(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return read_trajectory_table(std::span<const std::uint8_t>(bytes));
}

void save_trajectory_table(const TrajectoryTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing", 0);
  write_trajectory_table(table, out);
}

}  // namespace xmas
