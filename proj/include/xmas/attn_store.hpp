#pragma once

// Binary persistence for cross-modal attention dumps (XMAD) and alignment
// trajectory tables (XMAT). Both formats are little-endian with float32
// payloads; everything is widened to double on load.
//
// XMAD v1
//   "XMAD" | version u32 = 1 | layer_count u32 | n_checkpoints u32 | n_examples u64
//   index: n_examples x u64 absolute byte offsets of the records
//   record: example_id u64, then per checkpoint { n_T u32, n_I u32, n_T*n_I f32 row-major }
//
// XMAT v1
//   "XMAT" | version u32 = 1 | n_examples u64 | n_checkpoints u32 | n_examples*n_checkpoints f32

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace xmas {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kDumpHeaderBytes = 24;
inline constexpr std::size_t kTableHeaderBytes = 20;

/// One example's layer-summed cross-modal blocks, one n_T x n_I matrix per checkpoint.
struct AttentionRecord {
  std::uint64_t example_id = 0;
  std::vector<Eigen::MatrixXd> checkpoints;
};

struct AttentionDump {
  std::uint32_t layer_count = 1;
  std::uint32_t n_checkpoints = 0;
  /// Records in file order; example ids form a permutation of [0, n).
  std::vector<AttentionRecord> records;

  std::size_t n_examples() const { return records.size(); }
};

/// Row i holds the alignment trajectory of example i.
struct TrajectoryTable {
  RowMatrix scores;

  std::size_t n_examples() const { return static_cast<std::size_t>(scores.rows()); }
  std::size_t n_checkpoints() const { return static_cast<std::size_t>(scores.cols()); }
};

/// Throws ParseError(kInvariant / kNonFinite / kOutOfRange) if the dump breaks
/// an invariant. Values are checked after rounding to float32.
void validate(const AttentionDump& dump);
void validate(const TrajectoryTable& table);

/// Exact size in bytes of the XMAD encoding of `dump`.
std::uint64_t encoded_size(const AttentionDump& dump);

void write_attention_dump(const AttentionDump& dump, std::ostream& out);
AttentionDump read_attention_dump(std::span<const std::uint8_t> bytes, int threads = 1);
AttentionDump read_attention_dump(std::istream& in, int threads = 1);

void write_trajectory_table(const TrajectoryTable& table, std::ostream& out);
TrajectoryTable read_trajectory_table(std::span<const std::uint8_t> bytes);
TrajectoryTable read_trajectory_table(std::istream& in);

// File helpers. Open/read/write failures raise IoError.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
AttentionDump load_attention_dump(const std::filesystem::path& path, int threads = 1);
void save_attention_dump(const AttentionDump& dump, const std::filesystem::path& path);
TrajectoryTable load_trajectory_table(const std::filesystem::path& path);
void save_trajectory_table(const TrajectoryTable& table, const std::filesystem::path& path);

}  // namespace xmas
