#pragma once

#include "xmas/attn_store.hpp"
#include "xmas/svd_align.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace xmas {

/// Default checkpoint count of the reference training schedule.
inline constexpr std::size_t kDefaultCheckpoints = 7;

/// How oscillation of an alignment trajectory is measured.
enum class InstabilityVariant {
  kAbsDiff,   ///< sum of |consecutive differences| (default)
  kSqrDiff,   ///< sum of squared consecutive differences
  kVariance,  ///< population variance of the trajectory values
};

InstabilityVariant parse_instability_variant(std::string_view name);
std::string_view to_string(InstabilityVariant v);

/// Cell (i, j) is the alignment score of example i's block at checkpoint j.
/// Rows are indexed by example_id. Rows are scored in parallel; each cell is
/// computed independently so the table does not depend on `threads`.
TrajectoryTable build_trajectory_table(const AttentionDump& dump, std::size_t k = kDefaultTopK, int threads = 1);

/// Total oscillation over the r-1 adjacent checkpoint pairs; 0 when r == 1.
double instability_score(std::span<const double> trajectory,
                         InstabilityVariant variant = InstabilityVariant::kAbsDiff);

std::vector<double> instability_scores(const TrajectoryTable& table,
                                       InstabilityVariant variant = InstabilityVariant::kAbsDiff);

/// Per-checkpoint z-normalization across examples (columns with zero spread
/// are only centered). Used for clustering when explicitly requested.
RowMatrix z_normalize_columns(const RowMatrix& rows);

}  // namespace xmas
