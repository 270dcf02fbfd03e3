#pragma once

#include "xmas/cluster.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace xmas {

enum class SamplingMode {
  kStability,  ///< lowest instability first, ties by example index
  kRandom,     ///< uniform without replacement, seeded
};

SamplingMode parse_sampling_mode(std::string_view name);
std::string_view to_string(SamplingMode mode);

/// Per-cluster record, listed in processing order (ascending size, then id).
struct ClusterTake {
  std::uint32_t cluster_id = 0;
  std::size_t size = 0;
  std::size_t quota = 0;  ///< floor((B - |S|) / (K - k + 1)) at this cluster's turn
  std::size_t taken = 0;  ///< including residual slots
  bool fully_included = false;
  std::size_t residual_taken = 0;
};

struct SelectionResult {
  std::vector<std::uint32_t> selected;  ///< ascending, no duplicates
  std::vector<ClusterTake> per_cluster;
  std::size_t budget = 0;
  std::size_t n_examples = 0;
  SamplingMode mode = SamplingMode::kStability;
  std::optional<std::uint64_t> seed;
  /// Slots left over from quota flooring and handed to the largest clusters.
  std::size_t residual_filled = 0;
};

/// Balanced subset extraction. Clusters are visited smallest first; each takes
/// all of its members if they fit its quota, otherwise its `quota` most stable
/// members. |selected| == min(budget, n).
SelectionResult select_subset(std::span<const std::uint32_t> assignment, std::size_t clusters,
                              std::span<const double> instability, std::size_t budget);
SelectionResult select_subset(const ClusterModel& model, std::span<const double> instability, std::size_t budget);

/// Same quota schedule, uniform sampling inside oversized clusters.
SelectionResult sample_random_within_clusters(std::span<const std::uint32_t> assignment, std::size_t clusters,
                                              std::size_t budget, std::uint64_t seed);
SelectionResult sample_random_within_clusters(const ClusterModel& model, std::size_t budget, std::uint64_t seed);

/// One decimal index per line.
void write_indices(const SelectionResult& result, std::ostream& out);

}  // namespace xmas
