#pragma once

#include "xmas/attn_store.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace xmas {

inline constexpr std::size_t kDefaultClusters = 1000;

struct KMeansOptions {
  std::size_t clusters = kDefaultClusters;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  /// Stop once the relative inertia improvement of an iteration drops below this.
  double tol = 1e-4;
  int threads = 1;
};

struct ClusterModel {
  RowMatrix centroids;                   ///< K x r
  std::vector<std::uint32_t> assignment;  ///< one cluster index per row
  double inertia = 0.0;                  ///< sum of squared distances to assigned centroids
  std::uint64_t seed = 0;
  std::size_t iterations_run = 0;
  /// Inertia after the seeding assignment and after every Lloyd iteration.
  std::vector<double> inertia_history;

  std::size_t clusters() const { return static_cast<std::size_t>(centroids.rows()); }
  std::size_t n_examples() const { return assignment.size(); }
};

/// Lloyd's algorithm with k-means++ seeding over the rows of `rows`.
/// Squared Euclidean distance; ties between centroids go to the lowest index.
/// An empty cluster is re-seeded at the point farthest from its centroid when
/// such a point lies at positive distance; otherwise it stays empty.
/// Output is bit-identical for every value of `opts.threads`.
ClusterModel kmeans(const RowMatrix& rows, const KMeansOptions& opts);

std::vector<std::size_t> cluster_sizes(const ClusterModel& model);

/// Sum of squared distances from each row to its assigned centroid.
double compute_inertia(const RowMatrix& rows, const ClusterModel& model);

/// Writes the model summary as JSON to `json_path` and the assignments as a
/// little-endian u32 array to `assignments_path`. The JSON records the
/// assignments file name relative to its own directory.
void save_cluster_model(const ClusterModel& model, const std::filesystem::path& json_path,
                        const std::filesystem::path& assignments_path);
ClusterModel load_cluster_model(const std::filesystem::path& json_path);

std::vector<std::uint32_t> read_assignments(const std::filesystem::path& path);
void write_assignments(const std::vector<std::uint32_t>& assignment, const std::filesystem::path& path);

}  // namespace xmas
