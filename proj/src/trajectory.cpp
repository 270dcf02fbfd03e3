#include "xmas/trajectory.hpp"

#include "xmas/errors.hpp"
#include "xmas/parallel.hpp"

#include <cmath>
#include <string>

namespace xmas {

InstabilityVariant parse_instability_variant(std::string_view name) {
  if (name == "abs") return InstabilityVariant::kAbsDiff;
  if (name == "sqr") return InstabilityVariant::kSqrDiff;
  if (name == "var") return InstabilityVariant::kVariance;
  throw ArgumentError("unknown instability variant '" + std::string(name) + "' (expected abs|sqr|var)");
}

std::string_view to_string(InstabilityVariant v) {
  switch (v) {
    case InstabilityVariant::kAbsDiff: return "abs";
    case InstabilityVariant::kSqrDiff: return "sqr";
    case InstabilityVariant::kVariance: return "var";
  }
  return "abs";
}

TrajectoryTable build_trajectory_table(const AttentionDump& dump, std::size_t k, int threads) {
  const std::size_t n = dump.n_examples();
  const std::size_t r = dump.n_checkpoints;
  TrajectoryTable table;
  table.scores = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(r));
  for_each_chunk(n, 16, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& rec = dump.records[i];
      if (rec.example_id >= n) throw ArgumentError("example_id " + std::to_string(rec.example_id) + " out of range");
      for (std::size_t j = 0; j < r; ++j) {
        table.scores(static_cast<Eigen::Index>(rec.example_id), static_cast<Eigen::Index>(j)) =
            alignment_score(rec.checkpoints[j], k).sigma;
      }
    }
  });
  return table;
}

double instability_score(std::span<const double> t, InstabilityVariant variant) {
  if (t.empty()) throw ArgumentError("instability of an empty trajectory is undefined");
  double s = 0.0;
  switch (variant) {
    case InstabilityVariant::kAbsDiff:
      for (std::size_t j = 1; j < t.size(); ++j) s += std::abs(t[j] - t[j - 1]);
      break;
    case InstabilityVariant::kSqrDiff:
      for (std::size_t j = 1; j < t.size(); ++j) s += (t[j] - t[j - 1]) * (t[j] - t[j - 1]);
      break;
    case InstabilityVariant::kVariance: {
      double mean = 0.0;
      for (double v : t) mean += v;
      mean /= static_cast<double>(t.size());
      for (double v : t) s += (v - mean) * (v - mean);
      s /= static_cast<double>(t.size());
      break;
    }
  }
  return s;
}

std::vector<double> instability_scores(const TrajectoryTable& table, InstabilityVariant variant) {
  std::vector<double> out(table.n_examples());
  for (Eigen::Index i = 0; i < table.scores.rows(); ++i) {
    const auto row = table.scores.row(i);
    out[static_cast<std::size_t>(i)] =
        instability_score(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), variant);
  }
  return out;
}

RowMatrix z_normalize_columns(const RowMatrix& rows) {
  RowMatrix out = rows;
  const Eigen::Index n = rows.rows();
  if (n == 0) return out;
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    double mean = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) mean += rows(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) var += (rows(i, j) - mean) * (rows(i, j) - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (Eigen::Index i = 0; i < n; ++i) out(i, j) = sd > 0.0 ? (rows(i, j) - mean) / sd : rows(i, j) - mean;
  }
  return out;
}

}  // namespace xmas
