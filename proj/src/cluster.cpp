#include "xmas/cluster.hpp"

#include "xmas/errors.hpp"
#include "xmas/json_io.hpp"
#include "xmas/parallel.hpp"
#include "xmas/random.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <string>

namespace xmas {

namespace {

constexpr std::size_t kAssignChunk = 256;

double squared_distance(const RowMatrix& a, Eigen::Index i, const RowMatrix& b, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const double d = a(i, c) - b(j, c);
    s += d * d;
  }
  return s;
}

// Chunk partials summed in chunk order.
double ordered_sum(const std::vector<double>& values, int threads) {
  const std::size_t chunks = chunk_count(values.size(), kAssignChunk);
  std::vector<double> partial(chunks, 0.0);
  for_each_chunk(values.size(), kAssignChunk, threads, [&](std::size_t c, std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += values[i];
    partial[c] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

struct Assignment {
  std::vector<std::uint32_t> cluster;
  std::vector<double> distance;
  double inertia = 0.0;
};

Assignment assign_rows(const RowMatrix& rows, const RowMatrix& centroids, int threads) {
  const auto n = static_cast<std::size_t>(rows.rows());
  Assignment a;
  a.cluster.resize(n);
  a.distance.resize(n);
  for_each_chunk(n, kAssignChunk, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
        const double d = squared_distance(rows, static_cast<Eigen::Index>(i), centroids, k);
        if (d < best) {
          best = d;
          arg = static_cast<std::uint32_t>(k);
        }
      }
      a.cluster[i] = arg;
      a.distance[i] = best;
    }
  });
  a.inertia = ordered_sum(a.distance, threads);
  return a;
}

RowMatrix seed_plus_plus(const RowMatrix& rows, std::size_t k, Rng& rng, int threads) {
  const auto n = static_cast<std::size_t>(rows.rows());
  RowMatrix centroids(static_cast<Eigen::Index>(k), rows.cols());
  std::vector<bool> chosen(n, false);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  auto take = [&](std::size_t idx, std::size_t slot) {
    chosen[idx] = true;
    centroids.row(static_cast<Eigen::Index>(slot)) = rows.row(static_cast<Eigen::Index>(idx));
    for_each_chunk(n, kAssignChunk, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        d2[i] = std::min(d2[i], squared_distance(rows, static_cast<Eigen::Index>(i), centroids,
                                                 static_cast<Eigen::Index>(slot)));
      }
    });
  };

  take(static_cast<std::size_t>(rng.below(n)), 0);
  for (std::size_t slot = 1; slot < k; ++slot) {
    const double total = ordered_sum(d2, threads);
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      std::size_t last_positive = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        last_positive = i;
        acc += d2[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
      if (pick == n) pick = last_positive;
    } else {
      // Every row coincides with a chosen centroid: duplicate the lowest unused row.
      for (std::size_t i = 0; i < n && pick == n; ++i)
        if (!chosen[i]) pick = i;
    }
    take(pick, slot);
  }
  return centroids;
}

void update_centroids(const RowMatrix& rows, Assignment& a, RowMatrix& centroids) {
  const Eigen::Index k = centroids.rows();
  const auto n = static_cast<std::size_t>(rows.rows());
  RowMatrix sums = RowMatrix::Zero(k, rows.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < n; ++i) {
    sums.row(a.cluster[i]) += rows.row(static_cast<Eigen::Index>(i));
    ++counts[a.cluster[i]];
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) {
      centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) continue;
    std::size_t far = n;
    double far_d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (counts[a.cluster[i]] > 1 && a.distance[i] > far_d) {
        far_d = a.distance[i];
        far = i;
      }
    }
    if (far == n) continue;  // nothing at positive distance; the cluster stays empty
    centroids.row(c) = rows.row(static_cast<Eigen::Index>(far));
    --counts[a.cluster[far]];
    counts[static_cast<std::size_t>(c)] = 1;
    a.cluster[far] = static_cast<std::uint32_t>(c);
    a.distance[far] = 0.0;
  }
}

}  // namespace

ClusterModel kmeans(const RowMatrix& rows, const KMeansOptions& opts) {
  const auto n = static_cast<std::size_t>(rows.rows());
  if (opts.clusters == 0) throw ArgumentError("K must be at least 1");
  if (opts.clusters > n) {
    throw ArgumentError("K = " + std::to_string(opts.clusters) + " exceeds the number of examples " +
                        std::to_string(n));
  }
  if (opts.max_iter == 0) throw ArgumentError("max_iter must be at least 1");
  if (!(opts.tol >= 0.0)) throw ArgumentError("tol must be non-negative");
  if (!rows.allFinite()) throw NumericError("trajectory rows contain non-finite values");
  if (opts.clusters > std::numeric_limits<std::uint32_t>::max()) throw ArgumentError("K does not fit in u32");

  Rng rng(opts.seed);
  ClusterModel model;
  model.seed = opts.seed;
  model.centroids = seed_plus_plus(rows, opts.clusters, rng, opts.threads);

  Assignment current = assign_rows(rows, model.centroids, opts.threads);
  model.inertia_history.push_back(current.inertia);

  for (std::size_t it = 1; it <= opts.max_iter; ++it) {
    update_centroids(rows, current, model.centroids);
    Assignment next = assign_rows(rows, model.centroids, opts.threads);
    model.iterations_run = it;
    model.inertia_history.push_back(next.inertia);
    const bool changed = next.cluster != current.cluster;
    const double before = current.inertia;
    current = std::move(next);
    if (!changed) break;
    const double improvement = before > 0.0 ? (before - current.inertia) / before : 0.0;
    if (improvement < opts.tol) break;
  }

  model.assignment = std::move(current.cluster);
  model.inertia = current.inertia;
  return model;
}

std::vector<std::size_t> cluster_sizes(const ClusterModel& model) {
  std::vector<std::size_t> sizes(model.clusters(), 0);
  for (std::uint32_t c : model.assignment) {
    if (c >= sizes.size()) throw ArgumentError("assignment " + std::to_string(c) + " outside [0, K)");
    ++sizes[c];
  }
  return sizes;
}

double compute_inertia(const RowMatrix& rows, const ClusterModel& model) {
  double s = 0.0;
  for (std::size_t i = 0; i < model.assignment.size(); ++i) {
    s += squared_distance(rows, static_cast<Eigen::Index>(i), model.centroids, model.assignment[i]);
  }
  return s;
}

std::vector<std::uint32_t> read_assignments(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() % 4 != 0) {
    throw ParseError(ParseErrorKind::kInvalidLayout,
                     "assignment file size " + std::to_string(bytes.size()) + " is not a multiple of 4");
  }
  std::vector<std::uint32_t> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint32_t>(bytes[4 * i]) | static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8 |
             static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16 | static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24;
  }
  return out;
}

void write_assignments(const std::vector<std::uint32_t>& assignment, const std::filesystem::path& path) {
  std::vector<char> bytes(assignment.size() * 4);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<char>((assignment[i] >> (8 * b)) & 0xff);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing", 0);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write of " + path.string() + " failed", 0);
}

nlohmann::json to_json(const ClusterModel& model) {
  nlohmann::json j;
  j["format"] = "xmas-cluster-model";
  j["version"] = 1;
  j["seed"] = model.seed;
  j["K"] = model.clusters();
  j["n_examples"] = model.n_examples();
  j["n_checkpoints"] = model.centroids.cols();
  j["inertia"] = model.inertia;
  j["iterations_run"] = model.iterations_run;
  j["inertia_history"] = model.inertia_history;
  j["sizes"] = cluster_sizes(model);
  nlohmann::json centroids = nlohmann::json::array();
  for (Eigen::Index k = 0; k < model.centroids.rows(); ++k) {
    std::vector<double> row(model.centroids.row(k).begin(), model.centroids.row(k).end());
    centroids.push_back(row);
  }
  j["centroids"] = std::move(centroids);
  return j;
}

void save_cluster_model(const ClusterModel& model, const std::filesystem::path& json_path,
                        const std::filesystem::path& assignments_path) {
  write_assignments(model.assignment, assignments_path);
  nlohmann::json j = to_json(model);
  j["assignments_file"] = assignments_path.filename().string();
  write_json_file(j, json_path);
}

ClusterModel load_cluster_model(const std::filesystem::path& json_path) {
  const nlohmann::json j = read_json_file(json_path);
  try {
    if (j.at("format").get<std::string>() != "xmas-cluster-model") {
      throw ParseError(ParseErrorKind::kBadMagic, "not a cluster model: " + json_path.string());
    }
    ClusterModel model;
    model.seed = j.at("seed").get<std::uint64_t>();
    model.inertia = j.at("inertia").get<double>();
    model.iterations_run = j.at("iterations_run").get<std::size_t>();
    model.inertia_history = j.value("inertia_history", std::vector<double>{});
    const auto k = j.at("K").get<std::size_t>();
    const auto r = j.at("n_checkpoints").get<std::size_t>();
    const auto& cents = j.at("centroids");
    if (cents.size() != k) throw ParseError(ParseErrorKind::kInvariant, "centroid count does not match K");
    model.centroids.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(r));
    for (std::size_t c = 0; c < k; ++c) {
      const auto row = cents.at(c).get<std::vector<double>>();
      if (row.size() != r) throw ParseError(ParseErrorKind::kInvariant, "centroid width does not match n_checkpoints");
      for (std::size_t t = 0; t < r; ++t) model.centroids(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = row[t];
    }
    const auto assign_path = json_path.parent_path() / j.at("assignments_file").get<std::string>();
    model.assignment = read_assignments(assign_path);
    if (model.assignment.size() != j.at("n_examples").get<std::size_t>()) {
      throw ParseError(ParseErrorKind::kInvariant, "assignment count does not match n_examples");
    }
    for (std::uint32_t a : model.assignment) {
      if (a >= k) throw ParseError(ParseErrorKind::kInvariant, "assignment outside [0, K)");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseErrorKind::kInvalidLayout, std::string("malformed cluster model JSON: ") + e.what());
  }
}

}  // namespace xmas
