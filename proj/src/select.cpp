#include "xmas/select.hpp"

#include "xmas/errors.hpp"
#include "xmas/json_io.hpp"
#include "xmas/random.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <string>

namespace xmas {

SamplingMode parse_sampling_mode(std::string_view name) {
  if (name == "stability") return SamplingMode::kStability;
  if (name == "random") return SamplingMode::kRandom;
  throw ArgumentError("unknown sampling mode '" + std::string(name) + "' (expected stability|random)");
}

std::string_view to_string(SamplingMode mode) {
  return mode == SamplingMode::kStability ? "stability" : "random";
}

namespace {

struct ClusterState {
  std::uint32_t id = 0;
  std::vector<std::uint32_t> members;     // ascending example index
  std::vector<std::uint32_t> preference;  // filled for oversized clusters only
  std::size_t taken = 0;
};

std::vector<ClusterState> group_members(std::span<const std::uint32_t> assignment, std::size_t clusters) {
  if (clusters == 0 && !assignment.empty()) throw ArgumentError("assignments given for zero clusters");
  std::vector<ClusterState> groups(clusters);
  for (std::size_t k = 0; k < clusters; ++k) groups[k].id = static_cast<std::uint32_t>(k);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] >= clusters) {
      throw ArgumentError("example " + std::to_string(i) + " assigned to cluster " + std::to_string(assignment[i]) +
                          " outside [0, " + std::to_string(clusters) + ")");
    }
    groups[assignment[i]].members.push_back(static_cast<std::uint32_t>(i));
  }
  return groups;
}

// `rank` fills `preference` with the cluster's members in the order they should be taken.
template <class RankFn>
SelectionResult run_quota_schedule(std::span<const std::uint32_t> assignment, std::size_t clusters,
                                   std::size_t budget, RankFn rank) {
  auto groups = group_members(assignment, clusters);
  std::vector<std::size_t> order(clusters);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return groups[a].members.size() < groups[b].members.size(); });

  SelectionResult result;
  result.budget = budget;
  result.n_examples = assignment.size();
  result.per_cluster.reserve(clusters);

  std::size_t selected = 0;
  for (std::size_t step = 0; step < clusters; ++step) {
    ClusterState& g = groups[order[step]];
    const std::size_t remaining_clusters = clusters - step;
    const std::size_t quota = (budget - selected) / remaining_clusters;
    ClusterTake take;
    take.cluster_id = g.id;
    take.size = g.members.size();
    take.quota = quota;
    if (g.members.size() <= quota) {
      g.taken = g.members.size();
      take.fully_included = true;
    } else {
      rank(g);
      g.taken = quota;
    }
    take.taken = g.taken;
    selected += g.taken;
    result.per_cluster.push_back(take);
  }

  // Flooring can leave budget unused; hand it out one slot at a time to the
  // largest clusters that still have members left.
  const std::size_t target = std::min(budget, assignment.size());
  std::vector<std::size_t> by_size_desc(order.rbegin(), order.rend());
  std::stable_sort(by_size_desc.begin(), by_size_desc.end(), [&](std::size_t a, std::size_t b) {
    return groups[a].members.size() > groups[b].members.size() ||
           (groups[a].members.size() == groups[b].members.size() && a < b);
  });
  while (selected < target) {
    bool progressed = false;
    for (std::size_t idx : by_size_desc) {
      if (selected >= target) break;
      ClusterState& g = groups[idx];
      if (g.taken >= g.members.size()) continue;
      if (g.preference.empty()) rank(g);
      ++g.taken;
      ++selected;
      ++result.residual_filled;
      progressed = true;
      for (auto& take : result.per_cluster) {
        if (take.cluster_id == g.id) {
          ++take.taken;
          ++take.residual_taken;
          take.fully_included = take.taken == take.size;
        }
      }
    }
    if (!progressed) break;
  }

  for (const auto& g : groups) {
    if (g.taken == g.members.size()) {
      result.selected.insert(result.selected.end(), g.members.begin(), g.members.end());
    } else {
      result.selected.insert(result.selected.end(), g.preference.begin(),
                             g.preference.begin() + static_cast<std::ptrdiff_t>(g.taken));
    }
  }
  std::sort(result.selected.begin(), result.selected.end());
  return result;
}

}  // namespace

SelectionResult select_subset(std::span<const std::uint32_t> assignment, std::size_t clusters,
                              std::span<const double> instability, std::size_t budget) {
  if (instability.size() != assignment.size()) {
    throw ArgumentError("instability has " + std::to_string(instability.size()) + " entries, expected " +
                        std::to_string(assignment.size()));
  }
  auto result = run_quota_schedule(assignment, clusters, budget, [&](ClusterState& g) {
    g.preference = g.members;
    std::stable_sort(g.preference.begin(), g.preference.end(), [&](std::uint32_t a, std::uint32_t b) {
      return instability[a] < instability[b];
    });
  });
  result.mode = SamplingMode::kStability;
  return result;
}

SelectionResult select_subset(const ClusterModel& model, std::span<const double> instability, std::size_t budget) {
  return select_subset(model.assignment, model.clusters(), instability, budget);
}

SelectionResult sample_random_within_clusters(std::span<const std::uint32_t> assignment, std::size_t clusters,
                                              std::size_t budget, std::uint64_t seed) {
  Rng rng(seed);
  auto result = run_quota_schedule(assignment, clusters, budget, [&](ClusterState& g) {
    g.preference = g.members;
    for (std::size_t i = g.preference.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.below(i));
      std::swap(g.preference[i - 1], g.preference[j]);
    }
  });
  result.mode = SamplingMode::kRandom;
  result.seed = seed;
  return result;
}

SelectionResult sample_random_within_clusters(const ClusterModel& model, std::size_t budget, std::uint64_t seed) {
  return sample_random_within_clusters(model.assignment, model.clusters(), budget, seed);
}

void write_indices(const SelectionResult& result, std::ostream& out) {
  for (std::uint32_t i : result.selected) out << i << '\n';
}

nlohmann::json to_json(const SelectionResult& result) {
  nlohmann::json j;
  j["budget"] = result.budget;
  j["n_examples"] = result.n_examples;
  j["n_selected"] = result.selected.size();
  j["mode"] = std::string(to_string(result.mode));
  j["seed"] = result.seed ? nlohmann::json(*result.seed) : nlohmann::json(nullptr);
  j["residual_filled"] = result.residual_filled;
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& t : result.per_cluster) {
    clusters.push_back({{"cluster_id", t.cluster_id},
                        {"size", t.size},
                        {"quota", t.quota},
                        {"taken", t.taken},
                        {"fully_included", t.fully_included},
                        {"residual_taken", t.residual_taken}});
  }
  j["per_cluster"] = std::move(clusters);
  return j;
}

}  // namespace xmas
