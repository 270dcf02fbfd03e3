#include "xmas/convergence_sim.hpp"

#include "xmas/cluster.hpp"
#include "xmas/errors.hpp"
#include "xmas/json_io.hpp"
#include "xmas/parallel.hpp"
#include "xmas/random.hpp"
#include "xmas/select.hpp"
#include "xmas/theory.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace xmas {

namespace {

constexpr double kDivergenceLoss = 1e6;

Eigen::MatrixXd noisy_copy(Rng& rng, const Eigen::MatrixXd& base, double noise) {
  Eigen::MatrixXd out = base;
  if (noise == 0.0) return out;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) += noise * rng.normal();
  return out;
}

Eigen::MatrixXd normal_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.normal();
  return m;
}

// Indices of the coordinates selected by `mask`.
std::vector<Eigen::Index> support(const Eigen::VectorXd& mask) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    if (mask(i) != 0.0) idx.push_back(i);
  return idx;
}

double min_eigenvalue(const Eigen::MatrixXd& h) {
  if (h.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (h + h.transpose()), Eigen::EigenvaluesOnly);
  return solver.eigenvalues()(0);
}

void apply_step(ToyModel& model, const Gradient& g, double scale, unsigned blocks) {
  if (blocks & kQueryBlock) model.w_query -= scale * g.query;
  if (blocks & kKeyBlock) model.w_key -= scale * g.key;
  if (blocks & kValueBlock) model.w_value -= scale * g.value;
}

double masked_norm(const Gradient& g, unsigned blocks) {
  double s = 0.0;
  if (blocks & kQueryBlock) s += g.query.squaredNorm();
  if (blocks & kKeyBlock) s += g.key.squaredNorm();
  if (blocks & kValueBlock) s += g.value.squaredNorm();
  return std::sqrt(s);
}

// Seeds for the independent random streams of one simulation run.
struct RunSeeds {
  std::uint64_t data, init, kmeans, random_subset;
};

RunSeeds derive_seeds(std::uint64_t seed) {
  Rng rng(seed);
  return {rng.next(), rng.next(), rng.next(), rng.next()};
}

}  // namespace

SyntheticDataset make_planted_dataset(std::size_t groups, std::size_t copies, double noise_scale, std::uint64_t seed,
                                      const ExampleShape& shape) {
  if (groups == 0 || copies == 0) throw ArgumentError("planted dataset needs G >= 1 and copies >= 1");
  if (noise_scale < 0.0) throw ArgumentError("noise scale must be non-negative");
  if (shape.n_image == 0 || shape.n_text == 0) throw ArgumentError("need image and text tokens");
  Rng rng(seed);
  SyntheticDataset out;
  out.groups = groups;
  out.noise_scale = noise_scale;
  const std::size_t n = shape.n_image + shape.n_text;
  for (std::size_t g = 0; g < groups; ++g) {
    const Eigen::MatrixXd tokens = normal_matrix(rng, n, shape.input_dim);
    const Eigen::MatrixXd labels = normal_matrix(rng, n, shape.hidden_dim);
    for (std::size_t c = 0; c < copies; ++c) {
      ToyExample ex;
      ex.n_image = shape.n_image;
      ex.n_text = shape.n_text;
      ex.tokens = noisy_copy(rng, tokens, noise_scale);
      ex.labels = noisy_copy(rng, labels, noise_scale);
      out.examples.push_back(std::move(ex));
      out.group_id.push_back(static_cast<std::uint32_t>(g));
    }
  }
  return out;
}

std::size_t group_coverage(const SyntheticDataset& data, std::span<const std::uint32_t> indices) {
  std::vector<bool> seen(data.groups, false);
  std::size_t covered = 0;
  for (std::uint32_t i : indices) {
    if (i >= data.group_id.size()) throw ArgumentError("index outside the dataset");
    if (!seen[data.group_id[i]]) {
      seen[data.group_id[i]] = true;
      ++covered;
    }
  }
  return covered;
}

Eigen::VectorXd weighted_gradient(const ToyModel& model, std::span<const ToyExample> data,
                                  std::span<const double> weights, unsigned blocks) {
  if (weights.size() != data.size()) throw ArgumentError("weights length differs from the dataset");
  Eigen::VectorXd total = Eigen::VectorXd::Zero(3 * model.w_query.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (weights[i] == 0.0) continue;
    total += weights[i] * flatten(grad(model, data[i]));
  }
  mask_blocks(total, model.input_dim(), model.hidden_dim(), blocks);
  return total;
}

double mean_loss(const ToyModel& model, std::span<const ToyExample> data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : data) total += example_loss(model, ex);
  return total / static_cast<double>(data.size());
}

Eigen::MatrixXd weighted_hessian(const ToyModel& model, std::span<const ToyExample> data,
                                 std::span<const double> weights, unsigned blocks, double step) {
  const auto d = model.input_dim();
  const auto dh = model.hidden_dim();
  const auto coords = support(block_mask(d, dh, blocks));
  const Eigen::VectorXd base = flatten(model);
  const auto m = static_cast<Eigen::Index>(coords.size());
  Eigen::MatrixXd h(m, m);
  Eigen::VectorXd probe = base;
  for (Eigen::Index c = 0; c < m; ++c) {
    const Eigen::Index p = coords[static_cast<std::size_t>(c)];
    probe(p) = base(p) + step;
    const Eigen::VectorXd up = weighted_gradient(unflatten(probe, d, dh, model.gain), data, weights, blocks);
    probe(p) = base(p) - step;
    const Eigen::VectorXd down = weighted_gradient(unflatten(probe, d, dh, model.gain), data, weights, blocks);
    probe(p) = base(p);
    for (Eigen::Index r = 0; r < m; ++r) h(r, c) = (up(coords[static_cast<std::size_t>(r)]) -
                                                     down(coords[static_cast<std::size_t>(r)])) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

ReferenceOptimum reference_optimum(const ToyModel& init, std::span<const ToyExample> data, unsigned blocks,
                                   double learning_rate, double tolerance, std::size_t max_steps) {
  if (data.empty()) throw ArgumentError("reference optimum needs data");
  if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
  const std::vector<double> weights(data.size(), 1.0 / static_cast<double>(data.size()));
  ReferenceOptimum out;
  out.model = init;
  for (;;) {
    const Eigen::VectorXd g = weighted_gradient(out.model, data, weights, blocks);
    out.gradient_norm = g.norm();
    if (out.gradient_norm < tolerance) {
      out.converged = true;
      break;
    }
    if (out.steps >= max_steps || !std::isfinite(out.gradient_norm)) break;
    const Eigen::VectorXd next = flatten(out.model) - learning_rate * g;
    out.model = unflatten(next, init.input_dim(), init.hidden_dim(), init.gain);
    ++out.steps;
  }
  return out;
}

TrainReport train_incremental(const ToyModel& init, std::span<const ToyExample> data, std::span<const double> weights,
                              const TrainOptions& opts, const ToyModel& reference,
                              std::span<const ToyExample> eval_data) {
  if (weights.size() != data.size()) throw ArgumentError("weights length differs from the dataset");
  if (opts.learning_rate < 0.0 || opts.decay < 0.0) throw ArgumentError("learning rate and decay must be >= 0");
  for (double w : weights)
    if (!(w >= 0.0) || !std::isfinite(w)) throw ArgumentError("weights must be finite and non-negative");

  TrainReport rep;
  rep.weights.assign(weights.begin(), weights.end());
  ToyModel model = init;
  const Eigen::VectorXd target = flatten(reference);
  auto record = [&] {
    rep.distance.push_back((flatten(model) - target).norm());
    rep.loss.push_back(mean_loss(model, eval_data));
  };

  for (std::size_t e = 0; e < opts.epochs; ++e) {
    record();
    if (!std::isfinite(rep.loss.back()) || rep.loss.back() > kDivergenceLoss) {
      rep.diverged = true;
      break;
    }
    if (opts.on_epoch) opts.on_epoch(e, model);
    const double lr = opts.learning_rate / (1.0 + opts.decay * static_cast<double>(e));
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (weights[i] == 0.0) continue;
      const Gradient g = grad(model, data[i]);
      rep.max_gradient_norm = std::max(rep.max_gradient_norm, masked_norm(g, opts.blocks));
      apply_step(model, g, lr * weights[i], opts.blocks);
      ++rep.steps;
    }
  }
  if (!rep.diverged) {
    record();
    if (!std::isfinite(rep.loss.back()) || rep.loss.back() > kDivergenceLoss) rep.diverged = true;
  }
  rep.final_model = model;
  rep.final_gap = rep.distance.back();
  rep.final_loss = rep.loss.back();
  return rep;
}

double monte_carlo_random_coverage(const SyntheticDataset& data, std::size_t budget, std::size_t draws,
                                   std::uint64_t seed) {
  const std::size_t n = data.examples.size();
  if (budget > n) throw ArgumentError("budget exceeds the dataset size");
  if (draws == 0) return 0.0;
  Rng rng(seed);
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  double total = 0.0;
  for (std::size_t d = 0; d < draws; ++d) {
    for (std::size_t i = 0; i < budget; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(n - i));
      std::swap(perm[i], perm[j]);
    }
    total += static_cast<double>(group_coverage(data, std::span(perm).first(budget)));
  }
  return total / static_cast<double>(draws);
}

double expected_random_coverage(std::size_t groups, std::size_t copies, std::size_t budget) {
  const std::size_t n = groups * copies;
  if (budget > n) throw ArgumentError("budget exceeds the dataset size");
  // P(group missed) = C(n - m, B) / C(n, B) = prod_t (n - m - t) / (n - t).
  double missed = 1.0;
  for (std::size_t t = 0; t < budget; ++t) {
    if (n - t <= copies) {
      missed = 0.0;
      break;
    }
    missed *= static_cast<double>(n - copies - t) / static_cast<double>(n - t);
  }
  return static_cast<double>(groups) * (1.0 - missed);
}

namespace {

std::vector<std::uint32_t> uniform_subset(std::size_t n, std::size_t budget, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  for (std::size_t i = 0; i < budget; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(perm[i], perm[j]);
  }
  perm.resize(budget);
  std::sort(perm.begin(), perm.end());
  return perm;
}

SeedOutcome run_seed(const SimulationConfig& cfg, std::uint64_t seed) {
  SeedOutcome out;
  out.seed = seed;
  const RunSeeds seeds = derive_seeds(seed);
  const auto data = make_planted_dataset(cfg.groups, cfg.copies, cfg.noise, seeds.data, cfg.shape);
  const std::span<const ToyExample> examples(data.examples);
  const std::size_t n = examples.size();
  const auto d = static_cast<Eigen::Index>(cfg.shape.input_dim);
  const auto dh = static_cast<Eigen::Index>(cfg.shape.hidden_dim);

  // Proxy training and alignment trajectories.
  const ToyModel init = ToyModel::random(d, dh, cfg.gain, cfg.init_scale, seeds.init);
  const auto checkpoints = train_checkpoints(init, examples, cfg.checkpoints, cfg.proxy_steps_per_checkpoint,
                                             cfg.proxy_learning_rate / static_cast<double>(n));
  AttentionDump dump;
  dump.n_checkpoints = static_cast<std::uint32_t>(checkpoints.size());
  dump.records.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    dump.records[i].example_id = i;
    for (const auto& m : checkpoints) dump.records[i].checkpoints.push_back(cross_modal_attention(m, examples[i]));
  }
  const TrajectoryTable table = build_trajectory_table(dump, cfg.k_singular);
  const auto instability = instability_scores(table, cfg.instability);

  KMeansOptions km;
  km.clusters = cfg.clusters;
  km.seed = seeds.kmeans;
  const ClusterModel clusters = kmeans(cfg.normalize ? z_normalize_columns(table.scores) : table.scores, km);
  out.kmeans_inertia = clusters.inertia;
  const SelectionResult selection = select_subset(clusters, instability, cfg.budget);
  out.selected = selection.selected;
  out.xmas_coverage = group_coverage(data, out.selected);
  out.random_selected = uniform_subset(n, std::min(cfg.budget, n), seeds.random_subset);
  out.random_coverage = group_coverage(data, out.random_selected);

  // Target fine-tuning: attention weights from the last proxy checkpoint are
  // frozen and W_V restarts from its initial value, so the training objective
  // is a strongly convex quadratic.
  constexpr unsigned kBlocks = kValueBlock;
  ToyModel start = checkpoints.back();
  start.w_value = init.w_value;

  const auto sizes = cluster_sizes(clusters);
  NeighborhoodBound& nb = out.neighborhood;
  nb.r_min = std::numeric_limits<std::size_t>::max();
  for (std::size_t s : sizes) {
    if (s == 0) continue;
    nb.r_min = std::min(nb.r_min, s);
    nb.r_max = std::max(nb.r_max, s);
  }
  for (const auto& t : selection.per_cluster) nb.k = std::max(nb.k, t.taken);
  nb.weight = nb.k > 0 ? static_cast<double>(nb.r_min) / static_cast<double>(nb.k) : 0.0;
  nb.subset_size = out.selected.size();

  const std::vector<double> full_weights(n, 1.0);
  std::vector<double> subset_weights(n, 0.0);
  for (std::uint32_t i : out.selected) subset_weights[i] = nb.weight;
  std::vector<double> random_weights(n, 0.0);
  for (std::uint32_t i : out.random_selected)
    random_weights[i] = static_cast<double>(n) / static_cast<double>(out.random_selected.size());

  const Eigen::VectorXd mask = block_mask(d, dh, kBlocks);
  auto objective_curvature = [&](std::span<const double> w, std::uint64_t s) {
    auto g = [&](const Eigen::VectorXd& p) { return weighted_gradient(unflatten(p, d, dh, cfg.gain), examples, w, kBlocks); };
    return lipschitz_estimate(g, flatten(start), mask, 1e-4, cfg.curvature_samples, s);
  };
  const double beta_full = objective_curvature(full_weights, seed + 11);
  nb.curvature = std::max(beta_full, objective_curvature(subset_weights, seed + 13));
  nb.learning_rate = nb.curvature > 0.0 ? 1.0 / (2.0 * nb.curvature) : 0.0;

  out.reference = reference_optimum(start, examples, kBlocks, static_cast<double>(n) / (2.0 * beta_full),
                                    cfg.reference_tolerance, cfg.reference_max_steps);
  const ToyModel& optimum = out.reference.model;
  out.reference_loss = mean_loss(optimum, examples);

  TrainOptions opts;
  opts.learning_rate = nb.learning_rate;
  opts.epochs = cfg.epochs;
  opts.decay = cfg.decay;
  opts.blocks = kBlocks;
  out.full_run = train_incremental(start, examples, full_weights, opts, optimum, examples);
  out.random_run = train_incremental(start, examples, random_weights, opts, optimum, examples);

  // Gradient mismatch between the full objective and the weighted subset,
  // and the within-cluster gradient spread, probed at every epoch.
  std::vector<std::vector<std::uint32_t>> selected_in(clusters.clusters());
  for (std::uint32_t i : out.selected) selected_in[clusters.assignment[i]].push_back(i);
  auto probe = [&](const ToyModel& m) {
    std::vector<Eigen::VectorXd> g(n);
    Eigen::VectorXd diff = Eigen::VectorXd::Zero(3 * d * dh);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = flatten(grad(m, examples[i])).cwiseProduct(mask);
      diff += (1.0 - subset_weights[i]) * g[i];
    }
    nb.xi = std::max(nb.xi, diff.norm());
    for (std::size_t i = 0; i < n; ++i) {
      const auto& own = selected_in[clusters.assignment[i]];
      const auto& pool = own.empty() ? out.selected : own;
      double nearest = std::numeric_limits<double>::infinity();
      for (std::uint32_t j : pool) nearest = std::min(nearest, (g[i] - g[j]).norm());
      if (!pool.empty()) nb.delta = std::max(nb.delta, nearest);
    }
  };
  opts.on_epoch = [&](std::size_t, const ToyModel& m) { probe(m); };
  out.subset_run = train_incremental(start, examples, subset_weights, opts, optimum, examples);
  probe(out.subset_run.final_model);
  probe(optimum);
  out.loss_difference = std::abs(out.subset_run.final_loss - out.full_run.final_loss);

  const Eigen::MatrixXd h_full = weighted_hessian(optimum, examples, full_weights, kBlocks);
  const Eigen::MatrixXd h_subset = weighted_hessian(optimum, examples, subset_weights, kBlocks);
  nb.strong_convexity = std::min(min_eigenvalue(h_full), min_eigenvalue(h_subset));
  nb.g_max = out.subset_run.max_gradient_norm;
  nb.epochs = cfg.epochs;
  nb.xi_formula = static_cast<double>(selection.per_cluster.size()) *
                  (static_cast<double>(nb.r_min) * nb.delta + static_cast<double>(nb.r_max - nb.r_min) * nb.g_max);
  nb.d0 = (flatten(start) - flatten(optimum)).norm();
  const double b = static_cast<double>(nb.subset_size);
  nb.realized_gap_sq = out.subset_run.final_gap * out.subset_run.final_gap;
  if (nb.strong_convexity > 0.0 && !out.subset_run.diverged) {
    const double cp = nb.strong_convexity;
    nb.radius = std::min(nb.d0, b * nb.g_max + nb.xi / cp);
    nb.contraction_term = std::pow(1.0 - nb.learning_rate * cp, static_cast<double>(nb.epochs)) * nb.d0 * nb.d0;
    nb.mismatch_term = 2.0 * nb.xi * nb.radius / (cp * cp);
    nb.variance_term = nb.learning_rate * b * b * nb.weight * nb.weight * nb.g_max * nb.g_max;
    nb.bound = nb.contraction_term + nb.mismatch_term + nb.variance_term;
  } else {
    nb.bound = std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace

bool SimulationReport::bound_holds() const {
  return std::all_of(seeds.begin(), seeds.end(), [](const SeedOutcome& s) { return s.neighborhood.holds(); });
}

SimulationReport run_xmas_vs_random(const SimulationConfig& cfg) {
  const std::size_t n = cfg.groups * cfg.copies;
  if (cfg.budget > n) throw ArgumentError("budget exceeds the dataset size");
  if (cfg.clusters == 0 || cfg.clusters > n) throw ArgumentError("cluster count must lie in [1, n]");
  if (cfg.checkpoints < 1) throw ArgumentError("need at least one checkpoint");

  SimulationReport rep;
  rep.config = cfg;
  rep.seeds.resize(cfg.seeds);
  for_each_chunk(cfg.seeds, 1, cfg.threads, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; ++s) rep.seeds[s] = run_seed(cfg, cfg.seed + s);
  });

  // Coverage of a uniform subset depends only on the group sizes, so any
  // seed's dataset serves for the Monte-Carlo estimate.
  const auto layout = make_planted_dataset(cfg.groups, cfg.copies, 0.0, cfg.seed, cfg.shape);
  rep.random_coverage_mean = monte_carlo_random_coverage(layout, cfg.budget, cfg.random_draws, cfg.seed);
  rep.random_coverage_expected = expected_random_coverage(cfg.groups, cfg.copies, cfg.budget);
  rep.coverage_threshold = (9 * cfg.groups + 9) / 10;
  for (const auto& s : rep.seeds)
    if (s.xmas_coverage >= rep.coverage_threshold) ++rep.seeds_meeting_coverage;
  return rep;
}

void write_curves_csv(const SimulationReport& report, std::ostream& out) {
  out << "seed,run,epoch,distance,loss\n";
  out.precision(17);
  for (const auto& s : report.seeds) {
    const std::pair<const char*, const TrainReport*> runs[] = {
        {"full", &s.full_run}, {"xmas", &s.subset_run}, {"random", &s.random_run}};
    for (const auto& [name, run] : runs) {
      for (std::size_t e = 0; e < run->distance.size(); ++e) {
        out << s.seed << ',' << name << ',' << e << ',' << run->distance[e] << ',' << run->loss[e] << '\n';
      }
    }
  }
}

namespace {

nlohmann::json train_json(const TrainReport& r) {
  return {{"final_gap", r.final_gap},
          {"final_loss", r.final_loss},
          {"max_gradient_norm", r.max_gradient_norm},
          {"steps", r.steps},
          {"epochs_recorded", r.distance.size()},
          {"diverged", r.diverged}};
}

}  // namespace

nlohmann::json to_json(const SimulationConfig& c) {
  return {{"seed", c.seed},
          {"seeds", c.seeds},
          {"groups", c.groups},
          {"copies", c.copies},
          {"noise", c.noise},
          {"n_image", c.shape.n_image},
          {"n_text", c.shape.n_text},
          {"input_dim", c.shape.input_dim},
          {"hidden_dim", c.shape.hidden_dim},
          {"gain", c.gain},
          {"init_scale", c.init_scale},
          {"checkpoints", c.checkpoints},
          {"proxy_steps_per_checkpoint", c.proxy_steps_per_checkpoint},
          {"proxy_learning_rate", c.proxy_learning_rate},
          {"k_singular", c.k_singular},
          {"clusters", c.clusters},
          {"budget", c.budget},
          {"instability", std::string(to_string(c.instability))},
          {"normalize", c.normalize},
          {"random_draws", c.random_draws},
          {"epochs", c.epochs},
          {"decay", c.decay},
          {"reference_tolerance", c.reference_tolerance},
          {"reference_max_steps", c.reference_max_steps},
          {"curvature_samples", c.curvature_samples}};
}

nlohmann::json to_json(const SimulationReport& r) {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : r.seeds) {
    const auto& nb = s.neighborhood;
    seeds.push_back(
        {{"seed", s.seed},
         {"xmas_coverage", s.xmas_coverage},
         {"random_coverage", s.random_coverage},
         {"selected", s.selected},
         {"kmeans_inertia", s.kmeans_inertia},
         {"reference",
          {{"steps", s.reference.steps},
           {"gradient_norm", s.reference.gradient_norm},
           {"converged", s.reference.converged},
           {"loss", s.reference_loss}}},
         {"full_run", train_json(s.full_run)},
         {"xmas_run", train_json(s.subset_run)},
         {"random_run", train_json(s.random_run)},
         {"loss_difference", s.loss_difference},
         {"neighborhood_bound",
          {{"learning_rate", nb.learning_rate},
           {"curvature", nb.curvature},
           {"strong_convexity", nb.strong_convexity},
           {"g_max", nb.g_max},
           {"xi", nb.xi},
           {"xi_formula", nb.xi_formula},
           {"delta", nb.delta},
           {"r_min", nb.r_min},
           {"r_max", nb.r_max},
           {"k", nb.k},
           {"weight", nb.weight},
           {"subset_size", nb.subset_size},
           {"epochs", nb.epochs},
           {"d0", nb.d0},
           {"radius", nb.radius},
           {"contraction_term", nb.contraction_term},
           {"mismatch_term", nb.mismatch_term},
           {"variance_term", nb.variance_term},
           {"bound", std::isfinite(nb.bound) ? nlohmann::json(nb.bound) : nlohmann::json(nullptr)},
           {"realized_gap_sq", nb.realized_gap_sq},
           {"holds", nb.holds()}}}});
  }
  return {{"config", to_json(r.config)},
          {"random_coverage_mean", r.random_coverage_mean},
          {"random_coverage_expected", r.random_coverage_expected},
          {"coverage_threshold", r.coverage_threshold},
          {"seeds_meeting_coverage", r.seeds_meeting_coverage},
          {"bound_holds", r.bound_holds()},
          {"seeds", std::move(seeds)}};
}

}  // namespace xmas
