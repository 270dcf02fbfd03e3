#pragma once

// Planted-redundancy experiments on the toy attention model: does the
// selection pipeline pick one representative per group of near-duplicates,
// and does weighted incremental training on the selected subset land near
// the full-data optimum?

#include "xmas/toy_transformer.hpp"
#include "xmas/trajectory.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace xmas {

struct SyntheticDataset {
  std::vector<ToyExample> examples;
  std::vector<std::uint32_t> group_id;
  std::size_t groups = 0;
  double noise_scale = 0.0;
};

struct ExampleShape {
  std::size_t n_image = 4;
  std::size_t n_text = 4;
  std::size_t input_dim = 4;
  std::size_t hidden_dim = 4;
};

/// G groups of `copies` examples. Each group draws one seed example with
/// N(0, 1) tokens and labels; members add N(0, noise^2) to both. Examples of
/// a group are contiguous.
SyntheticDataset make_planted_dataset(std::size_t groups, std::size_t copies, double noise_scale, std::uint64_t seed,
                                      const ExampleShape& shape = {});

/// Number of distinct planted groups among `indices`.
std::size_t group_coverage(const SyntheticDataset& data, std::span<const std::uint32_t> indices);

/// sum_i w_i grad L_i restricted to `blocks`, as a flat parameter vector.
Eigen::VectorXd weighted_gradient(const ToyModel& model, std::span<const ToyExample> data,
                                  std::span<const double> weights, unsigned blocks);

/// Mean example loss.
double mean_loss(const ToyModel& model, std::span<const ToyExample> data);

/// Dense Hessian of sum_i w_i L_i on the coordinates of `blocks`, by central
/// differences of the analytic gradient.
Eigen::MatrixXd weighted_hessian(const ToyModel& model, std::span<const ToyExample> data,
                                 std::span<const double> weights, unsigned blocks, double step = 1e-4);

struct ReferenceOptimum {
  ToyModel model;
  std::size_t steps = 0;
  double gradient_norm = 0.0;  ///< of the mean loss
  bool converged = false;
};

/// Full-batch gradient descent on the mean loss over `blocks` until the
/// gradient norm drops below `tolerance` or `max_steps` is reached.
ReferenceOptimum reference_optimum(const ToyModel& init, std::span<const ToyExample> data, unsigned blocks,
                                   double learning_rate, double tolerance = 1e-8, std::size_t max_steps = 100000);

struct TrainOptions {
  double learning_rate = 0.0;
  std::size_t epochs = 0;
  double decay = 0.0;  ///< epoch e uses learning_rate / (1 + decay * e)
  unsigned blocks = kAllBlocks;
  /// Called with the model at the start of every epoch.
  std::function<void(std::size_t, const ToyModel&)> on_epoch;
};

struct TrainReport {
  std::vector<double> distance;  ///< |phi - phi*| at the start of each epoch and at the end
  std::vector<double> loss;      ///< mean loss on the evaluation set, same points
  ToyModel final_model;
  double final_gap = 0.0;
  double final_loss = 0.0;
  double max_gradient_norm = 0.0;  ///< largest unweighted |grad L_i| used by any step
  std::size_t steps = 0;
  bool diverged = false;
  std::vector<double> weights;
};

/// Cyclic incremental gradient descent over the examples with positive
/// weight, in index order: phi <- phi - eta_e * w_i * grad L_i(phi). A loss
/// above 1e6 or a non-finite value stops training and sets `diverged`.
TrainReport train_incremental(const ToyModel& init, std::span<const ToyExample> data, std::span<const double> weights,
                              const TrainOptions& opts, const ToyModel& reference,
                              std::span<const ToyExample> eval_data);

struct SimulationConfig {
  std::uint64_t seed = 1;
  std::size_t seeds = 10;
  std::size_t groups = 20;
  std::size_t copies = 10;
  double noise = 0.01;
  ExampleShape shape;
  double gain = 1.0;
  double init_scale = 0.5;
  std::size_t checkpoints = kDefaultCheckpoints;
  std::size_t proxy_steps_per_checkpoint = 30;
  double proxy_learning_rate = 0.5;
  std::size_t k_singular = 5;
  std::size_t clusters = 20;
  std::size_t budget = 20;
  InstabilityVariant instability = InstabilityVariant::kAbsDiff;
  bool normalize = false;
  std::size_t random_draws = 10000;
  std::size_t epochs = 2000;
  double decay = 0.01;
  double reference_tolerance = 1e-8;
  std::size_t reference_max_steps = 100000;
  std::size_t curvature_samples = 4;
  int threads = 1;
};

/// Terms of the neighborhood bound
///   |phi_t - phi*|^2 <= (1 - eta c')^t d0^2 + 2 xi R' / c'^2 + eta B^2 w^2 g_max^2
/// with R' = min(d0, B g_max + xi / c') and w = r_min / k.
struct NeighborhoodBound {
  double learning_rate = 0.0;
  double curvature = 0.0;     ///< largest Hessian eigenvalue estimate, sets eta = 1/(2 beta)
  double strong_convexity = 0.0;  ///< c'
  double g_max = 0.0;
  double xi = 0.0;            ///< max |grad F - grad F_S| observed along training
  double xi_formula = 0.0;    ///< K [r_min Delta + (r_max - r_min) g_max]
  double delta = 0.0;         ///< max distance from an example gradient to its cluster's nearest selected one
  std::size_t r_min = 0;
  std::size_t r_max = 0;
  std::size_t k = 0;
  double weight = 0.0;
  std::size_t subset_size = 0;
  std::size_t epochs = 0;
  double d0 = 0.0;
  double radius = 0.0;        ///< R'
  double contraction_term = 0.0;
  double mismatch_term = 0.0;
  double variance_term = 0.0;
  double bound = 0.0;         ///< on the squared gap
  double realized_gap_sq = 0.0;

  bool holds() const { return realized_gap_sq <= bound; }
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::size_t xmas_coverage = 0;
  std::size_t random_coverage = 0;
  std::vector<std::uint32_t> selected;
  std::vector<std::uint32_t> random_selected;
  double kmeans_inertia = 0.0;
  ReferenceOptimum reference;
  double reference_loss = 0.0;
  TrainReport full_run;
  TrainReport subset_run;
  TrainReport random_run;
  NeighborhoodBound neighborhood;
  double loss_difference = 0.0;  ///< |subset final loss - full-data run final loss|
};

struct SimulationReport {
  SimulationConfig config;
  std::vector<SeedOutcome> seeds;
  double random_coverage_mean = 0.0;        ///< Monte-Carlo over uniform B-subsets
  double random_coverage_expected = 0.0;    ///< closed form for equal-size groups
  std::size_t coverage_threshold = 0;       ///< ceil(0.9 G)
  std::size_t seeds_meeting_coverage = 0;

  bool bound_holds() const;
};

/// Mean group coverage of `draws` uniform B-subsets of the dataset.
double monte_carlo_random_coverage(const SyntheticDataset& data, std::size_t budget, std::size_t draws,
                                   std::uint64_t seed);

/// G (1 - C(n - m, B) / C(n, B)) for G groups of m examples each.
double expected_random_coverage(std::size_t groups, std::size_t copies, std::size_t budget);

SimulationReport run_xmas_vs_random(const SimulationConfig& cfg);

/// One row per recorded point: seed,run,epoch,distance,loss.
void write_curves_csv(const SimulationReport& report, std::ostream& out);

}  // namespace xmas
