#pragma once

// Single-layer, single-head attention model with RMS-normalized inputs and a
// squared-Frobenius loss:
//
//   X' = rms_normalize(X, g)          N x d, image tokens first
//   A  = X' W_Q W_K^T X'^T / sqrt(D)  N x N
//   S  = row-softmax(A)
//   F  = S X' W_V                     N x D
//   L  = ||F - Y||_F^2 / (N D)
//
// plus the gradient-distance bounds that relate pairwise gradient distances
// to distances between cross-modal attention blocks.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace xmas {

struct ToyModel {
  Eigen::MatrixXd w_query;  ///< d x D
  Eigen::MatrixXd w_key;    ///< d x D
  Eigen::MatrixXd w_value;  ///< d x D
  double gain = 1.0;        ///< RMS normalization gain g

  Eigen::Index input_dim() const { return w_query.rows(); }
  Eigen::Index hidden_dim() const { return w_query.cols(); }
  /// sqrt(|W_Q|_F^2 + |W_K|_F^2 + |W_V|_F^2)
  double parameter_norm() const;

  static ToyModel random(Eigen::Index input_dim, Eigen::Index hidden_dim, double gain, double scale,
                         std::uint64_t seed);
};

struct ToyExample {
  Eigen::MatrixXd tokens;  ///< N x d raw embeddings, image tokens first
  Eigen::MatrixXd labels;  ///< N x D
  std::size_t n_image = 0;
  std::size_t n_text = 0;

  std::size_t n_tokens() const { return n_image + n_text; }
};

struct ForwardPass {
  Eigen::MatrixXd normalized;  ///< X'
  Eigen::MatrixXd logits;      ///< A
  Eigen::MatrixXd attention;   ///< S
  Eigen::MatrixXd output;      ///< F
};

struct Gradient {
  Eigen::MatrixXd query;
  Eigen::MatrixXd key;
  Eigen::MatrixXd value;

  double norm() const;
};

/// Which weight blocks an operation acts on.
enum ParamBlock : unsigned {
  kQueryBlock = 1u,
  kKeyBlock = 2u,
  kValueBlock = 4u,
  kAllBlocks = 7u,
};

/// Constants entering the gradient-distance bounds.
struct BoundConfig {
  double c = 1.0;           ///< parameter-norm bound, c >= |phi|
  double proxy_gap = 0.0;   ///< T: max |chi_p(proxy) - chi_p(target)|_F
  double curvature = 0.0;   ///< beta: per-example Hessian norm bound
  double step_radius = 0.0; ///< delta: max distance between the two checkpoints
  std::size_t n_tokens = 0; ///< N
  std::size_t hidden_dim = 0;  ///< D
};

/// Each row x becomes g * x / rms(x) with rms(x) = |x| / sqrt(d).
/// Throws NumericError on a zero row.
Eigen::MatrixXd rms_normalize(const Eigen::MatrixXd& x, double gain);

/// Row-wise numerically stable softmax.
Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& logits);

ForwardPass forward(const ToyModel& model, const ToyExample& example);

/// |F - Y|_F^2 / (N D) with N, D taken from the shapes.
double loss(const Eigen::MatrixXd& output, const Eigen::MatrixXd& labels);
double example_loss(const ToyModel& model, const ToyExample& example);

/// Analytic gradients of the example loss w.r.t. W_Q, W_K, W_V.
Gradient grad(const ToyModel& model, const ToyExample& example);

/// Frobenius norm of d softmax(A) / dA at the row-stochastic S, from the
/// per-row power sums xi_p = sum_q S[j,q]^p. Never exceeds sqrt(N)/2.
/// Throws ArgumentError if S is not row-stochastic (tolerance 1e-8).
double softmax_jacobian_fro_norm(const Eigen::MatrixXd& s);

/// The n_T x n_I block of S where text queries attend to image keys.
Eigen::MatrixXd cross_modal_attention(const ToyModel& model, const ToyExample& example);

/// |chi_i(model_a) - chi_j(model_b)|_F.
double attention_distance(const ToyModel& model_a, const ToyModel& model_b, const ToyExample& ex_i,
                          const ToyExample& ex_j);

/// S = cross + cross_transpose + remainder, where `cross` holds the
/// cross-modal block in its bottom-left position, `cross_transpose` is its
/// transpose (top-right position) and `remainder` is zero on the cross block.
struct AttentionParts {
  Eigen::MatrixXd cross;
  Eigen::MatrixXd cross_transpose;
  Eigen::MatrixXd remainder;
};
AttentionParts decompose_attention(const Eigen::MatrixXd& s, std::size_t n_image);

/// Largest admissible RMS gain: N^(-5/8) D^(-1/8) c^(-3/4).
double gain_threshold(double n_tokens, double hidden_dim, double c);

/// Bound on |grad L_i - grad L_j| at one step:
/// (4/sqrt(3)) (K_ij + 2T) + 8 sqrt(N) / (3 sqrt(3) c).
double pointwise_gradient_bound(double attention_distance, const BoundConfig& cfg);

/// Bound anywhere between two checkpoints: max(delta_1, delta_2) + 2 delta beta.
double interval_gradient_bound(double bound_at_first, double bound_at_second, const BoundConfig& cfg);

// Flat parameter vector [vec(W_Q); vec(W_K); vec(W_V)] in column-major order.
Eigen::VectorXd flatten(const ToyModel& model);
Eigen::VectorXd flatten(const Gradient& g);
ToyModel unflatten(const Eigen::VectorXd& params, Eigen::Index input_dim, Eigen::Index hidden_dim, double gain);
/// Zeroes the entries of blocks not in `blocks`.
void mask_blocks(Eigen::VectorXd& v, Eigen::Index input_dim, Eigen::Index hidden_dim, unsigned blocks);

/// Central-difference gradient of the example loss (test oracle for `grad`).
Gradient finite_difference_grad(const ToyModel& model, const ToyExample& example, double step);

/// Lipschitz estimate of the per-example gradient: the largest
/// |grad L_i(phi + u) - grad L_i(phi)| / |u| over examples and perturbations
/// of norm `radius`. Each of the `samples` random starting directions is
/// refined by power iteration on the gradient difference, so the estimate
/// approaches the Hessian norm. Only the chosen blocks are perturbed.
double estimate_curvature(const ToyModel& model, std::span<const ToyExample> data, double radius,
                          std::size_t samples, std::uint64_t seed, unsigned blocks = kAllBlocks);

/// Power-iteration Lipschitz estimate for an arbitrary gradient map, used by
/// estimate_curvature. Perturbations are restricted to the support of `mask`.
double lipschitz_estimate(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradient,
                          const Eigen::VectorXd& at, const Eigen::VectorXd& mask, double radius,
                          std::size_t samples, std::uint64_t seed);
/// 1 on the chosen blocks, 0 elsewhere.
Eigen::VectorXd block_mask(Eigen::Index input_dim, Eigen::Index hidden_dim, unsigned blocks);

// ---------------------------------------------------------------------------
// Bound verification

struct PairViolation {
  std::size_t segment = 0;       ///< checkpoint index, or first checkpoint of the segment
  double position = 0.0;         ///< interpolation position in [0, 1]; 0 for pointwise checks
  std::size_t i = 0;
  std::size_t j = 0;
  double distance = 0.0;
  double bound = 0.0;
};

struct BoundCheck {
  bool skipped = false;
  std::vector<std::string> failed_preconditions;
  std::size_t checks = 0;
  std::size_t violation_count = 0;
  std::vector<PairViolation> violations;  ///< first 100 only
  double max_ratio = 0.0;  ///< max distance / bound
  double min_bound = 0.0;
  double max_distance = 0.0;
};

struct BoundReport {
  BoundConfig config;
  double gain = 0.0;
  double gain_threshold = 0.0;
  std::vector<double> checkpoint_norms;
  std::size_t n_examples = 0;
  std::size_t pairs = 0;
  std::size_t interpolation_points = 0;
  BoundCheck pointwise;
  BoundCheck interval;
  double max_gradient_norm = 0.0;
  /// Pointwise checks whose bound is below twice the largest gradient norm.
  std::size_t nonvacuous_checks = 0;
  /// Both readings of the input-norm bound, and the observed max |X'|_F.
  double input_norm_bound_by_input_dim = 0.0;   ///< g sqrt(N d)
  double input_norm_bound_by_hidden_dim = 0.0;  ///< g sqrt(N D)
  double observed_input_norm = 0.0;
  /// Magnitudes the bound's constants silently depend on: max |Y_i|_F and
  /// max |F_i - Y_i|_F over examples and checkpoints.
  double label_norm_max = 0.0;
  double residual_norm_max = 0.0;

  bool violated() const { return pointwise.violation_count + interval.violation_count > 0; }
};

/// Exhaustive pair check of both bounds. Pointwise: every pair at every
/// checkpoint. Interval: every pair at `interpolation_points` interior points
/// of each adjacent checkpoint segment. Checks whose hypotheses fail
/// (|phi| > c, g >= threshold, segment longer than delta) are skipped and the
/// failed preconditions listed.
BoundReport verify_bounds(std::span<const ToyModel> checkpoints, std::span<const ToyExample> data,
                          const BoundConfig& cfg, std::size_t interpolation_points = 10, int threads = 1);

}  // namespace xmas
