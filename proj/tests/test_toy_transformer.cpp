#include "xmas/errors.hpp"
#include "xmas/theory.hpp"
#include "xmas/toy_transformer.hpp"

#include "test_util.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace xmas {
namespace {

ToyExample random_example(Rng& rng, std::size_t n_image, std::size_t n_text, Eigen::Index d, Eigen::Index dh) {
  ToyExample ex;
  ex.n_image = n_image;
  ex.n_text = n_text;
  const auto n = static_cast<Eigen::Index>(n_image + n_text);
  ex.tokens.resize(n, d);
  ex.labels.resize(n, dh);
  for (Eigen::Index i = 0; i < ex.tokens.size(); ++i) ex.tokens.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < ex.labels.size(); ++i) ex.labels.data()[i] = rng.normal();
  return ex;
}

// Element-loop loss and central differences over every weight entry.
double loop_loss(const Eigen::MatrixXd& f, const Eigen::MatrixXd& y) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    for (Eigen::Index j = 0; j < f.cols(); ++j) s += (f(i, j) - y(i, j)) * (f(i, j) - y(i, j));
  }
  return s / static_cast<double>(f.rows() * f.cols());
}

Eigen::MatrixXd numeric_block(ToyModel m, const ToyExample& ex, Eigen::MatrixXd ToyModel::*block, double h) {
  Eigen::MatrixXd g((m.*block).rows(), (m.*block).cols());
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double keep = (m.*block).data()[i];
    (m.*block).data()[i] = keep + h;
    const double up = loop_loss(forward(m, ex).output, ex.labels);
    (m.*block).data()[i] = keep - h;
    const double down = loop_loss(forward(m, ex).output, ex.labels);
    (m.*block).data()[i] = keep;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

double rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

TEST(RmsNormalize, Cases) {
  Eigen::MatrixXd x(1, 2);
  x << 1, 0;
  const auto y = rms_normalize(x, 1.0);
  EXPECT_NEAR(y(0, 0), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(y(0, 1), 0.0);

  Rng rng(1);
  Eigen::MatrixXd r(6, 5);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.normal();
  EXPECT_TRUE(rms_normalize(r, 0.0).isZero(0.0));
  const auto z = rms_normalize(r, 0.7);
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_NEAR(z.row(i).norm(), 0.7 * std::sqrt(5.0), 1e-12);
  EXPECT_NEAR(z.norm(), 0.7 * std::sqrt(30.0), 1e-12);

  r.row(2).setZero();
  EXPECT_THROW(rms_normalize(r, 1.0), NumericError);
}

TEST(Forward, ZeroQueryKeyGivesUniformAttention) {
  Rng rng(2);
  auto m = ToyModel::random(3, 2, 1.0, 1.0, 4);
  m.w_query.setZero();
  m.w_key.setZero();
  const auto ex = random_example(rng, 2, 3, 3, 2);
  const auto fp = forward(m, ex);
  EXPECT_TRUE(fp.logits.isZero(0.0));
  EXPECT_TRUE((fp.attention.array() - 0.2).abs().maxCoeff() < 1e-15);
}

TEST(Forward, ZeroValueGivesZeroOutput) {
  Rng rng(3);
  auto m = ToyModel::random(3, 2, 1.0, 1.0, 5);
  m.w_value.setZero();
  const auto ex = random_example(rng, 2, 2, 3, 2);
  EXPECT_TRUE(forward(m, ex).output.isZero(0.0));
  EXPECT_NEAR(example_loss(m, ex), ex.labels.squaredNorm() / 8.0, 1e-15);
}

TEST(Forward, AttentionRowsSumToOne) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = ToyModel::random(4, 3, 1.0, 3.0, trial);
    const auto fp = forward(m, random_example(rng, 1 + rng.below(5), 1 + rng.below(5), 4, 3));
    for (Eigen::Index r = 0; r < fp.attention.rows(); ++r) EXPECT_NEAR(fp.attention.row(r).sum(), 1.0, 1e-12);
  }
}

TEST(Forward, ShapeMismatch) {
  Rng rng(5);
  const auto m = ToyModel::random(3, 2, 1.0, 1.0, 1);
  EXPECT_THROW(forward(m, random_example(rng, 2, 2, 4, 2)), ShapeError);
  EXPECT_THROW(forward(m, random_example(rng, 2, 2, 3, 3)), ShapeError);
}

TEST(Loss, Cases) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Random(3, 4);
  EXPECT_EQ(loss(y, y), 0.0);
  EXPECT_NEAR(loss(y + Eigen::MatrixXd::Ones(3, 4), y), 1.0, 1e-15);
  const Eigen::MatrixXd f = Eigen::MatrixXd::Random(3, 4);
  EXPECT_NEAR(loss(f, y), loop_loss(f, y), 1e-15);
  EXPECT_THROW(loss(f, Eigen::MatrixXd::Zero(4, 3)), ShapeError);
}

TEST(Gradient, MatchesCentralDifferences) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = static_cast<Eigen::Index>(1 + rng.below(4));
    const auto dh = static_cast<Eigen::Index>(1 + rng.below(4));
    const std::size_t ni = 1 + rng.below(4);
    const std::size_t nt = 1 + rng.below(4);
    const auto m = ToyModel::random(d, dh, rng.uniform(0.3, 1.5), rng.uniform(0.2, 1.5), 100 + trial);
    const auto ex = random_example(rng, ni, nt, d, dh);
    const double h = 1e-5 * std::max(1.0, m.parameter_norm());
    const auto g = grad(m, ex);
    EXPECT_LE(rel(g.query, numeric_block(m, ex, &ToyModel::w_query, h)), 1e-5) << trial;
    EXPECT_LE(rel(g.key, numeric_block(m, ex, &ToyModel::w_key, h)), 1e-5) << trial;
    EXPECT_LE(rel(g.value, numeric_block(m, ex, &ToyModel::w_value, h)), 1e-5) << trial;
  }
}

TEST(Gradient, ZeroResidualGivesZeroValueGradient) {
  Rng rng(7);
  const auto m = ToyModel::random(3, 2, 1.0, 1.0, 2);
  auto ex = random_example(rng, 2, 2, 3, 2);
  ex.labels = forward(m, ex).output;
  const auto g = grad(m, ex);
  EXPECT_LT(g.value.norm(), 1e-15);
  EXPECT_LT(g.norm(), 1e-15);
}

TEST(Gradient, LibraryFiniteDifferenceAgrees) {
  Rng rng(8);
  const auto m = ToyModel::random(3, 3, 0.8, 0.7, 9);
  const auto ex = random_example(rng, 3, 2, 3, 3);
  const auto a = grad(m, ex);
  const auto n = finite_difference_grad(m, ex, 1e-5);
  EXPECT_LE(relative_gradient_error(a, n), 1e-6);
}

// Full Jacobian of row-softmax at S: d S[r,c] / d A[r',c'] = [r = r'] S[r,c] ([c = c'] - S[r,c']).
double explicit_jacobian_norm(const Eigen::MatrixXd& s) {
  const auto n = s.rows();
  double total = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      for (Eigen::Index rr = 0; rr < n; ++rr) {
        for (Eigen::Index cc = 0; cc < n; ++cc) {
          const double v = r == rr ? s(r, c) * ((c == cc ? 1.0 : 0.0) - s(r, cc)) : 0.0;
          total += v * v;
        }
      }
    }
  }
  return std::sqrt(total);
}

TEST(SoftmaxJacobian, MatchesExplicitJacobian) {
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng.below(9));
    Eigen::MatrixXd logits(n, n);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal() * rng.uniform(0.0, 6.0);
    const auto s = row_softmax(logits);
    const double norm = softmax_jacobian_fro_norm(s);
    EXPECT_NEAR(norm, explicit_jacobian_norm(s), 1e-12);
    EXPECT_LE(norm, std::sqrt(static_cast<double>(n)) / 2 + 1e-9);
  }
}

TEST(SoftmaxJacobian, ExtremeCases) {
  EXPECT_NEAR(softmax_jacobian_fro_norm(Eigen::MatrixXd::Constant(2, 2, 0.5)), std::sqrt(2.0) / 2, 1e-15);
  EXPECT_EQ(softmax_jacobian_fro_norm(Eigen::MatrixXd::Identity(5, 5)), 0.0);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Constant(2, 2, 0.6);
  EXPECT_THROW(softmax_jacobian_fro_norm(bad), ArgumentError);
}

TEST(AttentionDistance, Cases) {
  Rng rng(11);
  const auto m = ToyModel::random(3, 2, 1.0, 1.0, 3);
  const auto a = random_example(rng, 2, 3, 3, 2);
  const auto b = random_example(rng, 2, 3, 3, 2);
  EXPECT_EQ(attention_distance(m, m, a, a), 0.0);
  const auto ca = cross_modal_attention(m, a);
  const auto cb = cross_modal_attention(m, b);
  double loop = 0.0;
  for (Eigen::Index i = 0; i < ca.rows(); ++i) {
    for (Eigen::Index j = 0; j < ca.cols(); ++j) loop += (ca(i, j) - cb(i, j)) * (ca(i, j) - cb(i, j));
  }
  EXPECT_NEAR(attention_distance(m, m, a, b), std::sqrt(loop), 1e-14);
  EXPECT_THROW(attention_distance(m, m, a, random_example(rng, 3, 2, 3, 2)), ShapeError);
}

TEST(AttentionDistance, DisjointSupports) {
  // Text queries attend to image key 0 in one example and key 1 in the other.
  ToyModel m;
  m.w_query = Eigen::MatrixXd::Identity(3, 3) * 30.0;
  m.w_key = Eigen::MatrixXd::Identity(3, 3) * 30.0;
  m.w_value = Eigen::MatrixXd::Identity(3, 3);
  auto make = [](int hot) {
    ToyExample ex;
    ex.n_image = 2;
    ex.n_text = 1;
    ex.tokens = Eigen::MatrixXd::Zero(3, 3);
    ex.tokens(0, 0) = 1;
    ex.tokens(1, 1) = 1;
    ex.tokens(2, hot) = 1;
    ex.labels = Eigen::MatrixXd::Zero(3, 3);
    return ex;
  };
  const auto a = make(0);
  const auto b = make(1);
  const auto ca = cross_modal_attention(m, a);
  const auto cb = cross_modal_attention(m, b);
  EXPECT_NEAR(attention_distance(m, m, a, b), std::sqrt(ca.squaredNorm() + cb.squaredNorm()),
              2 * ca.cwiseProduct(cb).cwiseAbs().sum() + 1e-12);
}

TEST(Decomposition, ReconstructsExactly) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t ni = rng.below(5);
    const std::size_t nt = 1 + rng.below(5);
    const auto n = static_cast<Eigen::Index>(ni + nt);
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    const auto s = row_softmax(a);
    const auto p = decompose_attention(s, ni);
    const auto ni_i = static_cast<Eigen::Index>(ni);
    const Eigen::MatrixXd back = p.cross + p.cross_transpose + p.remainder;
    // The cross block is copied; where the transposed copy overlaps S the
    // remainder carries one subtraction, so reconstruction is exact to rounding.
    EXPECT_EQ(back.bottomLeftCorner(n - ni_i, ni_i), s.bottomLeftCorner(n - ni_i, ni_i));
    EXPECT_LE((back - s).cwiseAbs().maxCoeff(), 4 * std::numeric_limits<double>::epsilon());
    EXPECT_TRUE(p.remainder.bottomLeftCorner(n - ni_i, ni_i).isZero(0.0));
    EXPECT_EQ(p.cross_transpose.topRightCorner(ni_i, n - ni_i), s.bottomLeftCorner(n - ni_i, ni_i).transpose());
  }
}

TEST(BoundFormulas, HandValues) {
  BoundConfig cfg;
  cfg.c = 1.0;
  cfg.n_tokens = 4;
  EXPECT_NEAR(pointwise_gradient_bound(0.0, cfg), 16.0 / (3.0 * std::sqrt(3.0)), 1e-14);
  EXPECT_NEAR(pointwise_gradient_bound(0.0, cfg), 3.0792, 1e-4);
  const double slope = (pointwise_gradient_bound(2.0, cfg) - pointwise_gradient_bound(0.5, cfg)) / 1.5;
  EXPECT_NEAR(slope, 4.0 / std::sqrt(3.0), 1e-12);
  BoundConfig doubled = cfg;
  doubled.c = 2.0;
  EXPECT_NEAR(pointwise_gradient_bound(0.3, cfg) - pointwise_gradient_bound(0.3, doubled),
              pointwise_gradient_bound(0.0, cfg) / 2, 1e-12);
  cfg.proxy_gap = 0.25;
  EXPECT_NEAR(pointwise_gradient_bound(0.0, cfg), 4.0 / std::sqrt(3.0) * 0.5 + 16.0 / (3.0 * std::sqrt(3.0)), 1e-14);
  cfg.c = 0.0;
  EXPECT_THROW(pointwise_gradient_bound(0.0, cfg), ArgumentError);

  EXPECT_EQ(gain_threshold(1, 1, 1), 1.0);
  EXPECT_NEAR(gain_threshold(4, 2, 1), std::pow(4.0, -0.625) * std::pow(2.0, -0.125), 1e-15);
  EXPECT_NEAR(gain_threshold(4, 2, 1), std::pow(2.0, -11.0 / 8.0), 1e-15);
  EXPECT_NEAR(gain_threshold(4, 2, 1), 0.38555, 1e-5);
  EXPECT_LT(gain_threshold(5, 2, 1), gain_threshold(4, 2, 1));
  EXPECT_LT(gain_threshold(4, 3, 1), gain_threshold(4, 2, 1));
  EXPECT_LT(gain_threshold(4, 2, 1.5), gain_threshold(4, 2, 1));

  BoundConfig iv;
  EXPECT_EQ(interval_gradient_bound(1.0, 3.0, iv), 3.0);
  iv.step_radius = 0.5;
  iv.curvature = 2.0;
  EXPECT_EQ(interval_gradient_bound(1.5, 1.5, iv), 3.5);
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(), b = rng.uniform();
    iv.step_radius = rng.uniform();
    iv.curvature = rng.uniform(0, 5);
    EXPECT_EQ(interval_gradient_bound(a, b, iv), std::max(a, b) + 2 * iv.step_radius * iv.curvature);
  }
}

TEST(Flatten, RoundTripAndMask) {
  const auto m = ToyModel::random(3, 2, 0.5, 1.0, 7);
  const auto v = flatten(m);
  ASSERT_EQ(v.size(), 18);
  const auto back = unflatten(v, 3, 2, 0.5);
  EXPECT_EQ(back.w_query, m.w_query);
  EXPECT_EQ(back.w_key, m.w_key);
  EXPECT_EQ(back.w_value, m.w_value);
  auto masked = v;
  mask_blocks(masked, 3, 2, kValueBlock);
  EXPECT_TRUE(masked.head(12).isZero(0.0));
  EXPECT_EQ(masked.tail(6), v.tail(6));
  EXPECT_EQ(block_mask(3, 2, kQueryBlock | kKeyBlock).sum(), 12.0);
}

TEST(Curvature, ValueOnlyMatchesQuadraticHessian) {
  Rng rng(14);
  const auto m = ToyModel::random(3, 2, 1.0, 0.8, 15);
  std::vector<ToyExample> data;
  for (int i = 0; i < 4; ++i) data.push_back(random_example(rng, 2, 2, 3, 2));
  // Loss is |M W_V - Y|^2 / (N D) with M = S X' fixed: Hessian norm 2 sigma_max(M)^2 / (N D).
  double oracle = 0.0;
  for (const auto& ex : data) {
    const auto fp = forward(m, ex);
    const Eigen::MatrixXd mm = fp.attention * fp.normalized;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mm.transpose() * mm);
    oracle = std::max(oracle, 2.0 * es.eigenvalues().maxCoeff() / 8.0);
  }
  const double beta = estimate_curvature(m, data, 1e-4, 8, 3, kValueBlock);
  EXPECT_NEAR(beta, oracle, 0.1 * oracle);
}

TEST(Curvature, EmptyDataAndMoreSamples) {
  const auto m = ToyModel::random(2, 2, 1.0, 1.0, 1);
  EXPECT_EQ(estimate_curvature(m, {}, 1e-4, 4, 1), 0.0);
  Rng rng(15);
  std::vector<ToyExample> data{random_example(rng, 2, 2, 2, 2), random_example(rng, 2, 2, 2, 2)};
  // Same seed: the first draws coincide, so more samples can only raise the max.
  EXPECT_GE(estimate_curvature(m, data, 1e-4, 8, 5), estimate_curvature(m, data, 1e-4, 2, 5));
  EXPECT_THROW(estimate_curvature(m, data, 0.0, 4, 1), ArgumentError);
}

struct TrainedInstance {
  std::vector<ToyExample> data;
  std::vector<ToyModel> checkpoints;
  BoundConfig cfg;
};

TrainedInstance trained_instance(double gain_fraction) {
  TheoryConfig tc;
  TrainedInstance t;
  t.data = make_bound_dataset(tc);
  const auto probe = ToyModel::random(2, 2, 1.0, tc.init_scale, tc.seed);
  double c = 1.05 * probe.parameter_norm();
  for (int round = 0; round < 50; ++round) {
    auto init = probe;
    init.gain = gain_fraction * gain_threshold(4, 2, c);
    t.checkpoints = train_checkpoints(init, t.data, 3, tc.steps_per_checkpoint, tc.learning_rate);
    double top = 0.0;
    for (const auto& m : t.checkpoints) top = std::max(top, m.parameter_norm());
    if (1.05 * top <= c) break;
    c = 1.05 * top;
  }
  t.cfg.c = c;
  t.cfg.n_tokens = 4;
  t.cfg.hidden_dim = 2;
  for (std::size_t k = 1; k < t.checkpoints.size(); ++k) {
    t.cfg.step_radius =
        std::max(t.cfg.step_radius, (flatten(t.checkpoints[k]) - flatten(t.checkpoints[k - 1])).norm());
  }
  for (const auto& m : t.checkpoints) {
    t.cfg.curvature = std::max(t.cfg.curvature, estimate_curvature(m, t.data, 1e-4, 8, 1));
  }
  t.cfg.curvature *= 1.5;  // slack over the sampled estimate at checkpoints only
  return t;
}

TEST(VerifyBounds, ZeroViolationsAndNonVacuous) {
  const auto t = trained_instance(0.9);
  const auto report = verify_bounds(t.checkpoints, t.data, t.cfg, 10, 2);
  EXPECT_FALSE(report.pointwise.skipped);
  EXPECT_FALSE(report.interval.skipped);
  EXPECT_EQ(report.pairs, 28u);
  EXPECT_EQ(report.pointwise.checks, 84u);
  EXPECT_EQ(report.interval.checks, 28u * 2 * 10);
  EXPECT_EQ(report.pointwise.violation_count, 0u);
  EXPECT_EQ(report.interval.violation_count, 0u);
  EXPECT_GT(report.nonvacuous_checks, 0u);
  EXPECT_NEAR(report.observed_input_norm, report.input_norm_bound_by_input_dim, 1e-12);
}

TEST(VerifyBounds, ThreadsDoNotChangeReport) {
  const auto t = trained_instance(0.9);
  const auto a = verify_bounds(t.checkpoints, t.data, t.cfg, 10, 1);
  const auto b = verify_bounds(t.checkpoints, t.data, t.cfg, 10, 4);
  EXPECT_EQ(a.pointwise.max_ratio, b.pointwise.max_ratio);
  EXPECT_EQ(a.interval.max_ratio, b.interval.max_ratio);
  EXPECT_EQ(a.interval.min_bound, b.interval.min_bound);
}

TEST(VerifyBounds, DuplicateExamplesHaveZeroDistance) {
  auto t = trained_instance(0.9);
  t.data[1] = t.data[0];
  const auto report = verify_bounds(t.checkpoints, t.data, t.cfg, 10);
  EXPECT_EQ(report.pointwise.violation_count, 0u);
}

TEST(VerifyBounds, GainAboveThresholdIsSkipped) {
  auto t = trained_instance(0.9);
  for (auto& m : t.checkpoints) m.gain = 2.0 * gain_threshold(4, 2, t.cfg.c);
  const auto report = verify_bounds(t.checkpoints, t.data, t.cfg, 10);
  EXPECT_TRUE(report.pointwise.skipped);
  EXPECT_TRUE(report.interval.skipped);
  EXPECT_FALSE(report.pointwise.failed_preconditions.empty());
  EXPECT_FALSE(report.violated());
}

TEST(VerifyBounds, NormAboveCIsSkipped) {
  auto t = trained_instance(0.9);
  t.cfg.c = 0.5 * t.checkpoints.back().parameter_norm();
  const auto report = verify_bounds(t.checkpoints, t.data, t.cfg, 10);
  EXPECT_TRUE(report.pointwise.skipped);
  EXPECT_FALSE(report.violated());
}

}  // namespace
}  // namespace xmas
