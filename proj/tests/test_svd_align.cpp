#include "xmas/errors.hpp"
#include "xmas/svd_align.hpp"

#include "test_util.hpp"

#include <Eigen/QR>
#include <gtest/gtest.h>

#include <limits>

namespace xmas {
namespace {

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
  return m;
}

Eigen::MatrixXd random_orthogonal(Rng& rng, Eigen::Index n) {
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
}

TEST(ExtractBlock, IdentityHasEmptyCrossBlock) {
  EXPECT_EQ(extract_cross_modal_block(Eigen::MatrixXd::Identity(4, 4), 2, 2), Eigen::MatrixXd::Zero(2, 2));
}

TEST(ExtractBlock, DirectRead) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 4);
  a(2, 0) = 0.3;
  a(3, 1) = 0.7;
  Eigen::MatrixXd expected(2, 2);
  expected << 0.3, 0, 0, 0.7;
  EXPECT_EQ(extract_cross_modal_block(a, 2, 2), expected);
}

TEST(ExtractBlock, MatchesIndexLoop) {
  Rng rng(1);
  const Eigen::MatrixXd a = random_matrix(rng, 6, 6);
  const auto block = extract_cross_modal_block(a, 4, 2);
  ASSERT_EQ(block.rows(), 2);
  ASSERT_EQ(block.cols(), 4);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 4; ++c) EXPECT_EQ(block(r, c), a(4 + r, c));
  }
}

TEST(ExtractBlock, DimensionMismatch) {
  EXPECT_THROW(extract_cross_modal_block(Eigen::MatrixXd::Zero(4, 4), 2, 3), ShapeError);
  EXPECT_THROW(extract_cross_modal_block(Eigen::MatrixXd::Zero(4, 5), 2, 2), ShapeError);
}

TEST(SumLayers, Cases) {
  Rng rng(2);
  const Eigen::MatrixXd b = random_matrix(rng, 3, 2);
  std::vector<CrossModalMatrix> one{b};
  EXPECT_EQ(sum_layers(one), b);
  std::vector<CrossModalMatrix> two{b, b};
  EXPECT_EQ(sum_layers(two), 2.0 * b);

  std::vector<CrossModalMatrix> five;
  for (int l = 0; l < 5; ++l) five.push_back(random_matrix(rng, 3, 4));
  const auto sum = sum_layers(five);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      double acc = 0.0;
      for (const auto& m : five) acc += m(r, c);
      EXPECT_EQ(sum(r, c), acc);
    }
  }
  five.push_back(Eigen::MatrixXd::Zero(2, 2));
  EXPECT_THROW(sum_layers(five), ShapeError);
  EXPECT_THROW(sum_layers({}), ShapeError);
}

TEST(TopK, HandValues) {
  Eigen::MatrixXd d(2, 2);
  d << 3, 0, 0, 4;
  const auto sv = top_k_singular_values(d, 2);
  ASSERT_EQ(sv.size(), 2u);
  EXPECT_NEAR(sv[0], 4.0, 1e-12);
  EXPECT_NEAR(sv[1], 3.0, 1e-12);

  const auto ones = top_k_singular_values(Eigen::MatrixXd::Ones(2, 2), 2);
  EXPECT_NEAR(ones[0], 2.0, 1e-12);
  EXPECT_NEAR(ones[1], 0.0, 1e-7);

  const auto score = alignment_score(d, 5);
  EXPECT_NEAR(score.sigma, 7.0, 1e-12);
  EXPECT_EQ(score.k_used, 2u);
  EXPECT_EQ(alignment_score(Eigen::MatrixXd::Zero(3, 4)).sigma, 0.0);
}

TEST(TopK, MatchesJacobiOracle) {
  Rng rng(3);
  const Eigen::MatrixXd m = random_matrix(rng, 7, 5);
  EXPECT_NEAR(alignment_score(m, 5).sigma, test::jacobi_top_k_sum(m, 5), 1e-9 * test::jacobi_top_k_sum(m, 5));
  const Eigen::MatrixXd w = random_matrix(rng, 10, 8);
  const double oracle = test::jacobi_top_k_sum(w, 5);
  EXPECT_NEAR(alignment_score(w).sigma, oracle, 1e-9 * oracle);
}

TEST(TopK, DescendingAndNonNegative) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = random_matrix(rng, 1 + rng.below(12), 1 + rng.below(12));
    const auto sv = top_k_singular_values(m, 6);
    EXPECT_EQ(sv.size(), std::min<std::size_t>(6, std::min(m.rows(), m.cols())));
    for (std::size_t i = 0; i < sv.size(); ++i) {
      EXPECT_GE(sv[i], 0.0);
      if (i > 0) EXPECT_GE(sv[i - 1], sv[i]);
    }
  }
}

TEST(TopK, Errors) {
  EXPECT_THROW(top_k_singular_values(Eigen::MatrixXd::Ones(2, 2), 0), ArgumentError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(2, 2);
  bad(1, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(alignment_score(bad), NumericError);
}

TEST(AlignmentProperties, OrthogonalInvarianceScalingAndBounds) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto rows = static_cast<Eigen::Index>(1 + rng.below(10));
    const auto cols = static_cast<Eigen::Index>(1 + rng.below(10));
    const auto m = random_matrix(rng, rows, cols);
    const double sigma = alignment_score(m).sigma;
    const auto u = random_orthogonal(rng, rows);
    const auto v = random_orthogonal(rng, cols);
    EXPECT_NEAR(alignment_score(u * m * v.transpose()).sigma, sigma, 1e-9 * std::max(1.0, sigma));
    const double alpha = rng.uniform(-3.0, 3.0);
    EXPECT_NEAR(alignment_score(alpha * m).sigma, std::abs(alpha) * sigma, 1e-9 * std::max(1.0, sigma));
    for (std::size_t k = 1; k < 8; ++k) {
      EXPECT_GE(alignment_score(m, k + 1).sigma + 1e-12, alignment_score(m, k).sigma);
    }
    const auto all = top_k_singular_values(m, 100);
    const double fro = m.norm();
    const double full = alignment_score(m, 100).sigma;
    EXPECT_LE(full, std::sqrt(static_cast<double>(std::min(rows, cols))) * fro * (1 + 1e-12));
    EXPECT_GE(sigma + 1e-12, all[0]);
  }
}

}  // namespace
}  // namespace xmas
