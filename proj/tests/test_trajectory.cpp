#include "xmas/errors.hpp"
#include "xmas/trajectory.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

namespace xmas {
namespace {

TEST(Instability, HandValues) {
  EXPECT_EQ(instability_score(std::vector<double>{5, 5, 5}), 0.0);
  EXPECT_NEAR(instability_score(std::vector<double>{1.0, 1.5, 1.2}), 0.8, 1e-15);
  EXPECT_EQ(instability_score(std::vector<double>{0, 1, 0, 1}), 3.0);
  EXPECT_EQ(instability_score(std::vector<double>{4.2}), 0.0);
}

TEST(Instability, AblationVariants) {
  const std::vector<double> t{1.0, 3.0, 2.0};
  EXPECT_EQ(instability_score(t, InstabilityVariant::kSqrDiff), 5.0);
  // mean 2, deviations (-1, 1, 0)
  EXPECT_NEAR(instability_score(t, InstabilityVariant::kVariance), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(parse_instability_variant("abs"), InstabilityVariant::kAbsDiff);
  EXPECT_EQ(parse_instability_variant("sqr"), InstabilityVariant::kSqrDiff);
  EXPECT_EQ(parse_instability_variant("var"), InstabilityVariant::kVariance);
  EXPECT_THROW(parse_instability_variant("median"), ArgumentError);
  EXPECT_THROW(instability_score(std::vector<double>{}), ArgumentError);
}

TEST(Instability, Properties) {
  Rng rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> t(1 + rng.below(10));
    for (double& v : t) v = rng.uniform(0.0, 10.0);
    const double s = instability_score(t);
    EXPECT_GE(s, 0.0);
    std::vector<double> rev(t.rbegin(), t.rend());
    EXPECT_NEAR(instability_score(rev), s, 1e-12);
    const double shift = rng.uniform(0.0, 5.0);
    const double alpha = rng.uniform(0.0, 4.0);
    std::vector<double> moved = t;
    std::vector<double> scaled = t;
    for (std::size_t i = 0; i < t.size(); ++i) {
      moved[i] += shift;
      scaled[i] *= alpha;
    }
    EXPECT_NEAR(instability_score(moved), s, 1e-9);
    EXPECT_NEAR(instability_score(scaled), alpha * s, 1e-9);
    std::vector<double> sorted = t;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_NEAR(instability_score(sorted), sorted.back() - sorted.front(), 1e-12);
  }
}

TEST(TrajectoryTable, ZeroDumpGivesZeroTable) {
  const auto table = build_trajectory_table(load_attention_dump(test::fixture("zero.xmad")));
  EXPECT_EQ(table.n_examples(), 5u);
  EXPECT_EQ(table.n_checkpoints(), 7u);
  EXPECT_TRUE((table.scores.array() == 0.0).all());
}

TEST(TrajectoryTable, ConstantDiagonal) {
  AttentionDump dump;
  dump.layer_count = 4;
  dump.n_checkpoints = 7;
  Eigen::MatrixXd d(2, 2);
  d << 3, 0, 0, 4;
  dump.records.push_back({0, std::vector<Eigen::MatrixXd>(7, d)});
  const auto table = build_trajectory_table(dump);
  for (int j = 0; j < 7; ++j) EXPECT_NEAR(table.scores(0, j), 7.0, 1e-12);
}

TEST(TrajectoryTable, CellsMatchPerCellScoringAndThreads) {
  Rng rng(21);
  const auto dump = test::random_dump(rng, 200, 7, 2);
  const auto table = build_trajectory_table(dump, 5, 1);
  for (const auto& rec : dump.records) {
    for (std::size_t j = 0; j < 7; ++j) {
      EXPECT_EQ(table.scores(static_cast<Eigen::Index>(rec.example_id), static_cast<Eigen::Index>(j)),
                alignment_score(rec.checkpoints[j], 5).sigma);
    }
  }
  for (int threads : {2, 3, 8}) EXPECT_EQ(build_trajectory_table(dump, 5, threads).scores, table.scores);
}

TEST(TrajectoryTable, InstabilityPerRow) {
  TrajectoryTable t;
  t.scores.resize(2, 3);
  t.scores << 1.0, 1.5, 1.2, 5, 5, 5;
  const auto s = instability_scores(t);
  EXPECT_NEAR(s[0], 0.8, 1e-15);
  EXPECT_EQ(s[1], 0.0);
}

TEST(ZNormalize, ColumnsHaveZeroMeanUnitSpread) {
  RowMatrix rows(4, 2);
  rows << 1, 7, 2, 7, 3, 7, 6, 7;
  const auto z = z_normalize_columns(rows);
  EXPECT_NEAR(z.col(0).mean(), 0.0, 1e-15);
  EXPECT_NEAR(z.col(0).squaredNorm() / 4.0, 1.0, 1e-12);
  // Constant column is only centered.
  EXPECT_TRUE((z.col(1).array() == 0.0).all());
}

}  // namespace
}  // namespace xmas
