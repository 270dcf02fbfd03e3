#include "xmas/cli.hpp"
#include "xmas/cluster.hpp"
#include "xmas/trajectory.hpp"

#include "cli_harness.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include "json.hpp"

namespace xmas {
namespace {

using test::run;

TEST(Cli, ScoreMatchesLibrary) {
  test::TempDir dir("cli_score");
  const auto out = dir / "t.xmat";
  const auto r = run({"score", test::fixture("small.xmad").string(), "-o", out.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto table = load_trajectory_table(out);
  const auto oracle = build_trajectory_table(load_attention_dump(test::fixture("small.xmad")));
  ASSERT_EQ(table.scores.rows(), oracle.scores.rows());
  for (Eigen::Index i = 0; i < table.scores.size(); ++i) {
    EXPECT_EQ(table.scores.data()[i], static_cast<double>(static_cast<float>(oracle.scores.data()[i])));
  }
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["n_examples"], 96);
  EXPECT_EQ(j["n_checkpoints"], 7);
}

TEST(Cli, ZeroDumpGivesZeroTable) {
  test::TempDir dir("cli_zero");
  const auto out = dir / "t.xmat";
  ASSERT_EQ(run({"score", test::fixture("zero.xmad").string(), "-o", out.string()}).code, kExitOk);
  const auto table = load_trajectory_table(out);
  EXPECT_EQ(table.n_examples(), 5u);
  EXPECT_TRUE((table.scores.array() == 0.0).all());
}

TEST(Cli, ExitCodes) {
  test::TempDir dir("cli_codes");
  const auto out = (dir / "t.xmat").string();
  EXPECT_EQ(run({"score", "/nonexistent/none.xmad", "-o", out}).code, kExitIo);

  std::ofstream(dir / "bad.xmad", std::ios::binary) << "XMAXjunkjunkjunkjunkjunk";
  const auto bad = run({"score", (dir / "bad.xmad").string(), "-o", out});
  EXPECT_EQ(bad.code, kExitInvalidInput);
  EXPECT_NE(bad.err.find("bad_magic"), std::string::npos) << bad.err;

  EXPECT_EQ(run({"score"}).code, kExitBadArguments);
  EXPECT_EQ(run({"frobnicate"}).code, kExitBadArguments);
  EXPECT_EQ(run({"score", test::fixture("small.xmad").string(), "-o", out, "--k-singular", "0"}).code,
            kExitBadArguments);
  EXPECT_EQ(run({"--help"}).code, kExitOk);

  ASSERT_EQ(run({"score", test::fixture("zero.xmad").string(), "-o", out}).code, kExitOk);
  const auto model = (dir / "m.json").string();
  EXPECT_EQ(run({"cluster", out, "-o", model, "--clusters", "6"}).code, kExitBadArguments);
  EXPECT_EQ(run({"cluster", out, "-o", "/nonexistent/dir/m.json", "--clusters", "2"}).code, kExitIo);
}

TEST(Cli, VerifyTheoryOutcomes) {
  const auto ok = run({"verify-theory", "--gradient-instances", "20", "--softmax-matrices", "50"});
  EXPECT_EQ(ok.code, kExitOk) << ok.err;
  EXPECT_EQ(run({"verify-theory", "--tamper-gradient"}).code, kExitVerificationFailed);
  const auto forced = run({"verify-theory", "--gain", "5", "--gradient-instances", "20", "--softmax-matrices", "50"});
  EXPECT_EQ(forced.code, kExitOk);
  EXPECT_NE(forced.err.find("precondition"), std::string::npos);
  const auto j = nlohmann::json::parse(forced.out);
  EXPECT_TRUE(j["bounds"]["pointwise"]["skipped"].get<bool>());
}

TEST(Cli, SelectHandTrace) {
  test::TempDir dir("cli_select");
  // Trajectory (0, s) has instability s.
  const std::vector<std::size_t> sizes{2, 5, 10};
  const std::vector<double> scores{0.9, 0.1, 0.5, 0.2, 0.8, 0.1, 0.3, 1.0, 0.4, 0.9, 0.2,
                                   0.7, 0.05, 0.6, 0.3, 0.8, 0.5};
  TrajectoryTable table;
  table.scores = RowMatrix::Zero(17, 2);
  ClusterModel model;
  model.centroids = RowMatrix::Zero(3, 2);
  for (std::uint32_t c = 0, i = 0; c < 3; ++c) {
    for (std::size_t j = 0; j < sizes[c]; ++j, ++i) {
      table.scores(i, 1) = scores[i];
      model.assignment.push_back(c);
    }
  }
  save_trajectory_table(table, dir / "t.xmat");
  save_cluster_model(model, dir / "m.json", dir / "m.assignments.u32");
  const auto picks = dir / "s.txt";
  auto args = [&](const std::string& budget) {
    return std::vector<std::string>{"select", "--model", (dir / "m.json").string(), "--table",
                                    (dir / "t.xmat").string(), "--budget", budget, "-o", picks.string()};
  };
  auto r = run(args("9"), {picks});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.files[0], "0\n1\n3\n5\n6\n8\n10\n12\n14\n");
  r = run(args("0"), {picks});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_EQ(r.files[0], "");
  r = run(args("40"), {picks});
  std::string all;
  for (int i = 0; i < 17; ++i) all += std::to_string(i) + "\n";
  EXPECT_EQ(r.files[0], all);
  auto bad_mode = args("9");
  bad_mode.insert(bad_mode.end(), {"--mode", "greedy"});
  EXPECT_EQ(run(bad_mode).code, kExitBadArguments);
}

TEST(Cli, ClusterMatchesLibraryAndEveryRowItsOwnCluster) {
  test::TempDir dir("cli_cluster");
  const auto table = (dir / "t.xmat").string();
  ASSERT_EQ(run({"score", test::fixture("small.xmad").string(), "-o", table}).code, kExitOk);
  const auto model = dir / "m.json";
  auto r = run({"cluster", table, "-o", model.string(), "--clusters", "7", "--seed", "4"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  KMeansOptions opts;
  opts.clusters = 7;
  opts.seed = 4;
  const auto oracle = kmeans(load_trajectory_table(table).scores, opts);
  const auto loaded = load_cluster_model(model);
  EXPECT_EQ(loaded.assignment, oracle.assignment);
  EXPECT_EQ(loaded.inertia, oracle.inertia);

  r = run({"cluster", table, "-o", model.string(), "--clusters", "96"});
  ASSERT_EQ(r.code, kExitOk);
  EXPECT_EQ(nlohmann::json::parse(r.out)["inertia"], 0.0);
}

TEST(Cli, DeterministicAcrossRunsAndThreads) {
  for (const auto& [name, k] : {std::pair{"small.xmad", "12"}, std::pair{"zero.xmad", "3"}}) {
    test::TempDir dir("cli_det");
    const auto res = test::check_cli_determinism(test::fixture(name), dir.path(), k);
    EXPECT_TRUE(res.failures.empty()) << name << ": " << (res.failures.empty() ? "" : res.failures.front());
    EXPECT_GT(res.comparisons, 0u);
  }
}

}  // namespace
}  // namespace xmas
