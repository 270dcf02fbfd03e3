#include "xmas/cli.hpp"

#include "xmas/attn_store.hpp"
#include "xmas/cluster.hpp"
#include "xmas/convergence_sim.hpp"
#include "xmas/errors.hpp"
#include "xmas/json_io.hpp"
#include "xmas/select.hpp"
#include "xmas/theory.hpp"
#include "xmas/trajectory.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <ostream>

namespace xmas {

namespace {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

LogLevel log_level_from_env() {
  const char* v = std::getenv("XMAS_LOG");
  if (v == nullptr) return LogLevel::kWarn;
  const std::string s(v);
  if (s == "error" || s == "0") return LogLevel::kError;
  if (s == "info" || s == "2") return LogLevel::kInfo;
  if (s == "debug" || s == "3") return LogLevel::kDebug;
  return LogLevel::kWarn;
}

class Log {
 public:
  explicit Log(std::ostream& err) : err_(err), level_(log_level_from_env()) {}
  void error(const std::string& m) { emit(LogLevel::kError, "error", m); }
  void warn(const std::string& m) { emit(LogLevel::kWarn, "warn", m); }
  void info(const std::string& m) { emit(LogLevel::kInfo, "info", m); }

 private:
  void emit(LogLevel at, const char* tag, const std::string& m) {
    if (at <= level_) err_ << "xmas: " << tag << ": " << m << '\n';
  }
  std::ostream& err_;
  LogLevel level_;
};

void print_json(std::ostream& out, const nlohmann::json& j) { out << j.dump(2) << '\n'; }

void check_instability(const std::string& name) { (void)parse_instability_variant(name); }

std::filesystem::path default_assignments_path(const std::filesystem::path& model_path) {
  auto p = model_path;
  p.replace_extension(".assignments.u32");
  return p;
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
  std::string input;
  std::string output;
  std::size_t k_singular = kDefaultTopK;
  int threads = 1;
};

int cmd_score(const ScoreArgs& a, std::ostream& out, Log& log) {
  if (a.k_singular == 0) throw ArgumentError("--k-singular must be at least 1");
  const AttentionDump dump = load_attention_dump(a.input, a.threads);
  log.info("read " + std::to_string(dump.n_examples()) + " examples from " + a.input);
  const TrajectoryTable table = build_trajectory_table(dump, a.k_singular, a.threads);
  save_trajectory_table(table, a.output);

  nlohmann::json j{{"command", "score"},
                   {"input", a.input},
                   {"output", a.output},
                   {"k_singular", a.k_singular},
                   {"n_examples", table.n_examples()},
                   {"n_checkpoints", table.n_checkpoints()}};
  if (table.scores.size() > 0) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < table.scores.rows(); ++i)
      for (Eigen::Index c = 0; c < table.scores.cols(); ++c) sum += table.scores(i, c);
    j["score"] = {{"min", table.scores.minCoeff()},
                  {"mean", sum / static_cast<double>(table.scores.size())},
                  {"max", table.scores.maxCoeff()}};
  } else {
    j["score"] = {{"min", nullptr}, {"mean", nullptr}, {"max", nullptr}};
  }
  print_json(out, j);
  return kExitOk;
}

struct ClusterArgs {
  std::string table;
  std::string output;
  std::string assignments;
  KMeansOptions km;
  bool normalize = false;
};

int cmd_cluster(ClusterArgs a, std::ostream& out, Log& log) {
  const TrajectoryTable table = load_trajectory_table(a.table);
  if (a.assignments.empty()) a.assignments = default_assignments_path(a.output).string();
  const ClusterModel model = kmeans(a.normalize ? z_normalize_columns(table.scores) : table.scores, a.km);
  log.info("k-means finished after " + std::to_string(model.iterations_run) + " iterations");
  save_cluster_model(model, a.output, a.assignments);

  nlohmann::json sizes = nlohmann::json::array();
  for (std::size_t s : cluster_sizes(model)) sizes.push_back(s);
  print_json(out, {{"command", "cluster"},
                   {"table", a.table},
                   {"output", a.output},
                   {"assignments", a.assignments},
                   {"clusters", a.km.clusters},
                   {"seed", a.km.seed},
                   {"max_iter", a.km.max_iter},
                   {"tol", a.km.tol},
                   {"normalize", a.normalize},
                   {"n_examples", model.n_examples()},
                   {"inertia", model.inertia},
                   {"iterations_run", model.iterations_run},
                   {"sizes", std::move(sizes)}});
  return kExitOk;
}

struct SelectArgs {
  std::string model;
  std::string table;
  std::string output;
  std::size_t budget = 0;
  std::string mode = "stability";
  std::uint64_t seed = 0;
  std::string instability = "abs";
};

int cmd_select(const SelectArgs& a, std::ostream& out, Log& log) {
  const SamplingMode mode = parse_sampling_mode(a.mode);
  const InstabilityVariant variant = parse_instability_variant(a.instability);
  const ClusterModel model = load_cluster_model(a.model);
  const TrajectoryTable table = load_trajectory_table(a.table);
  if (table.n_examples() != model.n_examples()) {
    throw ShapeError("table has " + std::to_string(table.n_examples()) + " rows but the cluster model covers " +
                     std::to_string(model.n_examples()) + " examples");
  }
  const SelectionResult result = mode == SamplingMode::kStability
                                     ? select_subset(model, instability_scores(table, variant), a.budget)
                                     : sample_random_within_clusters(model, a.budget, a.seed);
  std::ofstream file(a.output, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open " + a.output + " for writing", 0);
  write_indices(result, file);
  file.flush();
  if (!file) throw IoError("write of " + a.output + " failed", 0);
  log.info("selected " + std::to_string(result.selected.size()) + " of " + std::to_string(result.n_examples));

  print_json(out, {{"command", "select"},
                   {"model", a.model},
                   {"table", a.table},
                   {"output", a.output},
                   {"budget", a.budget},
                   {"mode", a.mode},
                   {"seed", a.seed},
                   {"instability", a.instability},
                   {"selection", to_json(result)}});
  return kExitOk;
}

struct VerifyArgs {
  TheoryConfig cfg;
  double gain = 0.0;
  bool gain_set = false;
  std::string output;
};

int cmd_verify_theory(VerifyArgs a, std::ostream& out, Log& log) {
  if (a.gain_set) a.cfg.gain = a.gain;
  const TheoryReport report = run_theory_verification(a.cfg);
  for (const auto& p : report.bounds.pointwise.failed_preconditions) log.warn("precondition not met: " + p);
  for (const auto& p : report.bounds.interval.failed_preconditions) log.warn("interval precondition not met: " + p);
  nlohmann::json j = to_json(report);
  j["command"] = "verify-theory";
  if (!a.output.empty()) write_json_file(j, a.output);
  print_json(out, j);
  if (!report.passed()) {
    log.error("verification failed");
    return kExitVerificationFailed;
  }
  return kExitOk;
}

struct SimulateArgs {
  SimulationConfig cfg;
  std::string instability = "abs";
  std::string output;
  std::string curves;
};

int cmd_simulate(SimulateArgs a, std::ostream& out, Log& log) {
  a.cfg.instability = parse_instability_variant(a.instability);
  const SimulationReport report = run_xmas_vs_random(a.cfg);
  nlohmann::json j = to_json(report);
  j["command"] = "simulate";
  if (!a.output.empty()) write_json_file(j, a.output);
  if (!a.curves.empty()) {
    std::ofstream file(a.curves, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot open " + a.curves + " for writing", 0);
    write_curves_csv(report, file);
    file.flush();
    if (!file) throw IoError("write of " + a.curves + " failed", 0);
  }
  print_json(out, j);
  if (!report.bound_holds()) {
    log.error("realized parameter gap exceeds the neighborhood bound");
    return kExitVerificationFailed;
  }
  return kExitOk;
}

int exit_code_for_current_exception(Log& log) {
  try {
    throw;
  } catch (const ParseError& e) {
    log.error(std::string("invalid input (") + to_string(e.kind()) + "): " + e.what());
    return kExitInvalidInput;
  } catch (const ShapeError& e) {
    log.error(std::string("invalid input: ") + e.what());
    return kExitInvalidInput;
  } catch (const NumericError& e) {
    log.error(std::string("invalid input: ") + e.what());
    return kExitInvalidInput;
  } catch (const IoError& e) {
    log.error(std::string("i/o error: ") + e.what());
    return kExitIo;
  } catch (const ArgumentError& e) {
    log.error(std::string("bad arguments: ") + e.what());
    return kExitBadArguments;
  } catch (const std::exception& e) {
    log.error(std::string("internal error: ") + e.what());
    return kExitVerificationFailed;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Log log(err);
  CLI::App app{"Cross-modal alignment trajectory selection toolkit", "xmas"};
  app.require_subcommand(1);

  ScoreArgs score;
  auto* s = app.add_subcommand("score", "Score an attention dump into an alignment trajectory table");
  s->add_option("input", score.input, "XMAD attention dump")->required();
  s->add_option("-o,--output", score.output, "XMAT table to write")->required();
  s->add_option("--k-singular", score.k_singular, "Singular values summed per block")->capture_default_str();
  s->add_option("--threads", score.threads, "Worker threads")->capture_default_str();

  ClusterArgs cluster;
  auto* c = app.add_subcommand("cluster", "Cluster alignment trajectories with k-means");
  c->add_option("table", cluster.table, "XMAT trajectory table")->required();
  c->add_option("-o,--output", cluster.output, "Cluster model JSON to write")->required();
  c->add_option("--assignments", cluster.assignments, "Assignment file (default: next to the model)");
  c->add_option("--clusters", cluster.km.clusters, "Number of clusters K")->capture_default_str();
  c->add_option("--seed", cluster.km.seed, "k-means++ seed")->capture_default_str();
  c->add_option("--max-iter", cluster.km.max_iter, "Lloyd iteration cap")->capture_default_str();
  c->add_option("--tol", cluster.km.tol, "Relative inertia improvement to stop at")->capture_default_str();
  c->add_flag("--normalize", cluster.normalize, "z-normalize each checkpoint column first");
  c->add_option("--threads", cluster.km.threads, "Worker threads")->capture_default_str();

  SelectArgs select;
  auto* sel = app.add_subcommand("select", "Select a balanced subset from clustered trajectories");
  sel->add_option("--model", select.model, "Cluster model JSON")->required();
  sel->add_option("--table", select.table, "XMAT trajectory table")->required();
  sel->add_option("--budget", select.budget, "Subset size B")->required();
  sel->add_option("-o,--output", select.output, "Newline-delimited indices to write")->required();
  sel->add_option("--mode", select.mode, "stability | random")->capture_default_str();
  sel->add_option("--seed", select.seed, "Seed for random mode")->capture_default_str();
  sel->add_option("--instability", select.instability, "abs | sqr | var")->capture_default_str();
  int select_threads = 1;
  sel->add_option("--threads", select_threads, "Accepted for uniformity; selection is sequential")
      ->capture_default_str();

  VerifyArgs verify;
  auto* v = app.add_subcommand("verify-theory", "Check gradients and gradient-distance bounds on the toy model");
  v->add_option("--seed", verify.cfg.seed, "Seed")->capture_default_str();
  auto* gain_opt =
      v->add_option("--gain", verify.gain, "Force the RMS gain instead of deriving it from the threshold");
  v->add_option("--examples", verify.cfg.examples, "Synthetic examples")->capture_default_str();
  v->add_option("--checkpoints", verify.cfg.checkpoints, "Checkpoints")->capture_default_str();
  v->add_option("--interpolation-points", verify.cfg.interpolation_points, "Points per checkpoint segment")
      ->capture_default_str();
  v->add_option("--gradient-instances", verify.cfg.gradient_instances, "Finite-difference instances")
      ->capture_default_str();
  v->add_option("--softmax-matrices", verify.cfg.softmax_matrices, "Random stochastic matrices")
      ->capture_default_str();
  v->add_flag("--tamper-gradient", verify.cfg.tamper_gradient, "Corrupt the analytic gradient (negative control)");
  v->add_option("-o,--output", verify.output, "Also write the report to this file");
  v->add_option("--threads", verify.cfg.threads, "Worker threads")->capture_default_str();

  SimulateArgs sim;
  auto* m = app.add_subcommand("simulate", "Planted-redundancy selection and subset-training experiment");
  m->add_option("--seed", sim.cfg.seed, "First seed")->capture_default_str();
  m->add_option("--seeds", sim.cfg.seeds, "Number of seeds")->capture_default_str();
  m->add_option("--noise", sim.cfg.noise, "Within-group noise scale")->capture_default_str();
  m->add_option("--groups", sim.cfg.groups, "Planted groups G")->capture_default_str();
  m->add_option("--copies", sim.cfg.copies, "Copies per group")->capture_default_str();
  m->add_option("--clusters", sim.cfg.clusters, "Number of clusters K")->capture_default_str();
  m->add_option("--budget", sim.cfg.budget, "Subset size B")->capture_default_str();
  m->add_option("--k-singular", sim.cfg.k_singular, "Singular values summed per block")->capture_default_str();
  m->add_option("--instability", sim.instability, "abs | sqr | var")->capture_default_str();
  m->add_flag("--normalize", sim.cfg.normalize, "z-normalize trajectories before clustering");
  m->add_option("--epochs", sim.cfg.epochs, "Incremental training epochs")->capture_default_str();
  m->add_option("--decay", sim.cfg.decay, "Step decay per epoch")->capture_default_str();
  m->add_option("--random-draws", sim.cfg.random_draws, "Monte-Carlo draws for the random baseline")
      ->capture_default_str();
  m->add_option("-o,--output", sim.output, "Also write the report to this file");
  m->add_option("--curves", sim.curves, "CSV of per-epoch distance and loss curves");
  m->add_option("--threads", sim.cfg.threads, "Worker threads (one seed per worker)")->capture_default_str();

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.emplace_back("xmas");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitBadArguments;
  }

  try {
    for (int* t : {&score.threads, &cluster.km.threads, &select_threads, &verify.cfg.threads, &sim.cfg.threads}) {
      if (*t < 1) throw ArgumentError("--threads must be at least 1");
    }
    if (s->parsed()) return cmd_score(score, out, log);
    if (c->parsed()) return cmd_cluster(cluster, out, log);
    if (sel->parsed()) {
      check_instability(select.instability);
      return cmd_select(select, out, log);
    }
    if (v->parsed()) {
      verify.gain_set = gain_opt->count() > 0;
      return cmd_verify_theory(verify, out, log);
    }
    if (m->parsed()) return cmd_simulate(sim, out, log);
  } catch (...) {
    return exit_code_for_current_exception(log);
  }
  return kExitBadArguments;
}

}  // namespace xmas
