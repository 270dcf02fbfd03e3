#include "xmas/theory.hpp"

#include "xmas/errors.hpp"
#include "xmas/json_io.hpp"
#include "xmas/random.hpp"

#include <algorithm>
#include <cmath>

namespace xmas {

namespace {

Eigen::MatrixXd normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

double relative(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / denom;
}

Eigen::RowVectorXd random_distribution(Rng& rng, Eigen::Index n) {
  Eigen::RowVectorXd row(n);
  switch (rng.below(4)) {
    case 0: {
      const double temperature = std::exp(rng.uniform(-3.0, 3.0));
      for (Eigen::Index q = 0; q < n; ++q) row(q) = rng.normal() * temperature;
      row = (row.array() - row.maxCoeff()).exp().matrix();
      break;
    }
    case 1:
      row.setZero();
      row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)))) = 1.0;
      break;
    case 2:
      row.setOnes();
      break;
    default:
      for (Eigen::Index q = 0; q < n; ++q) row(q) = rng.uniform() < 0.5 ? 0.0 : rng.uniform();
      if (row.sum() == 0.0) row(0) = 1.0;
      break;
  }
  return row / row.sum();
}

}  // namespace

double relative_gradient_error(const Gradient& analytic, const Gradient& numeric) {
  return relative(flatten(analytic), flatten(numeric));
}

GradientCheckReport check_gradients(std::size_t instances, std::uint64_t seed, double tolerance,
                                    double fd_step_scale, std::size_t max_tokens, std::size_t max_dim,
                                    bool tamper) {
  if (max_tokens < 2 || max_dim < 1) throw ArgumentError("gradient check needs N >= 2 and d, D >= 1");
  GradientCheckReport rep;
  rep.instances = instances;
  rep.tolerance = tolerance;
  rep.fd_step_scale = fd_step_scale;
  rep.tampered = tamper;
  Rng rng(seed);
  for (std::size_t k = 0; k < instances; ++k) {
    const auto n = static_cast<std::size_t>(2 + rng.below(max_tokens - 1));
    const auto n_image = static_cast<std::size_t>(1 + rng.below(n - 1));
    const auto d = static_cast<Eigen::Index>(1 + rng.below(max_dim));
    const auto dh = static_cast<Eigen::Index>(1 + rng.below(max_dim));
    const double gain = rng.uniform(0.5, 1.5);
    const double scale = rng.uniform(0.3, 1.5);

    ToyModel model = ToyModel::random(d, dh, gain, scale, rng.next());
    ToyExample ex;
    ex.n_image = n_image;
    ex.n_text = n - n_image;
    ex.tokens = normal_matrix(rng, static_cast<Eigen::Index>(n), d, 1.0);
    ex.labels = normal_matrix(rng, static_cast<Eigen::Index>(n), dh, 1.0);

    Gradient analytic = grad(model, ex);
    if (tamper) analytic.query.array() += 1e-3 * std::max(analytic.norm(), 1e-12);
    const double step = fd_step_scale * std::max(1.0, model.parameter_norm());
    const Gradient numeric = finite_difference_grad(model, ex, step);

    const double err = relative_gradient_error(analytic, numeric);
    rep.max_relative_error = std::max(rep.max_relative_error, err);
    rep.max_query_error = std::max(rep.max_query_error, relative(analytic.query, numeric.query));
    rep.max_key_error = std::max(rep.max_key_error, relative(analytic.key, numeric.key));
    rep.max_value_error = std::max(rep.max_value_error, relative(analytic.value, numeric.value));
    if (!(err <= tolerance)) ++rep.failures;
  }
  return rep;
}

SoftmaxBoundReport check_softmax_bound(std::size_t matrices, std::uint64_t seed, std::size_t min_tokens,
                                       std::size_t max_tokens) {
  if (min_tokens < 1 || max_tokens < min_tokens) throw ArgumentError("invalid token range");
  SoftmaxBoundReport rep;
  rep.matrices = matrices;
  rep.min_tokens = min_tokens;
  rep.max_tokens = max_tokens;
  Rng rng(seed);
  const std::size_t span = max_tokens - min_tokens + 1;
  for (std::size_t m = 0; m < matrices; ++m) {
    const auto n = static_cast<Eigen::Index>(min_tokens + m % span);
    Eigen::MatrixXd s(n, n);
    for (Eigen::Index r = 0; r < n; ++r) s.row(r) = random_distribution(rng, n);
    const double bound = std::sqrt(static_cast<double>(n)) / 2.0;
    const double norm = softmax_jacobian_fro_norm(s);
    rep.max_ratio = std::max(rep.max_ratio, norm / bound);
    if (norm > bound + 1e-9) ++rep.violations;
  }
  rep.uniform_two_token_norm = softmax_jacobian_fro_norm(Eigen::MatrixXd::Constant(2, 2, 0.5));
  rep.uniform_two_token_gap = std::abs(rep.uniform_two_token_norm - std::sqrt(2.0) / 2.0);
  return rep;
}

std::vector<ToyExample> make_bound_dataset(const TheoryConfig& cfg) {
  Rng rng(cfg.seed);
  const auto n = static_cast<Eigen::Index>(cfg.n_image + cfg.n_text);
  std::vector<ToyExample> data(cfg.examples);
  for (auto& ex : data) {
    ex.n_image = cfg.n_image;
    ex.n_text = cfg.n_text;
    ex.tokens = normal_matrix(rng, n, static_cast<Eigen::Index>(cfg.input_dim), 1.0);
    ex.labels.resize(n, static_cast<Eigen::Index>(cfg.hidden_dim));
    for (Eigen::Index j = 0; j < ex.labels.cols(); ++j)
      for (Eigen::Index i = 0; i < n; ++i) ex.labels(i, j) = rng.uniform(-cfg.label_scale, cfg.label_scale);
  }
  return data;
}

std::vector<ToyModel> train_checkpoints(const ToyModel& init, std::span<const ToyExample> data,
                                        std::size_t checkpoints, std::size_t steps_per_checkpoint,
                                        double learning_rate) {
  std::vector<ToyModel> out;
  if (checkpoints == 0) return out;
  ToyModel model = init;
  out.push_back(model);
  for (std::size_t t = 1; t < checkpoints; ++t) {
    for (std::size_t s = 0; s < steps_per_checkpoint; ++s) {
      Gradient total{Eigen::MatrixXd::Zero(model.input_dim(), model.hidden_dim()),
                     Eigen::MatrixXd::Zero(model.input_dim(), model.hidden_dim()),
                     Eigen::MatrixXd::Zero(model.input_dim(), model.hidden_dim())};
      for (const auto& ex : data) {
        const Gradient g = grad(model, ex);
        total.query += g.query;
        total.key += g.key;
        total.value += g.value;
      }
      model.w_query -= learning_rate * total.query;
      model.w_key -= learning_rate * total.key;
      model.w_value -= learning_rate * total.value;
    }
    out.push_back(model);
  }
  return out;
}

TheoryReport run_theory_verification(const TheoryConfig& cfg) {
  if (cfg.examples < 2 || cfg.checkpoints < 1) throw ArgumentError("need >= 2 examples and >= 1 checkpoint");
  if (cfg.n_image == 0 || cfg.n_text == 0) throw ArgumentError("need at least one image and one text token");
  TheoryReport rep;
  rep.config = cfg;
  rep.gradients = check_gradients(cfg.gradient_instances, cfg.seed, cfg.gradient_tolerance, cfg.fd_step_scale, 8, 4,
                                  cfg.tamper_gradient);
  rep.softmax = check_softmax_bound(cfg.softmax_matrices, cfg.seed + 1);

  const auto data = make_bound_dataset(cfg);
  const double n_tok = static_cast<double>(cfg.n_image + cfg.n_text);
  const double dh = static_cast<double>(cfg.hidden_dim);
  const ToyModel init = ToyModel::random(static_cast<Eigen::Index>(cfg.input_dim),
                                         static_cast<Eigen::Index>(cfg.hidden_dim), 1.0, cfg.init_scale,
                                         cfg.seed + 2);

  auto max_norm = [](const std::vector<ToyModel>& ms) {
    double m = 0.0;
    for (const auto& x : ms) m = std::max(m, x.parameter_norm());
    return m;
  };
  auto with_gain = [&](double g) {
    ToyModel m = init;
    m.gain = g;
    return train_checkpoints(m, data, cfg.checkpoints, cfg.steps_per_checkpoint, cfg.learning_rate);
  };

  std::vector<ToyModel> checkpoints;
  if (cfg.gain) {
    checkpoints = with_gain(*cfg.gain);
    rep.c_history.push_back(cfg.norm_slack * max_norm(checkpoints));
  } else {
    // The gain depends on c and the trained norms depend on the gain: iterate
    // until c stops growing, so that g < threshold(c) and |phi| <= c both hold.
    double c = cfg.norm_slack * init.parameter_norm();
    rep.c_history.push_back(c);
    for (std::size_t it = 0; it < cfg.max_gain_iterations; ++it) {
      checkpoints = with_gain(cfg.gain_fraction * gain_threshold(n_tok, dh, c));
      const double next = cfg.norm_slack * max_norm(checkpoints);
      rep.c_history.push_back(next);
      if (next <= c) {
        rep.gain_fixed_point_converged = true;
        break;
      }
      c = next;
    }
  }

  BoundConfig bc;
  bc.c = rep.c_history.back();
  bc.n_tokens = cfg.n_image + cfg.n_text;
  bc.hidden_dim = cfg.hidden_dim;
  bc.proxy_gap = 0.0;
  for (std::size_t t = 0; t + 1 < checkpoints.size(); ++t) {
    bc.step_radius = std::max(bc.step_radius, (flatten(checkpoints[t + 1]) - flatten(checkpoints[t])).norm());
  }
  // Curvature at every checkpoint and every segment midpoint.
  std::vector<ToyModel> probes = checkpoints;
  for (std::size_t t = 0; t + 1 < checkpoints.size(); ++t) {
    probes.push_back(unflatten(0.5 * (flatten(checkpoints[t]) + flatten(checkpoints[t + 1])),
                               checkpoints[t].input_dim(), checkpoints[t].hidden_dim(), checkpoints[t].gain));
  }
  for (std::size_t p = 0; p < probes.size(); ++p) {
    bc.curvature = std::max(bc.curvature, estimate_curvature(probes[p], data, cfg.curvature_radius,
                                                             cfg.curvature_samples, cfg.seed + 100 * (p + 1)));
  }
  rep.bounds = verify_bounds(checkpoints, data, bc, cfg.interpolation_points, cfg.threads);
  return rep;
}

nlohmann::json to_json(const GradientCheckReport& r) {
  return {{"instances", r.instances},
          {"fd_step_scale", r.fd_step_scale},
          {"tolerance", r.tolerance},
          {"max_relative_error", r.max_relative_error},
          {"max_query_error", r.max_query_error},
          {"max_key_error", r.max_key_error},
          {"max_value_error", r.max_value_error},
          {"failures", r.failures},
          {"tampered", r.tampered},
          {"passed", r.passed()}};
}

nlohmann::json to_json(const SoftmaxBoundReport& r) {
  return {{"matrices", r.matrices},
          {"min_tokens", r.min_tokens},
          {"max_tokens", r.max_tokens},
          {"max_ratio", r.max_ratio},
          {"violations", r.violations},
          {"uniform_two_token_norm", r.uniform_two_token_norm},
          {"uniform_two_token_gap", r.uniform_two_token_gap},
          {"passed", r.passed()}};
}

nlohmann::json to_json(const TheoryConfig& c) {
  return {{"seed", c.seed},
          {"n_image", c.n_image},
          {"n_text", c.n_text},
          {"input_dim", c.input_dim},
          {"hidden_dim", c.hidden_dim},
          {"examples", c.examples},
          {"checkpoints", c.checkpoints},
          {"steps_per_checkpoint", c.steps_per_checkpoint},
          {"learning_rate", c.learning_rate},
          {"init_scale", c.init_scale},
          {"label_scale", c.label_scale},
          {"gain_fraction", c.gain_fraction},
          {"gain", c.gain ? nlohmann::json(*c.gain) : nlohmann::json(nullptr)},
          {"norm_slack", c.norm_slack},
          {"max_gain_iterations", c.max_gain_iterations},
          {"interpolation_points", c.interpolation_points},
          {"curvature_samples", c.curvature_samples},
          {"curvature_radius", c.curvature_radius},
          {"gradient_instances", c.gradient_instances},
          {"gradient_tolerance", c.gradient_tolerance},
          {"fd_step_scale", c.fd_step_scale},
          {"softmax_matrices", c.softmax_matrices},
          {"tamper_gradient", c.tamper_gradient}};
}

nlohmann::json to_json(const TheoryReport& r) {
  return {{"config", to_json(r.config)},
          {"c_history", r.c_history},
          {"gain_fixed_point_converged", r.gain_fixed_point_converged},
          {"gradient_check", to_json(r.gradients)},
          {"softmax_bound", to_json(r.softmax)},
          {"bounds", to_json(r.bounds)},
          {"passed", r.passed()}};
}

}  // namespace xmas
