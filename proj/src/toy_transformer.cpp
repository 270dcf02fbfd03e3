#include "xmas/toy_transformer.hpp"

#include "xmas/errors.hpp"
#include "xmas/json_io.hpp"
#include "xmas/parallel.hpp"
#include "xmas/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace xmas {

namespace {

constexpr double kStochasticTolerance = 1e-8;
constexpr std::size_t kPowerIterations = 20;
constexpr std::size_t kMaxListedViolations = 100;

void check_model_shapes(const ToyModel& model) {
  const auto d = model.w_query.rows();
  const auto dh = model.w_query.cols();
  if (model.w_key.rows() != d || model.w_key.cols() != dh || model.w_value.rows() != d ||
      model.w_value.cols() != dh) {
    throw ShapeError("W_Q, W_K and W_V must share one d x D shape");
  }
}

void check_example_shapes(const ToyModel& model, const ToyExample& ex) {
  check_model_shapes(model);
  const auto n = static_cast<Eigen::Index>(ex.n_tokens());
  if (ex.tokens.rows() != n || ex.tokens.cols() != model.input_dim()) {
    throw ShapeError("tokens are " + std::to_string(ex.tokens.rows()) + "x" + std::to_string(ex.tokens.cols()) +
                     ", expected " + std::to_string(n) + "x" + std::to_string(model.input_dim()));
  }
  if (ex.labels.rows() != n || ex.labels.cols() != model.hidden_dim()) {
    throw ShapeError("labels are " + std::to_string(ex.labels.rows()) + "x" + std::to_string(ex.labels.cols()) +
                     ", expected " + std::to_string(n) + "x" + std::to_string(model.hidden_dim()));
  }
}

}  // namespace

double ToyModel::parameter_norm() const {
  return std::sqrt(w_query.squaredNorm() + w_key.squaredNorm() + w_value.squaredNorm());
}

ToyModel ToyModel::random(Eigen::Index input_dim, Eigen::Index hidden_dim, double gain, double scale,
                          std::uint64_t seed) {
  Rng rng(seed);
  ToyModel m;
  m.gain = gain;
  for (Eigen::MatrixXd* w : {&m.w_query, &m.w_key, &m.w_value}) {
    w->resize(input_dim, hidden_dim);
    for (Eigen::Index j = 0; j < hidden_dim; ++j)
      for (Eigen::Index i = 0; i < input_dim; ++i) (*w)(i, j) = scale * rng.normal();
  }
  return m;
}

double Gradient::norm() const {
  return std::sqrt(query.squaredNorm() + key.squaredNorm() + value.squaredNorm());
}

Eigen::MatrixXd rms_normalize(const Eigen::MatrixXd& x, double gain) {
  const double sqrt_d = std::sqrt(static_cast<double>(x.cols()));
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double n = x.row(r).norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw NumericError("row " + std::to_string(r) + " cannot be RMS-normalized (norm " + std::to_string(n) + ")");
    }
    out.row(r) = x.row(r) * (gain * sqrt_d / n);
  }
  return out;
}

Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd s(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double top = logits.row(r).maxCoeff();
    s.row(r) = (logits.row(r).array() - top).exp().matrix();
    s.row(r) /= s.row(r).sum();
  }
  return s;
}

ForwardPass forward(const ToyModel& model, const ToyExample& example) {
  check_example_shapes(model, example);
  ForwardPass fp;
  fp.normalized = rms_normalize(example.tokens, model.gain);
  const double inv_sqrt_hidden = 1.0 / std::sqrt(static_cast<double>(model.hidden_dim()));
  const Eigen::MatrixXd q = fp.normalized * model.w_query;
  const Eigen::MatrixXd k = fp.normalized * model.w_key;
  fp.logits = q * k.transpose() * inv_sqrt_hidden;
  fp.attention = row_softmax(fp.logits);
  fp.output = fp.attention * (fp.normalized * model.w_value);
  return fp;
}

double loss(const Eigen::MatrixXd& output, const Eigen::MatrixXd& labels) {
  if (output.rows() != labels.rows() || output.cols() != labels.cols()) {
    throw ShapeError("output and labels differ in shape");
  }
  return (output - labels).squaredNorm() / static_cast<double>(output.size());
}

double example_loss(const ToyModel& model, const ToyExample& example) {
  return loss(forward(model, example).output, example.labels);
}

Gradient grad(const ToyModel& model, const ToyExample& example) {
  const ForwardPass fp = forward(model, example);
  const Eigen::MatrixXd& x = fp.normalized;
  const Eigen::MatrixXd& s = fp.attention;
  const double inv_sqrt_hidden = 1.0 / std::sqrt(static_cast<double>(model.hidden_dim()));

  const Eigen::MatrixXd d_out = (fp.output - example.labels) * (2.0 / static_cast<double>(fp.output.size()));
  const Eigen::MatrixXd xv = x * model.w_value;
  const Eigen::MatrixXd d_attn = d_out * xv.transpose();
  // Softmax backward, row by row: dA = S o (dS - rowsum(dS o S)).
  const Eigen::VectorXd row_dot = (d_attn.array() * s.array()).rowwise().sum();
  const Eigen::MatrixXd d_logits = (s.array() * (d_attn.colwise() - row_dot).array()).matrix();

  Gradient g;
  g.value = (s * x).transpose() * d_out;
  g.query = x.transpose() * d_logits * (x * model.w_key) * inv_sqrt_hidden;
  g.key = x.transpose() * d_logits.transpose() * (x * model.w_query) * inv_sqrt_hidden;
  return g;
}

double softmax_jacobian_fro_norm(const Eigen::MatrixXd& s) {
  if (s.rows() != s.cols()) throw ShapeError("attention matrix must be square");
  double total = 0.0;
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const auto row = s.row(r).array();
    if (!row.isFinite().all() || (row < 0.0).any() || std::abs(row.sum() - 1.0) > kStochasticTolerance) {
      throw ArgumentError("row " + std::to_string(r) + " is not a probability vector");
    }
    const double xi2 = row.square().sum();
    const double xi3 = row.cube().sum();
    total += xi2 - 2.0 * xi3 + xi2 * xi2;
  }
  return std::sqrt(std::max(total, 0.0));
}

Eigen::MatrixXd cross_modal_attention(const ToyModel& model, const ToyExample& example) {
  const auto s = forward(model, example).attention;
  return s.bottomLeftCorner(static_cast<Eigen::Index>(example.n_text), static_cast<Eigen::Index>(example.n_image));
}

double attention_distance(const ToyModel& model_a, const ToyModel& model_b, const ToyExample& ex_i,
                          const ToyExample& ex_j) {
  if (ex_i.n_image != ex_j.n_image || ex_i.n_text != ex_j.n_text) {
    throw ShapeError("examples have different image/text token counts");
  }
  return (cross_modal_attention(model_a, ex_i) - cross_modal_attention(model_b, ex_j)).norm();
}

AttentionParts decompose_attention(const Eigen::MatrixXd& s, std::size_t n_image) {
  const auto n = s.rows();
  const auto ni = static_cast<Eigen::Index>(n_image);
  if (s.cols() != n || ni > n) throw ShapeError("attention must be square with n_image <= N");
  const Eigen::Index nt = n - ni;
  AttentionParts p;
  p.cross = Eigen::MatrixXd::Zero(n, n);
  p.cross_transpose = Eigen::MatrixXd::Zero(n, n);
  p.cross.bottomLeftCorner(nt, ni) = s.bottomLeftCorner(nt, ni);
  p.cross_transpose.topRightCorner(ni, nt) = s.bottomLeftCorner(nt, ni).transpose();
  p.remainder = s - p.cross - p.cross_transpose;
  return p;
}

double gain_threshold(double n_tokens, double hidden_dim, double c) {
  return std::pow(n_tokens, -5.0 / 8.0) * std::pow(hidden_dim, -1.0 / 8.0) * std::pow(c, -3.0 / 4.0);
}

double pointwise_gradient_bound(double attention_distance, const BoundConfig& cfg) {
  if (!(cfg.c > 0.0)) throw ArgumentError("parameter-norm bound c must be positive");
  const double sqrt3 = std::sqrt(3.0);
  return 4.0 / sqrt3 * (attention_distance + 2.0 * cfg.proxy_gap) +
         8.0 * std::sqrt(static_cast<double>(cfg.n_tokens)) / (3.0 * sqrt3 * cfg.c);
}

double interval_gradient_bound(double bound_at_first, double bound_at_second, const BoundConfig& cfg) {
  return std::max(bound_at_first, bound_at_second) + 2.0 * cfg.step_radius * cfg.curvature;
}

Eigen::VectorXd flatten(const ToyModel& model) {
  check_model_shapes(model);
  const auto m = model.w_query.size();
  Eigen::VectorXd v(3 * m);
  v.segment(0, m) = model.w_query.reshaped();
  v.segment(m, m) = model.w_key.reshaped();
  v.segment(2 * m, m) = model.w_value.reshaped();
  return v;
}

Eigen::VectorXd flatten(const Gradient& g) {
  const auto m = g.query.size();
  Eigen::VectorXd v(3 * m);
  v.segment(0, m) = g.query.reshaped();
  v.segment(m, m) = g.key.reshaped();
  v.segment(2 * m, m) = g.value.reshaped();
  return v;
}

ToyModel unflatten(const Eigen::VectorXd& params, Eigen::Index input_dim, Eigen::Index hidden_dim, double gain) {
  const auto m = input_dim * hidden_dim;
  if (params.size() != 3 * m) throw ShapeError("parameter vector has the wrong length");
  ToyModel model;
  model.gain = gain;
  model.w_query = params.segment(0, m).reshaped(input_dim, hidden_dim);
  model.w_key = params.segment(m, m).reshaped(input_dim, hidden_dim);
  model.w_value = params.segment(2 * m, m).reshaped(input_dim, hidden_dim);
  return model;
}

Eigen::VectorXd block_mask(Eigen::Index input_dim, Eigen::Index hidden_dim, unsigned blocks) {
  const auto m = input_dim * hidden_dim;
  Eigen::VectorXd mask = Eigen::VectorXd::Zero(3 * m);
  if (blocks & kQueryBlock) mask.segment(0, m).setOnes();
  if (blocks & kKeyBlock) mask.segment(m, m).setOnes();
  if (blocks & kValueBlock) mask.segment(2 * m, m).setOnes();
  return mask;
}

void mask_blocks(Eigen::VectorXd& v, Eigen::Index input_dim, Eigen::Index hidden_dim, unsigned blocks) {
  v = v.cwiseProduct(block_mask(input_dim, hidden_dim, blocks));
}

Gradient finite_difference_grad(const ToyModel& model, const ToyExample& example, double step) {
  const Eigen::VectorXd base = flatten(model);
  Eigen::VectorXd out(base.size());
  const auto d = model.input_dim();
  const auto dh = model.hidden_dim();
  Eigen::VectorXd probe = base;
  for (Eigen::Index p = 0; p < base.size(); ++p) {
    probe(p) = base(p) + step;
    const double up = example_loss(unflatten(probe, d, dh, model.gain), example);
    probe(p) = base(p) - step;
    const double down = example_loss(unflatten(probe, d, dh, model.gain), example);
    probe(p) = base(p);
    out(p) = (up - down) / (2.0 * step);
  }
  const auto m = d * dh;
  Gradient g;
  g.query = out.segment(0, m).reshaped(d, dh);
  g.key = out.segment(m, m).reshaped(d, dh);
  g.value = out.segment(2 * m, m).reshaped(d, dh);
  return g;
}

double lipschitz_estimate(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradient,
                          const Eigen::VectorXd& at, const Eigen::VectorXd& mask, double radius,
                          std::size_t samples, std::uint64_t seed) {
  if (!(radius > 0.0)) throw ArgumentError("curvature radius must be positive");
  if (mask.size() != at.size()) throw ShapeError("mask length differs from the parameter vector");
  if (mask.isZero()) return 0.0;
  Rng rng(seed);
  const Eigen::VectorXd g0 = gradient(at);
  double best = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    Eigen::VectorXd dir(at.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = rng.normal() * mask(i);
    for (std::size_t it = 0; it < kPowerIterations; ++it) {
      const double n = dir.norm();
      if (!(n > 0.0)) break;
      dir *= radius / n;
      const Eigen::VectorXd diff = (gradient(at + dir) - g0).cwiseProduct(mask);
      const double ratio = diff.norm() / radius;
      best = std::max(best, ratio);
      // Symmetric Hessian: power iteration on H u converges to the top |eigenvalue|.
      dir = diff;
    }
  }
  return best;
}

double estimate_curvature(const ToyModel& model, std::span<const ToyExample> data, double radius,
                          std::size_t samples, std::uint64_t seed, unsigned blocks) {
  if (!(radius > 0.0)) throw ArgumentError("curvature radius must be positive");
  const auto d = model.input_dim();
  const auto dh = model.hidden_dim();
  const Eigen::VectorXd at = flatten(model);
  const Eigen::VectorXd mask = block_mask(d, dh, blocks);
  double best = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ToyExample& ex = data[i];
    auto g = [&](const Eigen::VectorXd& p) { return flatten(grad(unflatten(p, d, dh, model.gain), ex)); };
    best = std::max(best, lipschitz_estimate(g, at, mask, radius, samples, seed + i));
  }
  return best;
}

// ---------------------------------------------------------------------------

namespace {

struct PairStats {
  double distance = 0.0;
  double bound = 0.0;
};

void record(BoundCheck& check, const PairViolation& candidate) {
  ++check.checks;
  const double ratio = candidate.bound > 0.0 ? candidate.distance / candidate.bound
                                             : (candidate.distance > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  check.max_ratio = std::max(check.max_ratio, ratio);
  check.max_distance = std::max(check.max_distance, candidate.distance);
  check.min_bound = check.checks == 1 ? candidate.bound : std::min(check.min_bound, candidate.bound);
  if (candidate.distance > candidate.bound) {
    ++check.violation_count;
    if (check.violations.size() < kMaxListedViolations) check.violations.push_back(candidate);
  }
}

// Flattened gradients of every example at one parameter point.
std::vector<Eigen::VectorXd> all_gradients(const ToyModel& model, std::span<const ToyExample> data, int threads) {
  std::vector<Eigen::VectorXd> out(data.size());
  for_each_chunk(data.size(), 1, threads, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = flatten(grad(model, data[i]));
  });
  return out;
}

std::vector<Eigen::MatrixXd> all_cross_blocks(const ToyModel& model, std::span<const ToyExample> data) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(data.size());
  for (const auto& ex : data) out.push_back(cross_modal_attention(model, ex));
  return out;
}

}  // namespace

BoundReport verify_bounds(std::span<const ToyModel> checkpoints, std::span<const ToyExample> data,
                          const BoundConfig& cfg_in, std::size_t interpolation_points, int threads) {
  if (checkpoints.empty()) throw ArgumentError("verify_bounds needs at least one checkpoint");
  if (data.size() < 2) throw ArgumentError("verify_bounds needs at least two examples");
  for (const auto& ex : data) check_example_shapes(checkpoints.front(), ex);
  for (const auto& ex : data) {
    if (ex.n_image != data.front().n_image || ex.n_text != data.front().n_text) {
      throw ShapeError("all examples must share one image/text token split");
    }
  }

  BoundReport rep;
  rep.config = cfg_in;
  BoundConfig& cfg = rep.config;
  if (cfg.n_tokens == 0) cfg.n_tokens = data.front().n_tokens();
  if (cfg.hidden_dim == 0) cfg.hidden_dim = static_cast<std::size_t>(checkpoints.front().hidden_dim());
  const double gain = checkpoints.front().gain;
  rep.gain = gain;
  rep.gain_threshold = cfg.c > 0.0 ? gain_threshold(static_cast<double>(cfg.n_tokens),
                                                    static_cast<double>(cfg.hidden_dim), cfg.c)
                                   : 0.0;
  rep.n_examples = data.size();
  rep.pairs = data.size() * (data.size() - 1) / 2;
  rep.interpolation_points = interpolation_points;

  const double n_tok = static_cast<double>(cfg.n_tokens);
  const double d_in = static_cast<double>(checkpoints.front().input_dim());
  rep.input_norm_bound_by_input_dim = gain * std::sqrt(n_tok * d_in);
  rep.input_norm_bound_by_hidden_dim = gain * std::sqrt(n_tok * static_cast<double>(cfg.hidden_dim));
  for (const auto& ex : data) {
    rep.observed_input_norm = std::max(rep.observed_input_norm, rms_normalize(ex.tokens, gain).norm());
    rep.label_norm_max = std::max(rep.label_norm_max, ex.labels.norm());
    for (const auto& m : checkpoints)
      rep.residual_norm_max = std::max(rep.residual_norm_max, (forward(m, ex).output - ex.labels).norm());
  }

  std::vector<std::string> shared_failures;
  if (!(cfg.c > 0.0)) shared_failures.push_back("c must be positive");
  if (cfg.n_tokens != data.front().n_tokens()) shared_failures.push_back("configured N differs from the data");
  if (cfg.hidden_dim != static_cast<std::size_t>(checkpoints.front().hidden_dim()))
    shared_failures.push_back("configured D differs from the model");
  if (cfg.proxy_gap < 0.0 || cfg.curvature < 0.0 || cfg.step_radius < 0.0)
    shared_failures.push_back("bound constants must be non-negative");
  if (cfg.c > 0.0 && !(gain < rep.gain_threshold)) {
    shared_failures.push_back("gain " + std::to_string(gain) + " is not below the threshold " +
                              std::to_string(rep.gain_threshold));
  }
  for (std::size_t t = 0; t < checkpoints.size(); ++t) {
    const double norm = checkpoints[t].parameter_norm();
    rep.checkpoint_norms.push_back(norm);
    if (checkpoints[t].gain != gain) shared_failures.push_back("checkpoints use different gains");
    if (norm > cfg.c) {
      shared_failures.push_back("checkpoint " + std::to_string(t) + " has norm " + std::to_string(norm) +
                                " above c = " + std::to_string(cfg.c));
    }
  }
  if (!shared_failures.empty()) {
    rep.pointwise.skipped = rep.interval.skipped = true;
    rep.pointwise.failed_preconditions = shared_failures;
    rep.interval.failed_preconditions = shared_failures;
    return rep;
  }

  // Pointwise check at every checkpoint; the bound values feed the interval check.
  const std::size_t n = data.size();
  std::vector<std::vector<double>> bounds(checkpoints.size(), std::vector<double>(n * n, 0.0));
  for (std::size_t t = 0; t < checkpoints.size(); ++t) {
    const auto grads = all_gradients(checkpoints[t], data, threads);
    const auto chi = all_cross_blocks(checkpoints[t], data);
    for (const auto& g : grads) rep.max_gradient_norm = std::max(rep.max_gradient_norm, g.norm());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        PairViolation c{t, 0.0, i, j, (grads[i] - grads[j]).norm(), 0.0};
        c.bound = pointwise_gradient_bound((chi[i] - chi[j]).norm(), cfg);
        bounds[t][i * n + j] = c.bound;
        record(rep.pointwise, c);
      }
    }
  }
  for (std::size_t t = 0; t < checkpoints.size(); ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (bounds[t][i * n + j] < 2.0 * rep.max_gradient_norm) ++rep.nonvacuous_checks;

  if (checkpoints.size() < 2 || interpolation_points == 0) return rep;
  for (std::size_t t = 0; t + 1 < checkpoints.size(); ++t) {
    const Eigen::VectorXd a = flatten(checkpoints[t]);
    const Eigen::VectorXd b = flatten(checkpoints[t + 1]);
    const double length = (b - a).norm();
    if (length > cfg.step_radius) {
      rep.interval.failed_preconditions.push_back("segment " + std::to_string(t) + " has length " +
                                                  std::to_string(length) + " above delta = " +
                                                  std::to_string(cfg.step_radius));
      continue;
    }
    for (std::size_t k = 1; k <= interpolation_points; ++k) {
      const double pos = static_cast<double>(k) / static_cast<double>(interpolation_points + 1);
      const ToyModel mid = unflatten((1.0 - pos) * a + pos * b, checkpoints[t].input_dim(),
                                     checkpoints[t].hidden_dim(), gain);
      const auto grads = all_gradients(mid, data, threads);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          PairViolation c{t, pos, i, j, (grads[i] - grads[j]).norm(), 0.0};
          c.bound = interval_gradient_bound(bounds[t][i * n + j], bounds[t + 1][i * n + j], cfg);
          record(rep.interval, c);
        }
      }
    }
  }
  rep.interval.skipped = rep.interval.checks == 0;
  return rep;
}

namespace {

nlohmann::json check_json(const BoundCheck& c) {
  nlohmann::json v = nlohmann::json::array();
  for (const auto& p : c.violations) {
    v.push_back({{"segment", p.segment},
                 {"position", p.position},
                 {"i", p.i},
                 {"j", p.j},
                 {"distance", p.distance},
                 {"bound", p.bound}});
  }
  return {{"skipped", c.skipped},
          {"failed_preconditions", c.failed_preconditions},
          {"checks", c.checks},
          {"violation_count", c.violation_count},
          {"max_ratio", c.max_ratio},
          {"min_bound", c.min_bound},
          {"max_distance", c.max_distance},
          {"violations", std::move(v)}};
}

}  // namespace

nlohmann::json to_json(const BoundReport& r) {
  return {{"config",
           {{"c", r.config.c},
            {"proxy_gap", r.config.proxy_gap},
            {"curvature", r.config.curvature},
            {"step_radius", r.config.step_radius},
            {"n_tokens", r.config.n_tokens},
            {"hidden_dim", r.config.hidden_dim}}},
          {"gain", r.gain},
          {"gain_threshold", r.gain_threshold},
          {"checkpoint_norms", r.checkpoint_norms},
          {"n_examples", r.n_examples},
          {"pairs", r.pairs},
          {"interpolation_points", r.interpolation_points},
          {"max_gradient_norm", r.max_gradient_norm},
          {"nonvacuous_checks", r.nonvacuous_checks},
          {"input_norm",
           {{"normalized_over", "input_dim"},
            {"bound_g_sqrt_N_d", r.input_norm_bound_by_input_dim},
            {"bound_g_sqrt_N_D", r.input_norm_bound_by_hidden_dim},
            {"observed_max", r.observed_input_norm}}},
          {"label_norm_max", r.label_norm_max},
          {"residual_norm_max", r.residual_norm_max},
          {"pointwise", check_json(r.pointwise)},
          {"interval", check_json(r.interval)}};
}

}  // namespace xmas
