#include "xmas/svd_align.hpp"

#include "xmas/errors.hpp"
#include "xmas/random.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <string>

namespace xmas {

namespace {

// Gram matrices at or below this order go straight to a dense eigensolver.
constexpr Eigen::Index kDenseGramLimit = 32;
constexpr int kMaxSubspaceIterations = 500;
constexpr double kResidualTolerance = 1e-12;
constexpr std::uint64_t kStartSeed = 0x9e3779b97f4a7c15ull;

std::vector<double> dense_top_eigenvalues(const Eigen::MatrixXd& gram, std::size_t k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
  const auto& ev = solver.eigenvalues();  // ascending
  std::vector<double> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(ev(ev.size() - 1 - static_cast<Eigen::Index>(i)));
  return out;
}

Eigen::MatrixXd orthonormal_columns(const Eigen::MatrixXd& z) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
  return qr.householderQ() * Eigen::MatrixXd::Identity(z.rows(), z.cols());
}

// Block subspace iteration with Rayleigh-Ritz extraction. Returns false if the
// top-k Ritz pairs did not reach the residual tolerance.
bool subspace_top_eigenvalues(const Eigen::MatrixXd& gram, std::size_t k, std::vector<double>& out) {
  const Eigen::Index p = gram.rows();
  const Eigen::Index block = std::min<Eigen::Index>(p, 2 * static_cast<Eigen::Index>(k) + 8);

  Rng rng(kStartSeed);
  Eigen::MatrixXd start(p, block);
  for (Eigen::Index j = 0; j < block; ++j)
    for (Eigen::Index i = 0; i < p; ++i) start(i, j) = rng.normal();
  Eigen::MatrixXd basis = orthonormal_columns(start);

  const double scale = std::max(gram.diagonal().maxCoeff(), 0.0);
  if (scale == 0.0) {
    out.assign(k, 0.0);
    return true;
  }

  for (int it = 0; it < kMaxSubspaceIterations; ++it) {
    const Eigen::MatrixXd image = gram * basis;
    const Eigen::MatrixXd projected = basis.transpose() * image;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz(0.5 * (projected + projected.transpose()));
    const auto& values = ritz.eigenvalues();
    const auto& vectors = ritz.eigenvectors();

    bool converged = true;
    const double lead = std::max(values(block - 1), 0.0);
    for (std::size_t j = 0; j < k && converged; ++j) {
      const Eigen::Index col = block - 1 - static_cast<Eigen::Index>(j);
      const Eigen::VectorXd v = basis * vectors.col(col);
      const double residual = (image * vectors.col(col) - values(col) * v).norm();
      converged = residual <= kResidualTolerance * lead;
    }
    if (converged) {
      out.clear();
      for (std::size_t j = 0; j < k; ++j) out.push_back(values(block - 1 - static_cast<Eigen::Index>(j)));
      return true;
    }
    basis = orthonormal_columns(image);
  }
  return false;
}

}  // namespace

CrossModalMatrix extract_cross_modal_block(const Eigen::MatrixXd& attention, std::size_t n_image,
                                           std::size_t n_text) {
  const auto n = static_cast<std::size_t>(attention.rows());
  if (attention.rows() != attention.cols() || n != n_image + n_text) {
    throw ShapeError("attention matrix is " + std::to_string(attention.rows()) + "x" +
                     std::to_string(attention.cols()) + ", expected square of order n_image + n_text = " +
                     std::to_string(n_image + n_text));
  }
  return attention.bottomLeftCorner(static_cast<Eigen::Index>(n_text), static_cast<Eigen::Index>(n_image));
}

CrossModalMatrix sum_layers(std::span<const CrossModalMatrix> blocks) {
  if (blocks.empty()) throw ShapeError("sum_layers needs at least one block");
  CrossModalMatrix total = blocks.front();
  for (std::size_t l = 1; l < blocks.size(); ++l) {
    if (blocks[l].rows() != total.rows() || blocks[l].cols() != total.cols()) {
      throw ShapeError("layer " + std::to_string(l) + " block is " + std::to_string(blocks[l].rows()) + "x" +
                       std::to_string(blocks[l].cols()) + ", expected " + std::to_string(total.rows()) + "x" +
                       std::to_string(total.cols()));
    }
    total += blocks[l];
  }
  return total;
}

std::vector<double> top_k_singular_values(const Eigen::MatrixXd& m, std::size_t k) {
  if (k == 0) throw ArgumentError("top_k_singular_values requires k >= 1");
  if (!m.allFinite()) throw NumericError("matrix has non-finite entries");
  const auto p = static_cast<std::size_t>(std::min(m.rows(), m.cols()));
  const std::size_t kk = std::min(k, p);
  if (kk == 0) return {};

  const Eigen::MatrixXd gram = m.rows() <= m.cols() ? Eigen::MatrixXd(m * m.transpose())
                                                    : Eigen::MatrixXd(m.transpose() * m);
  std::vector<double> eig;
  if (gram.rows() <= kDenseGramLimit || !subspace_top_eigenvalues(gram, kk, eig)) {
    eig = dense_top_eigenvalues(gram, kk);
  }
  std::vector<double> sv(kk);
  std::transform(eig.begin(), eig.end(), sv.begin(), [](double l) { return std::sqrt(std::max(l, 0.0)); });
  std::sort(sv.begin(), sv.end(), std::greater<>());
  return sv;
}

AlignmentScore alignment_score(const Eigen::MatrixXd& m, std::size_t k) {
  const auto sv = top_k_singular_values(m, k);
  AlignmentScore score;
  score.k_used = sv.size();
  for (double s : sv) score.sigma += s;
  return score;
}

}  // namespace xmas
