#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

namespace xmas {

/// Text-query rows attending to image-key columns: an n_T x n_I block.
using CrossModalMatrix = Eigen::MatrixXd;

inline constexpr std::size_t kDefaultTopK = 5;

struct AlignmentScore {
  double sigma = 0.0;
  std::size_t k_used = 0;
};

/// Bottom-left block of an N x N attention matrix whose first `n_image`
/// tokens are image tokens: rows [n_image, N), columns [0, n_image).
CrossModalMatrix extract_cross_modal_block(const Eigen::MatrixXd& attention, std::size_t n_image,
                                           std::size_t n_text);

/// Element-wise sum of per-layer blocks, accumulated in sequence order.
CrossModalMatrix sum_layers(std::span<const CrossModalMatrix> blocks);

/// The min(k, min(rows, cols)) largest singular values, descending.
std::vector<double> top_k_singular_values(const Eigen::MatrixXd& m, std::size_t k);

/// Sum of the top-k singular values. k_used records how many existed.
AlignmentScore alignment_score(const Eigen::MatrixXd& m, std::size_t k = kDefaultTopK);

}  // namespace xmas
