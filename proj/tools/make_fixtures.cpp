// Regenerates the binary fixtures under tests/fixtures:
//   xmas_make_fixtures <dir>

#include "xmas/attn_store.hpp"
#include "xmas/random.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <numeric>

namespace {

// Layer-summed blocks: each of `layers` rows is a probability vector over all
// N = n_text + n_image keys, of which the image part is kept.
xmas::AttentionDump structured_dump(std::size_t n, std::uint32_t checkpoints, std::uint32_t layers,
                                    Eigen::Index n_text, Eigen::Index n_image, std::uint64_t seed) {
  xmas::Rng rng(seed);
  xmas::AttentionDump dump;
  dump.layer_count = layers;
  dump.n_checkpoints = checkpoints;
  std::vector<std::uint64_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  const Eigen::Index keys = n_text + n_image;
  for (std::uint64_t id : ids) {
    xmas::AttentionRecord rec;
    rec.example_id = id;
    const double drift = rng.uniform(0.0, 1.0);
    for (std::uint32_t t = 0; t < checkpoints; ++t) {
      Eigen::MatrixXd block = Eigen::MatrixXd::Zero(n_text, n_image);
      for (std::uint32_t l = 0; l < layers; ++l) {
        for (Eigen::Index r = 0; r < n_text; ++r) {
          Eigen::RowVectorXd logits(keys);
          for (Eigen::Index q = 0; q < keys; ++q) logits(q) = rng.normal() + drift * t * (q == 0 ? 1.0 : 0.0);
          Eigen::RowVectorXd p = (logits.array() - logits.maxCoeff()).exp().matrix();
          p /= p.sum();
          block.row(r) += p.head(n_image);
        }
      }
      rec.checkpoints.push_back(block);
    }
    dump.records.push_back(std::move(rec));
  }
  return dump;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: xmas_make_fixtures <dir>\n";
    return 4;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);
  xmas::save_attention_dump(structured_dump(96, 7, 2, 3, 4, 20240611), dir / "small.xmad");

  xmas::AttentionDump zero;
  zero.layer_count = 1;
  zero.n_checkpoints = 7;
  for (std::uint64_t i = 0; i < 5; ++i)
    zero.records.push_back({i, std::vector<Eigen::MatrixXd>(7, Eigen::MatrixXd::Zero(2, 3))});
  xmas::save_attention_dump(zero, dir / "zero.xmad");
  return 0;
}
