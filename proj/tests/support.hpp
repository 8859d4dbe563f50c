#pragma once

#include "lorm/lorm.hpp"

#include <random>

namespace lorm::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline MultiChannelSeries random_series(Eigen::Index T, Eigen::Index C, std::uint64_t seed) {
  MultiChannelSeries s;
  s.samples = random_matrix(T, C, seed);
  for (Eigen::Index c = 0; c < C; ++c) s.channel_names.push_back("s" + std::to_string(c));
  return s;
}

inline BackboneConfig tiny_backbone(std::size_t C = 2, std::size_t N = 3, std::size_t K = 4) {
  BackboneConfig b;
  b.hidden_dim = 8;
  b.num_layers = 1;
  b.num_heads = 2;
  b.ffn_dim = 16;
  b.K = K;
  b.C = C;
  b.patch_len = 4;
  b.max_seq_len = N * C;
  return b;
}

inline std::string series_csv(const MultiChannelSeries& s) {
  std::ostringstream os;
  write_signal_csv(os, s);
  return os.str();
}

}  // namespace lorm::testing
