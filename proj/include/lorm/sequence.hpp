#pragma once

#include "lorm/common.hpp"

#include <vector>

namespace lorm {

struct PatchConfig {
  std::size_t patch_len = 16;
  std::size_t patches_per_channel = 0;
  std::size_t channel_count = 0;

  std::size_t sequence_length() const { return patches_per_channel * channel_count; }

  static PatchConfig for_context(std::size_t context_len, std::size_t patch_len, std::size_t channels) {
    if (patch_len == 0) throw ConfigError("patch.patch_len must be >= 1");
    if (context_len == 0) throw ConfigError("context length must be >= 1");
    return PatchConfig{patch_len, (context_len + patch_len - 1) / patch_len, channels};
  }
};

/// N*C x h matrix; channel c occupies rows c*N .. c*N + N - 1 in temporal order.
struct PatchSequence {
  Matrix rows;
  std::size_t patches_per_channel = 0;
  std::size_t channels = 0;
};

/// N = ceil(S / h) patches; the last one is right-padded with zeros when h does not divide S.
inline Matrix patch_channel(const Eigen::Ref<const Vector>& column, std::size_t h) {
  if (h == 0) throw ConfigError("patch_channel: patch length must be >= 1");
  const auto S = static_cast<std::size_t>(column.size());
  const std::size_t N = (S + h - 1) / h;
  Matrix patches = Matrix::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(h));
  for (std::size_t t = 0; t < S; ++t)
    patches(static_cast<Eigen::Index>(t / h), static_cast<Eigen::Index>(t % h)) = column[static_cast<Eigen::Index>(t)];
  return patches;
}

/// Multi-sensor context patch sequence in channel-major order.
inline PatchSequence build_mcps(const Matrix& context, std::size_t h) {
  if (h == 0) throw ConfigError("build_mcps: patch length must be >= 1");
  const auto S = static_cast<std::size_t>(context.rows());
  const auto C = static_cast<std::size_t>(context.cols());
  const std::size_t N = (S + h - 1) / h;
  PatchSequence seq;
  seq.patches_per_channel = N;
  seq.channels = C;
  seq.rows = Matrix::Zero(static_cast<Eigen::Index>(N * C), static_cast<Eigen::Index>(h));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < S; ++t)
      seq.rows(static_cast<Eigen::Index>(c * N + t / h), static_cast<Eigen::Index>(t % h)) =
          context(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c));
  return seq;
}

/// Inverse of build_mcps: recovers the S x C context, dropping pad entries.
inline Matrix unflatten_mcps(const PatchSequence& seq, std::size_t context_len) {
  const auto h = static_cast<std::size_t>(seq.rows.cols());
  const std::size_t N = seq.patches_per_channel;
  if (context_len > N * h || context_len + h <= N * h)
    throw Error("unflatten_mcps: context length inconsistent with patch layout");
  Matrix ctx(static_cast<Eigen::Index>(context_len), static_cast<Eigen::Index>(seq.channels));
  for (std::size_t c = 0; c < seq.channels; ++c)
    for (std::size_t t = 0; t < context_len; ++t)
      ctx(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) =
          seq.rows(static_cast<Eigen::Index>(c * N + t / h), static_cast<Eigen::Index>(t % h));
  return ctx;
}

}  // namespace lorm
