#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace lorm;
using lorm::testing::random_matrix;

TEST(Patches, ExactDivision) {
  EXPECT_EQ(PatchConfig::for_context(320, 16, 1).patches_per_channel, 20u);
  EXPECT_EQ(patch_channel(Vector::LinSpaced(320, 1, 320), 16).rows(), 20);
}

TEST(Patches, ZeroPaddedTail) {
  const Matrix p = patch_channel(Vector::LinSpaced(10, 1, 10), 4);
  ASSERT_EQ(p.rows(), 3);
  EXPECT_EQ(p(2, 0), 9);
  EXPECT_EQ(p(2, 1), 10);
  EXPECT_EQ(p(2, 2), 0);
  EXPECT_EQ(p(2, 3), 0);
  EXPECT_EQ(p(0, 0), 1);
  EXPECT_EQ(p(1, 3), 8);
}

TEST(Patches, SingleFullPatch) {
  const Vector x = Vector::LinSpaced(7, -3, 3);
  const Matrix p = patch_channel(x, 7);
  ASSERT_EQ(p.rows(), 1);
  for (int i = 0; i < 7; ++i) EXPECT_EQ(p(0, i), x[i]);
}

TEST(Mcps, ChannelMajorOrder) {
  Matrix ctx(4, 2);
  ctx << 1, 10, 2, 20, 3, 30, 4, 40;
  const auto seq = build_mcps(ctx, 2);
  ASSERT_EQ(seq.rows.rows(), 4);
  Matrix expected(4, 2);
  expected << 1, 2, 3, 4, 10, 20, 30, 40;
  EXPECT_EQ(seq.rows, expected);
}

TEST(Mcps, SingleChannelIsPatchList) {
  const Matrix ctx = random_matrix(50, 1, 3);
  EXPECT_EQ(build_mcps(ctx, 8).rows, patch_channel(ctx.col(0), 8));
}

TEST(Mcps, RoundTrip320x3) {
  const Matrix ctx = random_matrix(320, 3, 6);
  const auto seq = build_mcps(ctx, 16);
  EXPECT_EQ(seq.rows.rows(), 60);
  EXPECT_EQ(unflatten_mcps(seq, 320), ctx);
}

TEST(Mcps, RandomRoundTrips) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 200; ++i) {
    const auto S = static_cast<Eigen::Index>(1 + rng() % 400);
    const auto C = static_cast<Eigen::Index>(1 + rng() % 6);
    const std::size_t h = 1 + rng() % 40;
    const Matrix ctx = random_matrix(S, C, rng());
    const auto seq = build_mcps(ctx, h);
    const std::size_t N = (static_cast<std::size_t>(S) + h - 1) / h;
    ASSERT_EQ(static_cast<std::size_t>(seq.rows.rows()), N * static_cast<std::size_t>(C));
    ASSERT_EQ(unflatten_mcps(seq, static_cast<std::size_t>(S)), ctx) << "S=" << S << " C=" << C << " h=" << h;

    std::vector<double> a(ctx.data(), ctx.data() + ctx.size()), b;
    for (Eigen::Index r = 0; r < seq.rows.rows(); ++r)
      for (Eigen::Index j = 0; j < seq.rows.cols(); ++j) {
        const std::size_t t = (static_cast<std::size_t>(r) % N) * h + static_cast<std::size_t>(j);
        if (t < static_cast<std::size_t>(S)) b.push_back(seq.rows(r, j));
        else EXPECT_EQ(seq.rows(r, j), 0.0);
      }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
}

TEST(Mcps, ChannelSwapPermutesBlocks) {
  const Matrix ctx = random_matrix(37, 4, 1);
  Matrix swapped = ctx;
  swapped.col(1).swap(swapped.col(3));
  const auto a = build_mcps(ctx, 5), b = build_mcps(swapped, 5);
  const Eigen::Index N = 8;
  EXPECT_EQ(b.rows.middleRows(0, N), a.rows.middleRows(0, N));
  EXPECT_EQ(b.rows.middleRows(N, N), a.rows.middleRows(3 * N, N));
  EXPECT_EQ(b.rows.middleRows(2 * N, N), a.rows.middleRows(2 * N, N));
  EXPECT_EQ(b.rows.middleRows(3 * N, N), a.rows.middleRows(N, N));
}
