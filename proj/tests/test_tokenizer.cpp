#include "support.hpp"

#include <gtest/gtest.h>

using namespace lorm;
using lorm::testing::random_matrix;

namespace {

/// Plain Lloyd in long double, run until assignments stop changing.
double oracle_lloyd(const Matrix& pts, const Matrix& seeds) {
  const auto n = static_cast<std::size_t>(pts.rows()), K = static_cast<std::size_t>(seeds.rows()),
             D = static_cast<std::size_t>(pts.cols());
  std::vector<std::vector<long double>> c(K, std::vector<long double>(D));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < D; ++j) c[k][j] = seeds(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
  std::vector<std::size_t> a(n, K);
  auto dist = [&](std::size_t i, std::size_t k) {
    long double s = 0;
    for (std::size_t j = 0; j < D; ++j) {
      const long double d = pts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - c[k][j];
      s += d * d;
    }
    return s;
  };
  for (int it = 0; it < 1000; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < K; ++k)
        if (dist(i, k) < dist(i, best)) best = k;
      if (best != a[i]) changed = true;
      a[i] = best;
    }
    if (!changed) break;
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<long double> sum(D, 0);
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (a[i] == k) {
          ++cnt;
          for (std::size_t j = 0; j < D; ++j) sum[j] += pts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
      if (cnt)
        for (std::size_t j = 0; j < D; ++j) c[k][j] = sum[j] / cnt;
    }
  }
  long double inertia = 0;
  for (std::size_t i = 0; i < n; ++i) inertia += dist(i, a[i]);
  return static_cast<double>(inertia);
}

Matrix points1d(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST(KMeans, TwoObviousClusters) {
  const auto r = kmeans(points1d({0, 0, 10, 10}), 2, 3);
  std::vector<double> c{r.centroids(0, 0), r.centroids(1, 0)};
  std::sort(c.begin(), c.end());
  EXPECT_EQ(c[0], 0.0);
  EXPECT_EQ(c[1], 10.0);
  EXPECT_EQ(r.inertia(), 0.0);
}

TEST(KMeans, SingleClusterIsMean) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix p = random_matrix(5 + static_cast<Eigen::Index>(seed) * 6, 3, seed, 4.0);
    const auto r = kmeans(p, 1, seed);
    const RowVector mean = p.colwise().mean();
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(r.centroids(0, j), mean[j], 1e-12);
  }
}

TEST(KMeans, MatchesIndependentLloyd) {
  const Matrix p = random_matrix(64, 2, 42);
  const Matrix seeds = kmeanspp_seeds(p, 3, 7);
  EXPECT_NEAR(lloyd(p, seeds).inertia(), oracle_lloyd(p, seeds), 1e-9);
}

TEST(KMeans, MatchesIndependentLloydSweep) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<Eigen::Index>(4 + rng() % 61);
    const std::size_t K = 1 + rng() % 4;
    const Matrix p = random_matrix(n, 1 + static_cast<Eigen::Index>(rng() % 3), rng());
    const Matrix seeds = kmeanspp_seeds(p, K, rng());
    EXPECT_NEAR(lloyd(p, seeds).inertia(), oracle_lloyd(p, seeds), 1e-9) << "trial " << trial;
  }
}

TEST(KMeans, InertiaNonIncreasing) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = kmeans(random_matrix(200, 2, seed), 6, seed);
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
      EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] * (1 + 1e-15));
  }
}

TEST(KMeans, ZeroInertiaWhenKEqualsDistinctPoints) {
  Matrix p(9, 2);
  p << 0, 0, 1, 1, 2, 2, 0, 0, 1, 1, 2, 2, 5, 5, 5, 5, 0, 0;
  EXPECT_EQ(kmeans(p, 4, 1).inertia(), 0.0);
}

TEST(KMeans, DeterministicBytes) {
  const Matrix p = random_matrix(300, 1, 8);
  const auto a = fit_codebook(p, 10, 123).centroids;
  const auto b = fit_codebook(p, 10, 123).centroids;
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())), 0);
}

TEST(KMeans, InsufficientSamples) {
  EXPECT_THROW(kmeans(points1d({1, 1, 1, 2}), 3, 0), Error);
  EXPECT_THROW(kmeans(points1d({1, 2}), 3, 0), Error);
}

TEST(AssignToken, Examples) {
  Codebook cb;
  cb.centroids = Matrix(2, 2);
  cb.centroids << 0, 0, 3, 3;
  RowVector x(2);
  x << 1, 1;
  EXPECT_EQ(assign_token(x, cb), 0);
  x << 3, 3;
  EXPECT_EQ(assign_token(x, cb), 1);
  x << 1.5, 1.5;
  EXPECT_EQ(assign_token(x, cb), 0);
}

TEST(AssignToken, CentroidMapsToOwnIndex) {
  const auto cb = fit_codebook(random_matrix(500, 2, 77), 10, 1);
  for (Eigen::Index k = 0; k < 10; ++k) EXPECT_EQ(assign_token(cb.centroids.row(k), cb), k);
}

TEST(Codebooks, FitOnTargetsPerChannel) {
  std::vector<SignalWindow> w;
  for (int i = 0; i < 40; ++i) w.push_back({random_matrix(5, 2, static_cast<std::uint64_t>(i)), 0});
  const auto set = fit_codebooks(w, 4, 3, 9, {"x", "y"});
  ASSERT_EQ(set.channels(), 2u);
  EXPECT_EQ(set.target_dim, 1u);
  EXPECT_EQ(set.codebooks[1].name, "y");
  Matrix col1(40, 1);
  for (int i = 0; i < 40; ++i) col1(i, 0) = w[static_cast<std::size_t>(i)].data(4, 1);
  EXPECT_EQ(set.codebooks[1].centroids, fit_codebook(col1, 3, 10).centroids);
  const auto tokens = tokenize_window(w[0].data.bottomRows(1), set);
  ASSERT_EQ(tokens.size(), 2u);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(tokens[c], assign_token(w[0].data.bottomRows(1).col(static_cast<Eigen::Index>(c)).transpose(), set.codebooks[c]));
}

TEST(Codebooks, JsonRoundTripIsBitExact) {
  std::vector<SignalWindow> w;
  for (int i = 0; i < 30; ++i) w.push_back({random_matrix(3, 3, static_cast<std::uint64_t>(i) + 100), 0});
  const auto set = fit_codebooks(w, 1, 4, 2);
  const auto back = codebooks_from_json(nlohmann::json::parse(codebooks_to_string(set)));
  ASSERT_EQ(back.channels(), 3u);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(back.codebooks[c].centroids, set.codebooks[c].centroids);
  EXPECT_EQ(codebook_hash(back), codebook_hash(set));
  EXPECT_THROW(codebooks_from_json(nlohmann::json::parse(R"({"version": 9})")), Error);
}
