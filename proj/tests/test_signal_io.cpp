#include "support.hpp"

#include <gtest/gtest.h>

using namespace lorm;
using lorm::testing::random_series;

namespace {

Matrix column(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST(ChannelStats, ConstantAndZeroColumns) {
  auto s = compute_channel_stats(column({5, 5, 5}));
  EXPECT_EQ(s.mean[0], 5.0);
  EXPECT_EQ(s.std[0], 0.0);
  s = compute_channel_stats(column({0, 0, 0}));
  EXPECT_EQ(s.mean[0], 0.0);
  EXPECT_EQ(s.std[0], 0.0);
}

TEST(ChannelStats, PopulationStd) {
  const auto s = compute_channel_stats(column({1, 2, 3}));
  EXPECT_DOUBLE_EQ(s.mean[0], 2.0);
  EXPECT_NEAR(s.std[0], std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(s.std[0], 0.81650, 1e-5);
}

TEST(ChannelStats, EmptyInputFails) {
  EXPECT_THROW(compute_channel_stats(Matrix(0, 2)), Error);
  EXPECT_THROW(compute_channel_stats(std::span<const SignalWindow>{}), Error);
}

TEST(ChannelStats, WindowsPoolAllSamples) {
  const auto s = random_series(963, 2, 4);
  const auto wins = segment_windows(s, {321, 320, 321});
  const auto a = compute_channel_stats(std::span<const SignalWindow>(wins));
  const auto b = compute_channel_stats(s.samples);
  for (int c = 0; c < 2; ++c) {
    EXPECT_NEAR(a.mean[c], b.mean[c], 1e-12);
    EXPECT_NEAR(a.std[c], b.std[c], 1e-12);
  }
}

TEST(Normalize, ConstantChannelMapsToZero) {
  ChannelStats st{Vector::Constant(1, 2.0), Vector::Zero(1), 1e-8};
  const Matrix out = normalize_samples(column({2, 2, 2}), st);
  EXPECT_TRUE((out.array() == 0.0).all());
}

TEST(Normalize, NearIdentity) {
  ChannelStats st{Vector::Zero(1), Vector::Ones(1), 1e-8};
  const Matrix x = column({1.5, -3.0, 7.25});
  const Matrix out = normalize_samples(x, st);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(out(i, 0), x(i, 0) / (1.0 + 1e-8));
}

TEST(Normalize, ElementwiseOracle) {
  const auto s = random_series(100, 3, 11);
  const auto st = compute_channel_stats(s.samples);
  const Matrix out = normalize_samples(s.samples, st);
  for (int c = 0; c < 3; ++c) {
    long double m = 0;
    for (int t = 0; t < 100; ++t) m += s.samples(t, c);
    m /= 100;
    long double v = 0;
    for (int t = 0; t < 100; ++t) v += (s.samples(t, c) - m) * (s.samples(t, c) - m);
    const long double sd = std::sqrt(v / 100);
    for (int t = 0; t < 100; ++t)
      EXPECT_NEAR(out(t, c), static_cast<double>((s.samples(t, c) - m) / (sd + 1e-8L)), 1e-12);
  }
}

TEST(Normalize, RoundTripProperty) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = random_series(50 + static_cast<Eigen::Index>(seed), 3, seed);
    s.samples.col(1).array() = s.samples.col(1).array() * 1e3 + 40.0;
    const auto st = compute_channel_stats(s);
    const auto n = normalize_series(s, st);
    const Matrix back = denormalize_samples(n.samples, st);
    for (Eigen::Index i = 0; i < back.size(); ++i) {
      const double x = s.samples.data()[i];
      EXPECT_LE(std::abs(back.data()[i] - x), 1e-9 * std::max(1.0, std::abs(x)));
    }
    const auto again = compute_channel_stats(n.samples);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(again.mean[c], 0.0, 1e-9);
  }
}

TEST(Segment, ExactTiling) {
  const auto s = random_series(963, 1, 1);
  const auto w = segment_windows(s, {321, 320, 321});
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0].start_index, 0u);
  EXPECT_EQ(w[1].start_index, 321u);
  EXPECT_EQ(w[2].start_index, 642u);
  EXPECT_EQ(w[2].data(320, 0), s.samples(962, 0));
}

TEST(Segment, TooShortAndStrided) {
  EXPECT_TRUE(segment_windows(random_series(320, 1, 1), {321, 320, 321}).empty());
  const auto w = segment_windows(random_series(10, 1, 1), {3, 2, 2});
  ASSERT_EQ(w.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(w[k].start_index, 2 * k);
}

TEST(Segment, CountProperty) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const std::size_t W = 2 + rng() % 30, S = 1 + rng() % (W - 1), stride = 1 + rng() % 40, T = W + rng() % 300;
    const auto w = segment_windows(random_series(static_cast<Eigen::Index>(T), 1, 0), {W, S, stride});
    EXPECT_EQ(w.size(), (T - W) / stride + 1);
  }
}

TEST(Split, ShapesAndExample) {
  SignalWindow w{random_series(321, 3, 2).samples, 0};
  auto p = split_context_target(w, 320);
  EXPECT_EQ(p.context.rows(), 320);
  EXPECT_EQ(p.context.cols(), 3);
  EXPECT_EQ(p.target.rows(), 1);

  SignalWindow abcd{Matrix(4, 1), 0};
  abcd.data << 1, 2, 3, 4;
  p = split_context_target(abcd, 2);
  EXPECT_EQ(p.context(0, 0), 1);
  EXPECT_EQ(p.context(1, 0), 2);
  EXPECT_EQ(p.target(0, 0), 3);
  EXPECT_EQ(p.target(1, 0), 4);
  EXPECT_THROW(split_context_target(abcd, 4), Error);
  EXPECT_THROW(split_context_target(abcd, 0), Error);
}

TEST(Split, ConcatenationRoundTrip) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SignalWindow w{random_series(40, 2, seed).samples, 0};
    const auto p = split_context_target(w, 10 + seed);
    Matrix stacked(40, 2);
    stacked << p.context, p.target;
    EXPECT_EQ(stacked, w.data);
  }
}

TEST(TrainValidation, DeterministicPartition) {
  const auto w = segment_windows(random_series(1000, 1, 9), {10, 9, 10});
  const auto [a, b] = split_train_validation(w, 0.8, 5);
  const auto [c, d] = split_train_validation(w, 0.8, 5);
  EXPECT_EQ(a.size(), 80u);
  EXPECT_EQ(b.size(), 20u);
  ASSERT_EQ(a.size(), c.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].start_index, c[i].start_index);
  std::set<std::size_t> all;
  for (const auto& x : a) all.insert(x.start_index);
  for (const auto& x : b) all.insert(x.start_index);
  EXPECT_EQ(all.size(), 100u);
}

TEST(Csv, RoundTrip) {
  const auto s = random_series(57, 3, 21);
  std::istringstream in(lorm::testing::series_csv(s));
  const auto r = read_signal_csv(in, 1000.0);
  EXPECT_EQ(r.channel_names, s.channel_names);
  EXPECT_EQ(r.samples, s.samples);
  EXPECT_EQ(r.sample_rate_hz, 1000.0);
}

TEST(Csv, MalformedRecordNamesRecord) {
  std::istringstream in("a,b\n1,2\n3,x\n");
  try {
    read_signal_csv(in, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos) << e.what();
  }
  std::istringstream wrong("a,b\n1,2\n3\n");
  EXPECT_THROW(read_signal_csv(wrong, 1.0), Error);
}
