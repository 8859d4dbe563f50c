#include "support.hpp"

#include <gtest/gtest.h>

using namespace lorm;

namespace {

WearTable table(std::initializer_list<double> wear, std::size_t per_cut = 2) {
  WearTable t;
  int id = 1;
  std::size_t first = 1;
  for (double w : wear) {
    t.cuts.push_back({id++, w, first, first + per_cut - 1});
    first += per_cut;
  }
  return t;
}

ConfusionCounts counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  ConfusionCounts c;
  c.tp = tp;
  c.fp = fp;
  c.fn = fn;
  c.tn = tn;
  return c;
}

}  // namespace

TEST(Labels, StrictLimit) {
  const auto t = table({301.21, 300.0, 285.61}, 1);
  const std::vector<std::size_t> idx{1, 2, 3};
  const auto l = label_windows(t, idx, 300.0);
  EXPECT_TRUE(l[0]);
  EXPECT_FALSE(l[1]);
  EXPECT_FALSE(l[2]);
}

TEST(Metrics, WorkedExample) {
  const auto m = compute_metrics(counts(5, 1, 2, 12));
  EXPECT_NEAR(m.accuracy, 0.85, 1e-6);
  EXPECT_NEAR(m.precision, 0.833333, 1e-6);
  EXPECT_NEAR(m.recall, 0.714286, 1e-6);
  EXPECT_NEAR(m.f1, 0.769231, 1e-6);
  EXPECT_NEAR(m.fpr, 0.076923, 1e-6);
  EXPECT_FALSE(m.precision_undefined || m.recall_undefined || m.f1_undefined || m.fpr_undefined);
}

TEST(Metrics, AllCorrect) {
  std::vector<bool> y{true, false, true, false, false};
  const auto m = compute_metrics(y, y);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.fpr, 0.0);
  EXPECT_EQ(m.f1, 1.0);
}

TEST(Metrics, ZeroDenominatorsAreFlagged) {
  const auto m = compute_metrics(std::vector<bool>{false, false, false}, std::vector<bool>{true, true, false});
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_TRUE(m.precision_undefined);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_FALSE(m.recall_undefined);
  EXPECT_TRUE(m.f1_undefined);
  const auto empty = compute_metrics(counts(0, 0, 0, 0));
  EXPECT_TRUE(empty.accuracy_undefined && empty.fpr_undefined && empty.recall_undefined);
  EXPECT_THROW(compute_metrics(std::vector<bool>{true}, std::vector<bool>{}), Error);
}

TEST(Metrics, FormulaAndPermutationProperties) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<bool> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng() % 2;
      y[i] = rng() % 3 == 0;
    }
    const auto m = compute_metrics(p, y);
    const auto& c = m.counts;
    EXPECT_NEAR(m.accuracy, static_cast<double>(c.tp + c.tn) / static_cast<double>(n), 1e-12);
    if (!m.precision_undefined && !m.recall_undefined && m.precision + m.recall > 0)
      EXPECT_NEAR(m.f1, 2 * m.precision * m.recall / (m.precision + m.recall), 1e-15);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> p2(n), y2(n);
    for (std::size_t i = 0; i < n; ++i) {
      p2[i] = p[order[i]];
      y2[i] = y[order[i]];
    }
    const auto m2 = compute_metrics(p2, y2);
    EXPECT_EQ(m.accuracy, m2.accuracy);
    EXPECT_EQ(m.precision, m2.precision);
    EXPECT_EQ(m.recall, m2.recall);
    EXPECT_EQ(m.f1, m2.f1);
    EXPECT_EQ(m.fpr, m2.fpr);
  }
}

TEST(Deviation, WorkedExamples) {
  const auto t = table({250.0, 285.61, 300.0, 335.18}, 3);
  EXPECT_NEAR(*detection_deviation(10, t, 300.0), 35.18, 1e-9);
  EXPECT_NEAR(*detection_deviation(4, t, 300.0), 14.39, 1e-9);
  EXPECT_EQ(*detection_deviation(7, t, 300.0), 0.0);
  EXPECT_FALSE(detection_deviation(std::nullopt, t, 300.0).has_value());
}

TEST(EvaluateStream, SkipsBufferWindows) {
  const auto t = table({200, 250, 310, 320}, 2);
  std::vector<HiRow> rows;
  for (std::size_t k = 1; k <= 8; ++k) {
    HiRow r;
    r.window_index = k;
    if (k > 2) r.hi = static_cast<double>(k);
    r.alarm = k >= 6;
    rows.push_back(r);
  }
  const auto rep = evaluate_stream(rows, t, 300.0);
  EXPECT_EQ(rep.excluded_buffer_windows, 2u);
  EXPECT_EQ(rep.metrics.counts.total(), 6u);
  EXPECT_EQ(rep.metrics.counts.tp, 3u);
  EXPECT_EQ(rep.metrics.counts.fn, 1u);
  EXPECT_EQ(rep.metrics.counts.tn, 2u);
  EXPECT_EQ(*rep.first_alarm_window, 6u);
  EXPECT_NEAR(*rep.deviation_um, 10.0, 1e-12);
  const auto j = to_json(rep);
  EXPECT_EQ(j["tp"], 3);
  EXPECT_NEAR(j["error_um"].get<double>(), 10.0, 1e-12);
  const std::string txt = metrics_table(rep);
  EXPECT_NE(txt.find("F1"), std::string::npos);
  EXPECT_NE(txt.find("Error_um"), std::string::npos);
}

TEST(Calibrate, ClosestCutWins) {
  WearTable t;
  for (int c = 1; c <= 30; ++c)
    t.cuts.push_back({c, c == 28 ? 301.21 : 150.0 + 4.0 * c, static_cast<std::size_t>(c), static_cast<std::size_t>(c)});
  std::map<int, std::vector<double>> his;
  for (int c = 1; c <= 30; ++c) his[c] = {0.01 * c, 0.01 * c + 0.02};
  const auto cal = calibrate_threshold(his, t, 300.0);
  EXPECT_EQ(cal.cut_id, 28);
  EXPECT_NEAR(cal.tau, 0.29, 1e-12);
}

TEST(Calibrate, SingleCutAndTies) {
  WearTable one;
  one.cuts.push_back({7, 120.0, 1, 3});
  EXPECT_EQ(calibrate_threshold({{7, {0.4}}}, one, 300.0).cut_id, 7);
  EXPECT_THROW(calibrate_threshold({}, one, 300.0), Error);

  WearTable tie;
  tie.cuts.push_back({1, 290.0, 1, 1});
  tie.cuts.push_back({2, 310.0, 2, 2});
  EXPECT_EQ(calibrate_threshold({{1, {0.1}}, {2, {0.2}}}, tie, 300.0).cut_id, 1);
}

TEST(WearCsv, RoundTrip) {
  const auto t = table({150, 212.5, 400}, 4);
  std::ostringstream os;
  write_wear_csv(os, t);
  std::istringstream in(os.str());
  const auto back = read_wear_csv(in);
  ASSERT_EQ(back.cuts.size(), 3u);
  EXPECT_EQ(back.cuts[1].wear_um, 212.5);
  EXPECT_EQ(back.cuts[2].first_window, 9u);
  EXPECT_EQ(back.cut_of_window(12).cut_id, 3);
  EXPECT_THROW(back.cut_of_window(13), Error);
}
