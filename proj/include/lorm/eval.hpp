#pragma once

#include "lorm/monitor.hpp"

#include <iomanip>
#include <map>
#include <sstream>

namespace lorm {

struct WearCut {
  int cut_id = 0;
  double wear_um = 0.0;
  std::size_t first_window = 0;  // 1-based, inclusive
  std::size_t last_window = 0;   // 1-based, inclusive
};

/// Ordered cuts with measured wear and the windows each one covers.
struct WearTable {
  std::vector<WearCut> cuts;

  std::optional<std::size_t> position_of_window(std::size_t window_index) const {
    for (std::size_t i = 0; i < cuts.size(); ++i)
      if (window_index >= cuts[i].first_window && window_index <= cuts[i].last_window) return i;
    return std::nullopt;
  }

  const WearCut& cut_of_window(std::size_t window_index) const {
    const auto i = position_of_window(window_index);
    if (!i) throw Error("wear table: window " + std::to_string(window_index) + " belongs to no cut");
    return cuts[*i];
  }

  const WearCut* find_cut(int id) const {
    for (const auto& c : cuts)
      if (c.cut_id == id) return &c;
    return nullptr;
  }

  void validate() const {
    if (cuts.empty()) throw Error("wear table: empty");
    for (const auto& c : cuts) {
      if (!(c.wear_um >= 0.0)) throw Error("wear table: negative wear at cut " + std::to_string(c.cut_id));
      if (c.first_window > c.last_window) throw Error("wear table: empty window range at cut " + std::to_string(c.cut_id));
    }
  }
};

inline void write_wear_csv(std::ostream& out, const WearTable& t) {
  out << "cut_id,wear_um,first_window,last_window\n";
  for (const auto& c : t.cuts)
    out << c.cut_id << ',' << format_double(c.wear_um) << ',' << c.first_window << ',' << c.last_window << '\n';
}

inline WearTable read_wear_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("wear csv: missing header");
  WearTable t;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++record;
    const auto f = split_fields(line);
    if (f.size() != 4) throw Error("wear csv: record " + std::to_string(record) + " needs 4 fields");
    double id, wear, first, last;
    if (!parse_double(f[0], id) || !parse_double(f[1], wear) || !parse_double(f[2], first) || !parse_double(f[3], last))
      throw Error("wear csv: record " + std::to_string(record) + " is not numeric");
    t.cuts.push_back(WearCut{static_cast<int>(id), wear, static_cast<std::size_t>(first), static_cast<std::size_t>(last)});
  }
  t.validate();
  return t;
}

inline WearTable load_wear_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open wear csv: " + path);
  return read_wear_csv(in);
}

/// Abnormal (true) when the wear of the window's cut strictly exceeds the limit.
inline std::vector<bool> label_windows(const WearTable& wear, std::span<const std::size_t> window_indices,
                                       double limit_um) {
  std::vector<bool> labels;
  labels.reserve(window_indices.size());
  for (auto w : window_indices) labels.push_back(wear.cut_of_window(w).wear_um > limit_um);
  return labels;
}

struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
};

struct Metrics {
  ConfusionCounts counts;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0, fpr = 0;
  // Set when a ratio had a zero denominator and was reported as 0.
  bool accuracy_undefined = false, precision_undefined = false, recall_undefined = false, f1_undefined = false,
       fpr_undefined = false;
};

inline ConfusionCounts confusion(const std::vector<bool>& predictions, const std::vector<bool>& labels) {
  if (predictions.size() != labels.size())
    throw Error("compute_metrics: " + std::to_string(predictions.size()) + " predictions vs " +
                std::to_string(labels.size()) + " labels");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] && labels[i]) ++c.tp;
    else if (predictions[i] && !labels[i]) ++c.fp;
    else if (!predictions[i] && labels[i]) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline Metrics compute_metrics(const ConfusionCounts& c) {
  Metrics m;
  m.counts = c;
  auto ratio = [](std::size_t num, std::size_t den, bool& undefined) {
    if (den == 0) {
      undefined = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = ratio(c.tp + c.tn, c.total(), m.accuracy_undefined);
  m.precision = ratio(c.tp, c.tp + c.fp, m.precision_undefined);
  m.recall = ratio(c.tp, c.tp + c.fn, m.recall_undefined);
  m.fpr = ratio(c.fp, c.fp + c.tn, m.fpr_undefined);
  if (m.precision_undefined || m.recall_undefined || m.precision + m.recall == 0.0) {
    m.f1_undefined = true;
    m.f1 = 0.0;
  } else {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

inline Metrics compute_metrics(const std::vector<bool>& predictions, const std::vector<bool>& labels) {
  return compute_metrics(confusion(predictions, labels));
}

/// |wear at the first alarm's cut - limit|; absent when nothing alarmed.
inline std::optional<double> detection_deviation(std::optional<std::size_t> first_alarm_window, const WearTable& wear,
                                                 double limit_um) {
  if (!first_alarm_window) return std::nullopt;
  return std::abs(wear.cut_of_window(*first_alarm_window).wear_um - limit_um);
}

struct EvaluationReport {
  Metrics metrics;
  std::optional<double> deviation_um;
  std::optional<std::size_t> first_alarm_window;
  std::size_t excluded_buffer_windows = 0;
};

/// Metrics over post-buffer windows of a monitored stream.
inline EvaluationReport evaluate_stream(const std::vector<HiRow>& rows, const WearTable& wear, double limit_um) {
  EvaluationReport rep;
  std::vector<bool> pred, label;
  for (const auto& r : rows) {
    if (!r.hi) {
      ++rep.excluded_buffer_windows;
      continue;
    }
    pred.push_back(r.alarm);
    label.push_back(wear.cut_of_window(r.window_index).wear_um > limit_um);
    if (r.alarm && !rep.first_alarm_window) rep.first_alarm_window = r.window_index;
  }
  rep.metrics = compute_metrics(pred, label);
  rep.deviation_um = detection_deviation(rep.first_alarm_window, wear, limit_um);
  return rep;
}

inline nlohmann::json to_json(const EvaluationReport& r) {
  const auto& m = r.metrics;
  nlohmann::json j;
  j["tp"] = m.counts.tp;
  j["tn"] = m.counts.tn;
  j["fp"] = m.counts.fp;
  j["fn"] = m.counts.fn;
  j["acc"] = m.accuracy;
  j["p"] = m.precision;
  j["r"] = m.recall;
  j["f1"] = m.f1;
  j["fpr"] = m.fpr;
  j["undefined"] = {{"acc", m.accuracy_undefined}, {"p", m.precision_undefined}, {"r", m.recall_undefined},
                    {"f1", m.f1_undefined},        {"fpr", m.fpr_undefined}};
  j["error_um"] = r.deviation_um ? nlohmann::json(*r.deviation_um) : nlohmann::json(nullptr);
  j["first_alarm_window"] = r.first_alarm_window ? nlohmann::json(*r.first_alarm_window) : nlohmann::json(nullptr);
  j["excluded_buffer_windows"] = r.excluded_buffer_windows;
  return j;
}

inline std::string metrics_table(const EvaluationReport& r) {
  const auto& m = r.metrics;
  std::ostringstream os;
  auto row = [&](const std::string& name, double v, bool undefined) {
    os << std::left << std::setw(10) << name << std::right << std::setw(10) << format_fixed(v, 4)
       << (undefined ? "  (undefined)" : "") << '\n';
  };
  os << std::left << std::setw(10) << "metric" << std::right << std::setw(10) << "value" << '\n';
  row("ACC", m.accuracy, m.accuracy_undefined);
  row("P", m.precision, m.precision_undefined);
  row("R", m.recall, m.recall_undefined);
  row("F1", m.f1, m.f1_undefined);
  row("FPR", m.fpr, m.fpr_undefined);
  os << std::left << std::setw(10) << "Error_um" << std::right << std::setw(10)
     << (r.deviation_um ? format_fixed(*r.deviation_um, 2) : std::string("N/A")) << '\n';
  os << "TP=" << m.counts.tp << " TN=" << m.counts.tn << " FP=" << m.counts.fp << " FN=" << m.counts.fn << '\n';
  return os.str();
}

struct Calibration {
  int cut_id = 0;
  double wear_um = 0.0;
  double tau = 0.0;
  std::size_t windows = 0;
};

/// Picks the cut whose wear is closest to the limit (earliest on ties) among
/// cuts with a defined HI; tau is the mean HI over that cut's windows.
inline Calibration calibrate_threshold(const std::map<int, std::vector<double>>& hi_by_cut, const WearTable& wear,
                                       double wear_limit_um) {
  if (wear.cuts.empty()) throw Error("calibrate: empty wear table");
  const WearCut* best = nullptr;
  double best_gap = std::numeric_limits<double>::infinity();
  for (const auto& c : wear.cuts) {
    const auto it = hi_by_cut.find(c.cut_id);
    if (it == hi_by_cut.end() || it->second.empty()) continue;
    const double gap = std::abs(c.wear_um - wear_limit_um);
    if (gap < best_gap) {
      best_gap = gap;
      best = &c;
    }
  }
  if (!best) throw Error("calibrate: no cut with a defined health index");
  const auto& his = hi_by_cut.at(best->cut_id);
  double s = 0.0;
  for (double v : his) s += v;
  return Calibration{best->cut_id, best->wear_um, s / static_cast<double>(his.size()), his.size()};
}

/// Groups defined HI values by cut, using the wear table's window ranges.
inline std::map<int, std::vector<double>> hi_by_cut(const std::vector<HiRow>& rows, const WearTable& wear) {
  std::map<int, std::vector<double>> out;
  for (const auto& r : rows) {
    if (!r.hi) continue;
    const auto pos = wear.position_of_window(r.window_index);
    if (pos) out[wear.cuts[*pos].cut_id].push_back(*r.hi);
  }
  return out;
}

}  // namespace lorm
