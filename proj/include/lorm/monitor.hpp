#pragma once

#include "lorm/checkpoint.hpp"
#include "lorm/stream.hpp"
#include "lorm/train.hpp"

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <thread>

namespace lorm {

struct MonitorConfig {
  std::size_t buffer_len = 20000;  // Delta
  double threshold = 0.20;         // tau

  void validate() const {
    if (buffer_len == 0) throw ConfigError("monitor.buffer_len must be >= 1");
    if (!std::isfinite(threshold)) throw ConfigError("monitor.threshold must be finite");
  }
};

struct HealthRecord {
  std::size_t window_index = 0;  // 1-based
  double wlf = 0.0;
  std::optional<double> hi;  // absent while the baseline buffer fills
  bool alarm = false;
};

/// Scores raw windows with a trained model: normalise with the training
/// statistics, split, patch, predict, tokenise the true target, cross-entropy.
class WindowScorer {
public:
  WindowScorer(Checkpoint checkpoint, CodebookSet codebooks)
      : ck_(std::move(checkpoint)), codebooks_(std::move(codebooks)) {
    verify_codebooks(ck_, codebooks_);
    if (ck_.windowing.target_len() != codebooks_.target_dim)
      throw Error("scorer: codebook target_dim differs from checkpoint windowing");
  }

  const Checkpoint& checkpoint() const { return ck_; }
  const CodebookSet& codebooks() const { return codebooks_; }

  Example prepare(const SignalWindow& raw) const {
    if (static_cast<std::size_t>(raw.data.cols()) != ck_.params.config.C)
      throw Error("score_window: window has " + std::to_string(raw.data.cols()) + " channels, model expects " +
                  std::to_string(ck_.params.config.C));
    if (static_cast<std::size_t>(raw.data.rows()) != ck_.windowing.window_len)
      throw ConfigError("window shape differs from training configuration (length " + std::to_string(raw.data.rows()) +
                        ", expected " + std::to_string(ck_.windowing.window_len) + ")");
    Example ex = make_example(normalize_window(raw, ck_.stats), ck_.windowing.context_len,
                              ck_.params.config.patch_len, codebooks_);
    if (ex.patches.rows() != static_cast<Eigen::Index>(ck_.params.config.max_seq_len))
      throw ConfigError("window shape differs from training configuration");
    return ex;
  }

  double score(const SignalWindow& raw) const {
    const Example ex = prepare(raw);
    TransformerPass pass(ck_.params);
    return window_loss(distributions_row(pass.forward(ex.patches), 0, ck_.params.config.C, ck_.params.config.K),
                       ex.tokens);
  }

  std::vector<double> score(std::span<const SignalWindow> raw) const {
    std::vector<Example> ex;
    ex.reserve(raw.size());
    for (const auto& w : raw) ex.push_back(prepare(w));
    return example_losses(ck_.params, ex);
  }

private:
  Checkpoint ck_;
  CodebookSet codebooks_;
};

inline double score_window(const SignalWindow& raw, const WindowScorer& scorer) { return scorer.score(raw); }

/// Baseline-relative health index over an ordered WLF stream.
class HealthTracker {
public:
  explicit HealthTracker(MonitorConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  HealthRecord update(double wlf) {
    HealthRecord r;
    r.window_index = ++count_;
    r.wlf = wlf;
    if (baseline_.size() < cfg_.buffer_len) {
      baseline_.push_back(wlf);
      if (baseline_.size() == cfg_.buffer_len) baseline_mean_ = recompute_baseline_mean();
      return r;
    }
    r.hi = wlf - baseline_mean_;
    r.alarm = *r.hi > cfg_.threshold;
    return r;
  }

  bool baseline_ready() const { return baseline_.size() == cfg_.buffer_len; }
  double baseline_mean() const { return baseline_mean_; }
  const std::vector<double>& baseline() const { return baseline_; }
  // Running mean: exact for a constant buffer, so a constant stream has HI 0.
  double recompute_baseline_mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < baseline_.size(); ++i) m += (baseline_[i] - m) / static_cast<double>(i + 1);
    return m;
  }
  const MonitorConfig& config() const { return cfg_; }

private:
  MonitorConfig cfg_;
  std::vector<double> baseline_;
  double baseline_mean_ = 0.0;
  std::size_t count_ = 0;
};

inline HealthRecord update_health_index(HealthTracker& tracker, double wlf) { return tracker.update(wlf); }

inline std::string alarm_line(const HealthRecord& r, double tau) {
  return "ALARM window=" + std::to_string(r.window_index) + " hi=" + format_double(r.hi.value_or(0.0)) +
         " tau=" + format_double(tau);
}

using RecordCallback = std::function<void(const HealthRecord&)>;

/// Drives a window stream through scorer and tracker. With `threaded`, an
/// ingest thread parses windows into a FIFO while this thread scores them.
inline std::vector<HealthRecord> run_monitor(WindowStream& stream, const WindowScorer& scorer, HealthTracker& tracker,
                                             bool threaded = false, const RecordCallback& on_record = {}) {
  std::vector<HealthRecord> records;
  auto consume = [&](const SignalWindow& w) {
    records.push_back(tracker.update(scorer.score(w)));
    if (on_record) on_record(records.back());
  };
  if (!threaded) {
    while (auto w = stream.next()) consume(*w);
    return records;
  }
  BlockingQueue<SignalWindow> queue(32);
  std::exception_ptr ingest_error;
  std::thread ingest([&] {
    try {
      while (auto w = stream.next()) queue.push(std::move(*w));
    } catch (...) {
      ingest_error = std::current_exception();
    }
    queue.close();
  });
  try {
    while (auto w = queue.pop()) consume(*w);
  } catch (...) {
    queue.close();
    ingest.join();
    throw;
  }
  ingest.join();
  if (ingest_error) std::rethrow_exception(ingest_error);
  return records;
}

/// Writes window_index,wlf,hi,alarm[,cut_id][,hi_ma]. `cut_of` (by 1-based
/// window index) and the moving average are optional plotting aids.
inline void write_hi_csv(std::ostream& out, const std::vector<HealthRecord>& records,
                         const std::function<std::optional<int>(std::size_t)>& cut_of = {}, std::size_t ma_window = 0) {
  out << "window_index,wlf,hi,alarm";
  if (cut_of) out << ",cut_id";
  if (ma_window > 0) out << ",hi_ma";
  out << '\n';
  std::deque<double> recent;
  double recent_sum = 0.0;
  for (const auto& r : records) {
    out << r.window_index << ',' << format_double(r.wlf) << ',' << (r.hi ? format_double(*r.hi) : "") << ','
        << (r.alarm ? 1 : 0);
    if (cut_of) {
      const auto c = cut_of(r.window_index);
      out << ',' << (c ? std::to_string(*c) : "");
    }
    if (ma_window > 0) {
      out << ',';
      if (r.hi) {
        recent.push_back(*r.hi);
        recent_sum += *r.hi;
        if (recent.size() > ma_window) {
          recent_sum -= recent.front();
          recent.pop_front();
        }
        out << format_double(recent_sum / static_cast<double>(recent.size()));
      }
    }
    out << '\n';
  }
}

struct HiRow {
  std::size_t window_index = 0;
  double wlf = 0.0;
  std::optional<double> hi;
  bool alarm = false;
  std::optional<int> cut_id;
};

inline std::vector<HiRow> read_hi_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("hi csv: missing header");
  const auto header = split_fields(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = i;
  for (const char* need : {"window_index", "wlf", "hi", "alarm"})
    if (!col.count(need)) throw Error(std::string("hi csv: missing column ") + need);
  std::vector<HiRow> rows;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++record;
    const auto f = split_fields(line);
    if (f.size() != header.size()) throw Error("hi csv: record " + std::to_string(record) + " has wrong field count");
    HiRow r;
    double v = 0;
    if (!parse_double(f[col["window_index"]], v)) throw Error("hi csv: bad window_index at record " + std::to_string(record));
    r.window_index = static_cast<std::size_t>(v);
    if (!parse_double(f[col["wlf"]], r.wlf)) throw Error("hi csv: bad wlf at record " + std::to_string(record));
    if (!trim(f[col["hi"]]).empty()) {
      if (!parse_double(f[col["hi"]], v)) throw Error("hi csv: bad hi at record " + std::to_string(record));
      r.hi = v;
    }
    r.alarm = trim(f[col["alarm"]]) == "1";
    if (col.count("cut_id") && !trim(f[col["cut_id"]]).empty()) {
      if (!parse_double(f[col["cut_id"]], v)) throw Error("hi csv: bad cut_id at record " + std::to_string(record));
      r.cut_id = static_cast<int>(v);
    }
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<HiRow> to_hi_rows(const std::vector<HealthRecord>& records) {
  std::vector<HiRow> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(HiRow{r.window_index, r.wlf, r.hi, r.alarm, std::nullopt});
  return rows;
}

}  // namespace lorm
