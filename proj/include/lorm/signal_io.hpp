#pragma once

#include "lorm/common.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace lorm {

/// Raw T x C sample matrix; row t holds every channel at time t.
struct MultiChannelSeries {
  Matrix samples;
  std::vector<std::string> channel_names;
  double sample_rate_hz = 1.0;

  std::size_t length() const { return static_cast<std::size_t>(samples.rows()); }
  std::size_t channels() const { return static_cast<std::size_t>(samples.cols()); }

  void validate() const {
    if (samples.rows() < 1 || samples.cols() < 1) throw Error("series: empty input");
    if (channel_names.size() != channels())
      throw Error("series: channel_names length differs from column count");
    if (!(sample_rate_hz > 0.0)) throw Error("series: sample_rate_hz must be positive");
    if (!samples.allFinite()) throw Error("series: non-finite sample");
  }
};

struct ChannelStats {
  Vector mean;
  Vector std;
  double epsilon = 1e-8;

  std::size_t channels() const { return static_cast<std::size_t>(mean.size()); }
};

struct WindowingConfig {
  std::size_t window_len = 321;
  std::size_t context_len = 320;
  std::size_t stride = 321;

  std::size_t target_len() const { return window_len - context_len; }

  void validate() const {
    if (window_len == 0) throw ConfigError("windowing.window_len must be positive");
    if (context_len == 0 || context_len >= window_len)
      throw ConfigError("windowing.context_len must satisfy 0 < context_len < window_len");
    if (stride == 0) throw ConfigError("windowing.stride must be >= 1");
  }
};

struct SignalWindow {
  Matrix data;  // W x C
  std::size_t start_index = 0;
};

/// Per-channel mean and population standard deviation (divide by T).
inline ChannelStats compute_channel_stats(const Matrix& samples, double epsilon = 1e-8) {
  if (samples.rows() == 0 || samples.cols() == 0) throw Error("compute_channel_stats: empty input");
  ChannelStats s;
  s.epsilon = epsilon;
  const auto n = static_cast<double>(samples.rows());
  s.mean = samples.colwise().sum().transpose() / n;
  s.std.resize(samples.cols());
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    double acc = 0.0;
    for (Eigen::Index t = 0; t < samples.rows(); ++t) {
      const double d = samples(t, c) - s.mean[c];
      acc += d * d;
    }
    s.std[c] = std::sqrt(acc / n);
  }
  return s;
}

inline ChannelStats compute_channel_stats(const MultiChannelSeries& series, double epsilon = 1e-8) {
  return compute_channel_stats(series.samples, epsilon);
}

/// Stats over the union of the samples of a set of windows.
inline ChannelStats compute_channel_stats(std::span<const SignalWindow> windows, double epsilon = 1e-8) {
  if (windows.empty()) throw Error("compute_channel_stats: empty input");
  Eigen::Index rows = 0;
  for (const auto& w : windows) rows += w.data.rows();
  Matrix all(rows, windows.front().data.cols());
  Eigen::Index r = 0;
  for (const auto& w : windows) {
    all.middleRows(r, w.data.rows()) = w.data;
    r += w.data.rows();
  }
  return compute_channel_stats(all, epsilon);
}

/// out = (in - mean) / (std + eps), column-wise.
inline Matrix normalize_samples(const Matrix& in, const ChannelStats& stats) {
  if (static_cast<std::size_t>(in.cols()) != stats.channels())
    throw Error("normalize: channel count " + std::to_string(in.cols()) + " differs from stats (" +
                std::to_string(stats.channels()) + ")");
  Matrix out(in.rows(), in.cols());
  for (Eigen::Index c = 0; c < in.cols(); ++c) {
    const double m = stats.mean[c];
    const double denom = stats.std[c] + stats.epsilon;
    for (Eigen::Index t = 0; t < in.rows(); ++t) out(t, c) = (in(t, c) - m) / denom;
  }
  return out;
}

inline Matrix denormalize_samples(const Matrix& in, const ChannelStats& stats) {
  if (static_cast<std::size_t>(in.cols()) != stats.channels())
    throw Error("denormalize: channel count mismatch");
  Matrix out(in.rows(), in.cols());
  for (Eigen::Index c = 0; c < in.cols(); ++c)
    for (Eigen::Index t = 0; t < in.rows(); ++t)
      out(t, c) = in(t, c) * (stats.std[c] + stats.epsilon) + stats.mean[c];
  return out;
}

inline MultiChannelSeries normalize_series(const MultiChannelSeries& series, const ChannelStats& stats) {
  MultiChannelSeries out;
  out.samples = normalize_samples(series.samples, stats);
  out.channel_names = series.channel_names;
  out.sample_rate_hz = series.sample_rate_hz;
  return out;
}

inline SignalWindow normalize_window(const SignalWindow& w, const ChannelStats& stats) {
  return SignalWindow{normalize_samples(w.data, stats), w.start_index};
}

inline std::size_t window_count(std::size_t length, const WindowingConfig& cfg) {
  if (length < cfg.window_len) return 0;
  return (length - cfg.window_len) / cfg.stride + 1;
}

/// Complete windows at offsets 0, stride, 2*stride, ...
inline std::vector<SignalWindow> segment_windows(const MultiChannelSeries& series, const WindowingConfig& cfg) {
  cfg.validate();
  std::vector<SignalWindow> out;
  const std::size_t n = window_count(series.length(), cfg);
  out.reserve(n);
  const auto W = static_cast<Eigen::Index>(cfg.window_len);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t start = k * cfg.stride;
    out.push_back(SignalWindow{series.samples.middleRows(static_cast<Eigen::Index>(start), W), start});
  }
  return out;
}

struct ContextTarget {
  Matrix context;  // S x C
  Matrix target;   // (W - S) x C
};

inline ContextTarget split_context_target(const SignalWindow& window, std::size_t split) {
  const auto W = static_cast<std::size_t>(window.data.rows());
  if (split == 0 || split >= W)
    throw Error("split_context_target: split index " + std::to_string(split) + " outside (0, " +
                std::to_string(W) + ")");
  const auto S = static_cast<Eigen::Index>(split);
  return ContextTarget{window.data.topRows(S), window.data.bottomRows(window.data.rows() - S)};
}

/// Window-level random split; order inside each subset follows the source order.
inline std::pair<std::vector<SignalWindow>, std::vector<SignalWindow>> split_train_validation(
    const std::vector<SignalWindow>& windows, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw ConfigError("train fraction must be in (0, 1]");
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(windows.size())));
  std::vector<bool> is_train(windows.size(), false);
  for (std::size_t i = 0; i < n_train && i < order.size(); ++i) is_train[order[i]] = true;
  std::pair<std::vector<SignalWindow>, std::vector<SignalWindow>> out;
  for (std::size_t i = 0; i < windows.size(); ++i) (is_train[i] ? out.first : out.second).push_back(windows[i]);
  return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::vector<std::string_view> split_fields(std::string_view line, char sep = ',') {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(sep, pos);
    if (next == std::string_view::npos) {
      fields.push_back(line.substr(pos));
      break;
    }
    fields.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
  return fields;
}

inline std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

/// Header row of channel names, then one sample per row.
inline MultiChannelSeries read_signal_csv(std::istream& in, double sample_rate_hz) {
  MultiChannelSeries series;
  series.sample_rate_hz = sample_rate_hz;
  std::string line;
  if (!std::getline(in, line)) throw Error("signal csv: missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
    line.erase(0, 3);
  for (auto f : split_fields(line)) series.channel_names.push_back(trim(f));
  const std::size_t C = series.channel_names.size();
  std::vector<double> values;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++record;
    const auto fields = split_fields(line);
    if (fields.size() != C)
      throw Error("signal csv: record " + std::to_string(record) + " has " + std::to_string(fields.size()) +
                  " fields, expected " + std::to_string(C));
    for (auto f : fields) {
      double v = 0.0;
      if (!parse_double(f, v) || !std::isfinite(v))
        throw Error("signal csv: record " + std::to_string(record) + " has non-numeric field '" + trim(f) + "'");
      values.push_back(v);
    }
  }
  if (record == 0) throw Error("signal csv: empty input");
  series.samples = ConstMatrixMap(values.data(), static_cast<Eigen::Index>(record), static_cast<Eigen::Index>(C));
  return series;
}

inline MultiChannelSeries read_signal_csv(const std::string& path, double sample_rate_hz) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open signal csv: " + path);
  return read_signal_csv(in, sample_rate_hz);
}

inline void write_signal_csv(std::ostream& out, const MultiChannelSeries& series) {
  for (std::size_t c = 0; c < series.channels(); ++c) out << (c ? "," : "") << series.channel_names[c];
  out << '\n';
  for (Eigen::Index t = 0; t < series.samples.rows(); ++t) {
    for (Eigen::Index c = 0; c < series.samples.cols(); ++c)
      out << (c ? "," : "") << format_double(series.samples(t, c));
    out << '\n';
  }
}

inline void write_signal_csv(const std::string& path, const MultiChannelSeries& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write signal csv: " + path);
  write_signal_csv(out, series);
}

}  // namespace lorm
