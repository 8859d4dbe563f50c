#pragma once

#include "lorm/eval.hpp"
#include "lorm/signal_io.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace lorm {

struct Harmonic {
  double frequency_hz = 0.0;
  double amplitude = 0.0;
  double phase = 0.0;
};

struct SynthChannel {
  std::string name;
  std::vector<Harmonic> harmonics;
  std::size_t fault_harmonic = 0;  // index into harmonics
  double fault_gain = 1.0;         // channel sensitivity to the fault
};

struct SynthConfig {
  double sample_rate_hz = 10000.0;
  std::size_t duration_samples = 200000;
  std::vector<SynthChannel> channels;
  double noise_sigma = 0.1;
  std::size_t degradation_onset = 120000;
  double degradation_rate = 2.5e-5;  // fault amplitude gained per sample
  double sideband_offset_hz = 43.0;
  std::size_t cuts = 40;
  double wear_start_um = 150.0;
  double wear_span_um = 250.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(sample_rate_hz > 0.0)) throw ConfigError("synth.sample_rate_hz must be > 0");
    if (duration_samples == 0) throw ConfigError("synth.duration_samples must be >= 1");
    if (channels.empty()) throw ConfigError("synth.channels must list at least one channel");
    if (degradation_onset > duration_samples) throw ConfigError("synth.degradation_onset must be <= duration_samples");
    if (!(degradation_rate >= 0.0)) throw ConfigError("synth.degradation_rate must be >= 0");
    if (!(noise_sigma >= 0.0)) throw ConfigError("synth.noise_sigma must be >= 0");
    if (cuts == 0) throw ConfigError("synth.cuts must be >= 1");
    if (cuts > duration_samples) throw ConfigError("synth.cuts must be <= duration_samples");
    for (const auto& ch : channels) {
      if (ch.harmonics.empty()) throw ConfigError("synth.channels: channel '" + ch.name + "' has no harmonics");
      if (ch.fault_harmonic >= ch.harmonics.size())
        throw ConfigError("synth.channels: fault_harmonic out of range for channel '" + ch.name + "'");
    }
  }
};

/// Three channels loosely shaped like spindle vibration, force and acoustic
/// emission: tooth-pass fundamental, harmonics and a spindle-rate component.
inline std::vector<SynthChannel> default_synth_channels(std::size_t count = 3) {
  static const char* names[] = {"vibration", "force", "acoustic"};
  std::vector<SynthChannel> out;
  for (std::size_t c = 0; c < count; ++c) {
    const double k = static_cast<double>(c);
    SynthChannel ch;
    ch.name = c < 3 ? names[c] : "ch" + std::to_string(c);
    ch.harmonics = {{43.0, 0.3 + 0.1 * k, 0.4 * k},
                    {172.0, 1.0, 0.7 + 0.9 * k},
                    {344.0, 0.5 - 0.1 * k, 1.3 + 0.5 * k}};
    ch.fault_harmonic = 2;
    ch.fault_gain = 1.0 - 0.25 * k;
    out.push_back(std::move(ch));
  }
  return out;
}

struct SynthRun {
  MultiChannelSeries series;
  std::vector<double> wear_um;          // per cut
  std::vector<std::size_t> cut_starts;  // first sample of each cut
  std::size_t duration = 0;

  /// Cut (0-based position) containing a sample.
  std::size_t cut_of_sample(std::size_t t) const {
    const auto it = std::upper_bound(cut_starts.begin(), cut_starts.end(), t);
    return static_cast<std::size_t>(it - cut_starts.begin()) - 1;
  }

  std::size_t cut_end(std::size_t i) const { return i + 1 < cut_starts.size() ? cut_starts[i + 1] : duration; }

  /// Window-to-cut table under a windowing; a window belongs to the cut
  /// holding its first sample. Cuts without windows are dropped.
  WearTable wear_table(const WindowingConfig& w) const {
    WearTable t;
    const std::size_t n = window_count(duration, w);
    std::vector<std::size_t> first(wear_um.size(), 0), last(wear_um.size(), 0);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t cut = cut_of_sample(k * w.stride);
      if (first[cut] == 0) first[cut] = k + 1;
      last[cut] = k + 1;
    }
    for (std::size_t i = 0; i < wear_um.size(); ++i)
      if (first[i] != 0) t.cuts.push_back(WearCut{static_cast<int>(i + 1), wear_um[i], first[i], last[i]});
    return t;
  }
};

/// channel(t) = sum of harmonics + noise; after onset the fault harmonic gains
/// gain*s(t) in amplitude and a sideband of amplitude gain*s(t)/2 appears,
/// with s(t) = (t - onset) * rate. Wear rises linearly from onset to the end.
inline SynthRun generate_run(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t T = cfg.duration_samples;
  const std::size_t C = cfg.channels.size();
  SynthRun run;
  run.duration = T;
  run.series.samples.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(C));
  run.series.sample_rate_hz = cfg.sample_rate_hz;
  for (const auto& ch : cfg.channels) run.series.channel_names.push_back(ch.name);

  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double time = static_cast<double>(t) / cfg.sample_rate_hz;
    const double s = t > cfg.degradation_onset ? static_cast<double>(t - cfg.degradation_onset) * cfg.degradation_rate : 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const auto& ch = cfg.channels[c];
      double v = 0.0;
      for (std::size_t k = 0; k < ch.harmonics.size(); ++k) {
        const auto& h = ch.harmonics[k];
        double a = h.amplitude;
        if (k == ch.fault_harmonic) a += ch.fault_gain * s;
        v += a * std::sin(two_pi * h.frequency_hz * time + h.phase);
      }
      if (s > 0.0) {
        const auto& fh = ch.harmonics[ch.fault_harmonic];
        v += 0.5 * ch.fault_gain * s * std::sin(two_pi * (fh.frequency_hz + cfg.sideband_offset_hz) * time + fh.phase);
      }
      v += cfg.noise_sigma * noise(rng);
      run.series.samples(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = v;
    }
  }

  const bool degrading = cfg.degradation_rate > 0.0 && cfg.degradation_onset < T;
  for (std::size_t i = 0; i < cfg.cuts; ++i) {
    run.cut_starts.push_back(i * T / cfg.cuts);
    const std::size_t end = (i + 1) * T / cfg.cuts;
    double progress = 0.0;
    if (degrading && end > cfg.degradation_onset)
      progress = static_cast<double>(end - cfg.degradation_onset) / static_cast<double>(T - cfg.degradation_onset);
    run.wear_um.push_back(cfg.wear_start_um + cfg.wear_span_um * progress);
  }
  return run;
}

}  // namespace lorm
