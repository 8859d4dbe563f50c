#pragma once

#include "lorm/monitor.hpp"
#include "lorm/synth.hpp"
#include "lorm/train.hpp"

#include <filesystem>
#include <fstream>
#include <set>

namespace lorm {

struct PathsConfig {
  std::string signal_csv = "signal.csv";
  std::string wear_csv = "wear.csv";
  std::string pretrain_csv;  // empty: pretrain on signal_csv
  std::string codebooks = "codebooks.json";
  std::string pretrain_checkpoint = "pretrain.lorm";
  std::string checkpoint = "checkpoint.lorm";
  std::string hi_csv = "hi.csv";
  std::string calibration;  // empty: use monitor.threshold
  std::string stream;       // host:port; empty: replay signal_csv
};

struct DataConfig {
  double train_fraction = 0.4;  // leading share of the series treated as healthy
  double val_fraction = 0.2;
};

struct PretrainConfig {
  std::size_t max_epochs = 30;
  double learning_rate = 1e-3;
};

struct EvalConfig {
  double wear_limit_um = 300.0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  WindowingConfig windowing;
  std::size_t patch_len = 16;
  std::size_t K = 10;
  BackboneConfig backbone;
  TrainConfig train;
  PretrainConfig pretrain;
  DataConfig data;
  MonitorConfig monitor;
  bool monitor_threaded = false;
  std::size_t hi_ma_window = 0;
  EvalConfig eval;
  SynthConfig synth;
  std::size_t synth_channels = 3;
  PathsConfig paths;

  /// Backbone with the derived fields (C, K, h, N*C) filled in.
  BackboneConfig resolved_backbone(std::size_t C) const {
    BackboneConfig b = backbone;
    b.C = C;
    b.K = K;
    b.patch_len = patch_len;
    b.max_seq_len = PatchConfig::for_context(windowing.context_len, patch_len, C).patches_per_channel * C;
    return b;
  }

  void validate() const {
    windowing.validate();
    if (patch_len == 0) throw ConfigError("patch.patch_len must be >= 1");
    if (K < 2) throw ConfigError("tokenizer.K must be >= 2");
    train.validate();
    monitor.validate();
    synth.validate();
    if (!(data.train_fraction > 0.0 && data.train_fraction <= 1.0))
      throw ConfigError("data.train_fraction must be in (0, 1]");
    if (!(data.val_fraction >= 0.0 && data.val_fraction < 1.0)) throw ConfigError("data.val_fraction must be in [0, 1)");
    if (pretrain.max_epochs == 0) throw ConfigError("pretrain.max_epochs must be >= 1");
    if (!(pretrain.learning_rate > 0.0)) throw ConfigError("pretrain.learning_rate must be > 0");
    resolved_backbone(std::max<std::size_t>(synth_channels, 1)).validate();
  }
};

/// Default configuration as a JSON document; every key here is a valid --set target.
inline nlohmann::json default_config_json() {
  const RunConfig d;
  return {
      {"seed", d.seed},
      {"windowing",
       {{"window_len", d.windowing.window_len}, {"context_len", d.windowing.context_len}, {"stride", d.windowing.stride}}},
      {"patch", {{"patch_len", d.patch_len}}},
      {"tokenizer", {{"K", d.K}}},
      {"backbone",
       {{"hidden_dim", d.backbone.hidden_dim},
        {"num_layers", d.backbone.num_layers},
        {"num_heads", d.backbone.num_heads},
        {"ffn_dim", d.backbone.ffn_dim},
        {"attention_mode", to_string(d.backbone.attention_mode)},
        {"layer_norm_eps", d.backbone.layer_norm_eps}}},
      {"train",
       {{"learning_rate", d.train.learning_rate},
        {"adam_beta1", d.train.adam_beta1},
        {"adam_beta2", d.train.adam_beta2},
        {"adam_eps", d.train.adam_eps},
        {"batch_size", d.train.batch_size},
        {"max_epochs", d.train.max_epochs},
        {"patience", d.train.patience}}},
      {"pretrain", {{"max_epochs", d.pretrain.max_epochs}, {"learning_rate", d.pretrain.learning_rate}}},
      {"data", {{"train_fraction", d.data.train_fraction}, {"val_fraction", d.data.val_fraction}}},
      {"monitor",
       {{"buffer_len", d.monitor.buffer_len},
        {"threshold", d.monitor.threshold},
        {"threaded", d.monitor_threaded},
        {"hi_ma_window", d.hi_ma_window}}},
      {"eval", {{"wear_limit_um", d.eval.wear_limit_um}}},
      {"synth",
       {{"channels", d.synth_channels},
        {"sample_rate_hz", d.synth.sample_rate_hz},
        {"duration_samples", d.synth.duration_samples},
        {"noise_sigma", d.synth.noise_sigma},
        {"degradation_onset", d.synth.degradation_onset},
        {"degradation_rate", d.synth.degradation_rate},
        {"sideband_offset_hz", d.synth.sideband_offset_hz},
        {"cuts", d.synth.cuts},
        {"wear_start_um", d.synth.wear_start_um},
        {"wear_span_um", d.synth.wear_span_um}}},
      {"paths",
       {{"signal_csv", d.paths.signal_csv},
        {"wear_csv", d.paths.wear_csv},
        {"pretrain_csv", d.paths.pretrain_csv},
        {"codebooks", d.paths.codebooks},
        {"pretrain_checkpoint", d.paths.pretrain_checkpoint},
        {"checkpoint", d.paths.checkpoint},
        {"hi_csv", d.paths.hi_csv},
        {"calibration", d.paths.calibration},
        {"stream", d.paths.stream}}},
  };
}

namespace detail {

/// Recursively overlays `patch` onto `base`, rejecting keys the base lacks.
inline void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config: " + (where.empty() ? std::string("document") : where) + " must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("config: unknown key '" + key + "'");
    if (base[it.key()].is_object()) merge_config(base[it.key()], it.value(), key);
    else base[it.key()] = it.value();
  }
}

template <typename T>
T field(const nlohmann::json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: ") + section + "." + key + " has the wrong type");
  }
}

}  // namespace detail

/// Applies one `section.key=value` override. The value is parsed as JSON when
/// possible and taken as a string otherwise.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw ConfigError("--set: unknown key '" + path + "'");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError("--set: '" + path + "' names a section, not a value");
  *node = std::move(value);
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::field;
  RunConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.windowing.window_len = field<std::size_t>(j, "windowing", "window_len");
  c.windowing.context_len = field<std::size_t>(j, "windowing", "context_len");
  c.windowing.stride = field<std::size_t>(j, "windowing", "stride");
  c.patch_len = field<std::size_t>(j, "patch", "patch_len");
  c.K = field<std::size_t>(j, "tokenizer", "K");

  c.backbone.hidden_dim = field<std::size_t>(j, "backbone", "hidden_dim");
  c.backbone.num_layers = field<std::size_t>(j, "backbone", "num_layers");
  c.backbone.num_heads = field<std::size_t>(j, "backbone", "num_heads");
  c.backbone.ffn_dim = field<std::size_t>(j, "backbone", "ffn_dim");
  c.backbone.attention_mode = attention_mode_from_string(field<std::string>(j, "backbone", "attention_mode"));
  c.backbone.layer_norm_eps = field<double>(j, "backbone", "layer_norm_eps");

  c.train.learning_rate = field<double>(j, "train", "learning_rate");
  c.train.adam_beta1 = field<double>(j, "train", "adam_beta1");
  c.train.adam_beta2 = field<double>(j, "train", "adam_beta2");
  c.train.adam_eps = field<double>(j, "train", "adam_eps");
  c.train.batch_size = field<std::size_t>(j, "train", "batch_size");
  c.train.max_epochs = field<std::size_t>(j, "train", "max_epochs");
  c.train.patience = field<std::size_t>(j, "train", "patience");
  c.train.seed = c.seed;

  c.pretrain.max_epochs = field<std::size_t>(j, "pretrain", "max_epochs");
  c.pretrain.learning_rate = field<double>(j, "pretrain", "learning_rate");
  c.data.train_fraction = field<double>(j, "data", "train_fraction");
  c.data.val_fraction = field<double>(j, "data", "val_fraction");

  c.monitor.buffer_len = field<std::size_t>(j, "monitor", "buffer_len");
  c.monitor.threshold = field<double>(j, "monitor", "threshold");
  c.monitor_threaded = field<bool>(j, "monitor", "threaded");
  c.hi_ma_window = field<std::size_t>(j, "monitor", "hi_ma_window");
  c.eval.wear_limit_um = field<double>(j, "eval", "wear_limit_um");

  c.synth_channels = field<std::size_t>(j, "synth", "channels");
  if (c.synth_channels == 0) throw ConfigError("synth.channels must be >= 1");
  c.synth.channels = default_synth_channels(c.synth_channels);
  c.synth.sample_rate_hz = field<double>(j, "synth", "sample_rate_hz");
  c.synth.duration_samples = field<std::size_t>(j, "synth", "duration_samples");
  c.synth.noise_sigma = field<double>(j, "synth", "noise_sigma");
  c.synth.degradation_onset = field<std::size_t>(j, "synth", "degradation_onset");
  c.synth.degradation_rate = field<double>(j, "synth", "degradation_rate");
  c.synth.sideband_offset_hz = field<double>(j, "synth", "sideband_offset_hz");
  c.synth.cuts = field<std::size_t>(j, "synth", "cuts");
  c.synth.wear_start_um = field<double>(j, "synth", "wear_start_um");
  c.synth.wear_span_um = field<double>(j, "synth", "wear_span_um");
  c.synth.seed = c.seed;

  c.paths.signal_csv = field<std::string>(j, "paths", "signal_csv");
  c.paths.wear_csv = field<std::string>(j, "paths", "wear_csv");
  c.paths.pretrain_csv = field<std::string>(j, "paths", "pretrain_csv");
  c.paths.codebooks = field<std::string>(j, "paths", "codebooks");
  c.paths.pretrain_checkpoint = field<std::string>(j, "paths", "pretrain_checkpoint");
  c.paths.checkpoint = field<std::string>(j, "paths", "checkpoint");
  c.paths.hi_csv = field<std::string>(j, "paths", "hi_csv");
  c.paths.calibration = field<std::string>(j, "paths", "calibration");
  c.paths.stream = field<std::string>(j, "paths", "stream");
  c.validate();
  return c;
}

/// Defaults, overlaid by the optional config file, then by each override in order.
inline RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {},
                                 std::optional<std::uint64_t> seed = std::nullopt) {
  nlohmann::json doc = default_config_json();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    const auto file = nlohmann::json::parse(in, nullptr, false);
    if (file.is_discarded()) throw ConfigError("config: " + path + " is not valid JSON");
    detail::merge_config(doc, file, "");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  if (seed) doc["seed"] = *seed;
  return config_from_json(doc);
}

}  // namespace lorm
