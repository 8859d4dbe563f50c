#pragma once

#include "lorm/config.hpp"

#include <filesystem>
#include <iostream>

namespace lorm {

/// Healthy windows prepared for fitting: statistics come from the training
/// subset only and both subsets are normalised with them.
struct TrainingData {
  std::vector<SignalWindow> train;
  std::vector<SignalWindow> val;
  ChannelStats stats;
  std::vector<std::string> channel_names;
};

/// Leading `train_fraction` of the series, segmented and split window-wise.
inline std::vector<SignalWindow> healthy_windows(const MultiChannelSeries& series, const RunConfig& cfg) {
  const auto keep = static_cast<std::size_t>(std::floor(cfg.data.train_fraction * static_cast<double>(series.length())));
  MultiChannelSeries head{series.samples.topRows(static_cast<Eigen::Index>(keep)), series.channel_names,
                          series.sample_rate_hz};
  auto windows = segment_windows(head, cfg.windowing);
  if (windows.empty())
    throw Error("training data: the leading " + format_double(cfg.data.train_fraction) +
                " of the series holds no complete window");
  return windows;
}

inline TrainingData prepare_training_data(const MultiChannelSeries& series, const RunConfig& cfg) {
  series.validate();
  auto windows = healthy_windows(series, cfg);
  TrainingData d;
  d.channel_names = series.channel_names;
  std::tie(d.train, d.val) = split_train_validation(windows, 1.0 - cfg.data.val_fraction, cfg.seed);
  if (d.train.empty()) throw Error("training data: validation split left no training windows");
  d.stats = compute_channel_stats(std::span<const SignalWindow>(d.train));
  for (auto& w : d.train) w = normalize_window(w, d.stats);
  for (auto& w : d.val) w = normalize_window(w, d.stats);
  return d;
}

inline CodebookSet fit_pipeline_codebooks(const TrainingData& data, const RunConfig& cfg) {
  return fit_codebooks(data.train, cfg.windowing.context_len, cfg.K, cfg.seed, data.channel_names);
}

inline void check_codebooks_match(const CodebookSet& codebooks, const RunConfig& cfg, std::size_t C) {
  if (codebooks.K() != cfg.K)
    throw ConfigError("tokenizer.K is " + std::to_string(cfg.K) + " but the codebooks have K=" +
                      std::to_string(codebooks.K()));
  if (codebooks.target_dim != cfg.windowing.target_len())
    throw ConfigError("codebooks were fitted for a different windowing.context_len");
  if (codebooks.channels() != C)
    throw ConfigError("codebooks cover " + std::to_string(codebooks.channels()) + " channels, data has " +
                      std::to_string(C));
}

inline Checkpoint make_checkpoint(ModelParameters params, const TrainingData& data, const RunConfig& cfg,
                                  const CodebookSet& codebooks) {
  return Checkpoint{std::move(params), data.stats, data.channel_names, cfg.windowing, codebook_hash(codebooks)};
}

/// Fine-tuning or pretraining over prepared data.
inline TrainResult fit_model(const TrainingData& data, const CodebookSet& codebooks, ModelParameters init,
                             TrainConfig tc, const EpochCallback& on_epoch = {}) {
  return train_model(data.train, data.val, codebooks, std::move(init), tc, on_epoch);
}

/// Moves a second corpus into the fine-tuning data's normalised space so that
/// inputs and tokens share one scale.
inline TrainingData align_corpus(TrainingData corpus, const TrainingData& main) {
  if (corpus.channel_names.size() != main.channel_names.size())
    throw ConfigError("paths.pretrain_csv has a different channel count from paths.signal_csv");
  auto renorm = [&](std::vector<SignalWindow>& ws) {
    for (auto& w : ws)
      w = normalize_window(SignalWindow{denormalize_samples(w.data, corpus.stats), w.start_index}, main.stats);
  };
  renorm(corpus.train);
  renorm(corpus.val);
  corpus.stats = main.stats;
  return corpus;
}

/// Phase one: every parameter trains, starting from a fresh initialisation.
inline TrainResult pretrain_model(const TrainingData& corpus, const CodebookSet& codebooks, const RunConfig& cfg,
                                  const EpochCallback& on_epoch = {}) {
  TrainConfig tc = cfg.train;
  tc.freeze = false;
  tc.max_epochs = cfg.pretrain.max_epochs;
  tc.learning_rate = cfg.pretrain.learning_rate;
  tc.patience = cfg.pretrain.max_epochs;
  return fit_model(corpus, codebooks, init_model(cfg.resolved_backbone(corpus.channel_names.size()), cfg.seed), tc,
                   on_epoch);
}

/// Phase two: attention and feed-forward weights stay fixed.
inline TrainResult finetune_model(const TrainingData& data, const CodebookSet& codebooks, ModelParameters init,
                                  const RunConfig& cfg, const EpochCallback& on_epoch = {}) {
  TrainConfig tc = cfg.train;
  tc.freeze = true;
  const std::uint64_t before = frozen_block_hash(init);
  auto result = fit_model(data, codebooks, std::move(init), tc, on_epoch);
  if (frozen_block_hash(result.best) != before) throw Error("train: frozen parameters changed");
  return result;
}

/// Resolves a configured path against the output directory.
inline std::string resolve_path(const std::filesystem::path& out_dir, const std::string& p) {
  if (p.empty()) return p;
  const std::filesystem::path path(p);
  return (path.is_absolute() ? path : out_dir / path).string();
}

}  // namespace lorm
