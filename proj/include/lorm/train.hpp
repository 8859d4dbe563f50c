#pragma once

#include "lorm/signal_io.hpp"
#include "lorm/tokenizer.hpp"
#include "lorm/transformer.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>

namespace lorm {

struct TrainConfig {
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  bool freeze = true;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
    if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
    if (max_epochs == 0) throw ConfigError("train.max_epochs must be >= 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
      throw ConfigError("train.adam_beta1/adam_beta2 must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_objective = 0.0;
};

inline void write_train_report_csv(std::ostream& out, const TrainReport& r) {
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : r.epochs)
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << '\n';
}

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean over channels of -log pi^c[y^c], probabilities clamped below at 1e-12.
inline double window_loss(const TokenDistributions& dists, const TokenVector& y) {
  if (static_cast<std::size_t>(dists.rows()) != y.size())
    throw Error("window_loss: distributions have " + std::to_string(dists.rows()) + " channels, tokens " +
                std::to_string(y.size()));
  double sum = 0.0;
  for (std::size_t c = 0; c < y.size(); ++c) {
    if (y[c] < 0 || y[c] >= dists.cols()) throw Error("window_loss: token out of range");
    sum -= std::log(std::max(dists(static_cast<Eigen::Index>(c), y[c]), kProbabilityFloor));
  }
  return sum / static_cast<double>(y.size());
}

/// A window reduced to model input and its self-supervision target.
struct Example {
  Matrix patches;  // NC x h
  TokenVector tokens;
};

inline Example make_example(const SignalWindow& normalized, std::size_t context_len, std::size_t patch_len,
                            const CodebookSet& codebooks) {
  auto parts = split_context_target(normalized, context_len);
  return Example{build_mcps(parts.context, patch_len).rows, tokenize_window(parts.target, codebooks)};
}

inline std::vector<Example> make_examples(std::span<const SignalWindow> normalized, std::size_t context_len,
                                          std::size_t patch_len, const CodebookSet& codebooks) {
  std::vector<Example> out;
  out.reserve(normalized.size());
  for (const auto& w : normalized) out.push_back(make_example(w, context_len, patch_len, codebooks));
  return out;
}

namespace detail {

inline Matrix stack_patches(const std::vector<Example>& ex, std::span<const std::size_t> idx) {
  const Eigen::Index n = ex[idx[0]].patches.rows();
  Matrix m(n * static_cast<Eigen::Index>(idx.size()), ex[idx[0]].patches.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) m.middleRows(static_cast<Eigen::Index>(i) * n, n) = ex[idx[i]].patches;
  return m;
}

inline std::vector<char> tensor_need(const ModelParameters& params, bool freeze) {
  std::vector<char> need(params.layout.specs.size(), 1);
  if (freeze)
    for (std::size_t i = 0; i < need.size(); ++i) need[i] = params.layout.specs[i].frozen ? 0 : 1;
  return need;
}

}  // namespace detail

/// Per-window losses, evaluated in batches.
inline std::vector<double> example_losses(const ModelParameters& params, const std::vector<Example>& examples,
                                          std::size_t batch_size = 64) {
  std::vector<double> out;
  out.reserve(examples.size());
  TransformerPass pass(params);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(examples.size(), start + batch_size); ++i) idx.push_back(i);
    Matrix probs = pass.forward(detail::stack_patches(examples, idx));
    for (std::size_t i = 0; i < idx.size(); ++i)
      out.push_back(window_loss(distributions_row(probs, static_cast<Eigen::Index>(i), params.config.C, params.config.K),
                                examples[idx[i]].tokens));
  }
  return out;
}

inline double mean_loss(const ModelParameters& params, const std::vector<Example>& examples) {
  if (examples.empty()) return 0.0;
  const auto l = example_losses(params, examples);
  return std::accumulate(l.begin(), l.end(), 0.0) / static_cast<double>(l.size());
}

/// Adam with bias correction over the masked scalars. Updated weights are
/// rounded to float32 storage precision.
class AdamOptimizer {
public:
  AdamOptimizer(std::size_t n, const TrainConfig& cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& values, const std::vector<double>& grad, const std::vector<char>& mask) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!mask[i]) continue;
      const double g = grad[i];
      m_[i] = cfg_.adam_beta1 * m_[i] + (1.0 - cfg_.adam_beta1) * g;
      v_[i] = cfg_.adam_beta2 * v_[i] + (1.0 - cfg_.adam_beta2) * g * g;
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      values[i] = to_storage(values[i] - cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.adam_eps));
    }
  }

  std::size_t steps() const { return t_; }

private:
  TrainConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

/// Loss and gradient of the batch-mean objective; frozen tensors get no gradient when freeze is set.
inline double loss_and_gradient(const ModelParameters& params, const std::vector<Example>& examples,
                                std::span<const std::size_t> idx, bool freeze, std::vector<double>& grad) {
  grad.assign(params.size(), 0.0);
  TransformerPass pass(params);
  Matrix probs = pass.forward(detail::stack_patches(examples, idx));
  std::vector<TokenVector> tokens;
  double loss = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    tokens.push_back(examples[idx[i]].tokens);
    loss += window_loss(distributions_row(probs, static_cast<Eigen::Index>(i), params.config.C, params.config.K),
                        examples[idx[i]].tokens);
  }
  pass.backward(tokens, grad, detail::tensor_need(params, freeze), kProbabilityFloor);
  return loss / static_cast<double>(idx.size());
}

struct TrainResult {
  ModelParameters best;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam with per-epoch validation and early stopping; returns the
/// parameters of the epoch with the lowest validation objective.
inline TrainResult train_examples(const std::vector<Example>& train, const std::vector<Example>& val,
                                  ModelParameters params, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train.empty()) throw Error("train: empty training set");
  for (const auto* set : {&train, &val})
    for (const auto& e : *set) {
      if (e.patches.rows() != static_cast<Eigen::Index>(params.config.max_seq_len) ||
          e.patches.cols() != static_cast<Eigen::Index>(params.config.patch_len))
        throw ConfigError("window shape differs from training configuration");
      if (e.tokens.size() != params.config.C) throw ConfigError("train: token vector length differs from C");
    }

  const std::vector<char> mask = trainable_mask(params, cfg.freeze);
  AdamOptimizer adam(params.size(), cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;

  TrainResult result{params, {}};
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      std::span<const std::size_t> idx(order.data() + start, len);
      const double loss = loss_and_gradient(params, train, idx, cfg.freeze, grad);
      if (!std::isfinite(loss))
        throw Error("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                    std::to_string(adam.steps() + 1) + " (learning rate " + format_double(cfg.learning_rate) + ")");
      sum += loss * static_cast<double>(len);
      adam.step(params.values, grad, mask);
    }
    EpochRecord rec{epoch, sum / static_cast<double>(train.size()), 0.0};
    rec.val_loss = val.empty() ? mean_loss(params, train) : mean_loss(params, val);
    if (!std::isfinite(rec.val_loss)) throw Error("train: non-finite validation objective at epoch " + std::to_string(epoch));
    result.report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss < best) {
      best = rec.val_loss;
      result.best.values = params.values;
      result.report.best_epoch = epoch;
      result.report.best_val_objective = best;
      since_best = 0;
    } else {
      ++since_best;
      if (since_best >= std::max<std::size_t>(cfg.patience, 1)) break;
    }
  }
  return result;
}

/// Windows must already be normalised. The split index follows from the
/// codebooks: S = W - target_dim.
inline TrainResult train_model(std::span<const SignalWindow> train_windows, std::span<const SignalWindow> val_windows,
                               const CodebookSet& codebooks, ModelParameters params, const TrainConfig& cfg,
                               const EpochCallback& on_epoch = {}) {
  if (train_windows.empty()) throw Error("train: empty training set");
  const auto W = static_cast<std::size_t>(train_windows.front().data.rows());
  if (codebooks.target_dim >= W) throw ConfigError("train: codebook target_dim inconsistent with window length");
  const std::size_t S = W - codebooks.target_dim;
  const auto tr = make_examples(train_windows, S, params.config.patch_len, codebooks);
  const auto va = make_examples(val_windows, S, params.config.patch_len, codebooks);
  return train_examples(tr, va, std::move(params), cfg, on_epoch);
}

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
};

/// Analytic gradient of the window objective against central differences for
/// every trainable scalar. Relative error is |a - n| / max(|a|, |n|, floor).
inline GradientCheckResult gradient_check(const ModelParameters& params, bool freeze, const Example& example,
                                          double step = 1e-5, double floor = 1e-6) {
  std::vector<double> grad;
  const std::size_t idx0 = 0;
  std::vector<Example> one{example};
  loss_and_gradient(params, one, std::span(&idx0, 1), freeze, grad);

  ModelParameters probe = params;
  auto loss_at = [&] {
    TransformerPass pass(probe);
    return window_loss(distributions_row(pass.forward(example.patches), 0, probe.config.C, probe.config.K),
                       example.tokens);
  };
  GradientCheckResult r;
  for (const auto& s : params.layout.specs) {
    if (freeze && s.frozen) continue;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const std::size_t at = s.offset + i;
      const double orig = probe.values[at];
      probe.values[at] = orig + step;
      const double up = loss_at();
      probe.values[at] = orig - step;
      const double down = loss_at();
      probe.values[at] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = grad[at];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
      ++r.checked;
      if (rel > r.max_relative_error) {
        r.max_relative_error = rel;
        r.worst_parameter = s.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

}  // namespace lorm
