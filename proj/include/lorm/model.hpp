#pragma once

#include "lorm/common.hpp"

#include <json.hpp>

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace lorm {

enum class AttentionMode { causal, bidirectional };

inline std::string to_string(AttentionMode m) { return m == AttentionMode::causal ? "causal" : "bidirectional"; }

inline AttentionMode attention_mode_from_string(const std::string& s) {
  if (s == "causal") return AttentionMode::causal;
  if (s == "bidirectional") return AttentionMode::bidirectional;
  throw ConfigError("backbone.attention_mode must be 'causal' or 'bidirectional', got '" + s + "'");
}

struct BackboneConfig {
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 256;
  std::size_t max_seq_len = 0;  // N * C
  AttentionMode attention_mode = AttentionMode::causal;
  std::size_t K = 10;
  std::size_t C = 1;
  std::size_t patch_len = 16;
  double layer_norm_eps = 1e-5;

  std::size_t head_dim() const { return hidden_dim / num_heads; }

  void validate() const {
    if (hidden_dim == 0) throw ConfigError("backbone.hidden_dim must be positive");
    if (num_heads == 0 || hidden_dim < num_heads || hidden_dim % num_heads != 0)
      throw ConfigError("backbone.num_heads must divide hidden_dim");
    if (ffn_dim == 0) throw ConfigError("backbone.ffn_dim must be positive");
    if (max_seq_len == 0) throw ConfigError("backbone.max_seq_len must be positive");
    if (K == 0) throw ConfigError("backbone.K must be positive");
    if (C == 0) throw ConfigError("backbone.C must be positive");
    if (patch_len == 0) throw ConfigError("backbone.patch_len must be positive");
    if (max_seq_len % C != 0) throw ConfigError("backbone.max_seq_len must be a multiple of C");
    if (!(layer_norm_eps > 0.0)) throw ConfigError("backbone.layer_norm_eps must be positive");
  }

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

inline nlohmann::json to_json(const BackboneConfig& c) {
  return {{"hidden_dim", c.hidden_dim}, {"num_layers", c.num_layers},   {"num_heads", c.num_heads},
          {"ffn_dim", c.ffn_dim},       {"max_seq_len", c.max_seq_len}, {"attention_mode", to_string(c.attention_mode)},
          {"K", c.K},                   {"C", c.C},                     {"patch_len", c.patch_len},
          {"layer_norm_eps", c.layer_norm_eps}};
}

inline BackboneConfig backbone_from_json(const nlohmann::json& j) {
  BackboneConfig c;
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
  c.attention_mode = attention_mode_from_string(j.at("attention_mode").get<std::string>());
  c.K = j.at("K").get<std::size_t>();
  c.C = j.at("C").get<std::size_t>();
  c.patch_len = j.at("patch_len").get<std::size_t>();
  c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  return c;
}

enum class ParamKind { weight, bias, norm_gain, norm_bias };

struct ParamSpec {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::size_t offset = 0;
  ParamKind kind = ParamKind::weight;
  bool frozen = false;  // attention and feed-forward tensors

  std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

/// Positions of every tensor inside the flat parameter buffer.
struct LayerSlots {
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t w1, b1, w2, b2;
  std::size_t ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

/// Canonical order: embed, pos, per-layer attention, per-layer feed-forward,
/// norms (per-layer, final, head), head class matrix. The frozen tensors are
/// therefore one contiguous block.
struct ParameterLayout {
  std::vector<ParamSpec> specs;
  std::size_t embed = 0, pos = 0;
  std::vector<LayerSlots> layers;
  std::size_t final_gain = 0, final_bias = 0, head_gain = 0, head_bias = 0, class_matrix = 0;
  std::size_t total = 0;

  explicit ParameterLayout(const BackboneConfig& cfg) {
    cfg.validate();
    const auto d = static_cast<Eigen::Index>(cfg.hidden_dim);
    const auto f = static_cast<Eigen::Index>(cfg.ffn_dim);
    auto add = [&](std::string name, Eigen::Index r, Eigen::Index c, ParamKind kind, bool frozen) {
      specs.push_back(ParamSpec{std::move(name), r, c, total, kind, frozen});
      total += static_cast<std::size_t>(r * c);
      return specs.size() - 1;
    };
    embed = add("embed", static_cast<Eigen::Index>(cfg.patch_len), d, ParamKind::weight, false);
    pos = add("pos", static_cast<Eigen::Index>(cfg.max_seq_len), d, ParamKind::weight, false);
    layers.resize(cfg.num_layers);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".attn.";
      auto& s = layers[l];
      s.wq = add(p + "wq", d, d, ParamKind::weight, true);
      s.bq = add(p + "bq", 1, d, ParamKind::bias, true);
      s.wk = add(p + "wk", d, d, ParamKind::weight, true);
      s.bk = add(p + "bk", 1, d, ParamKind::bias, true);
      s.wv = add(p + "wv", d, d, ParamKind::weight, true);
      s.bv = add(p + "bv", 1, d, ParamKind::bias, true);
      s.wo = add(p + "wo", d, d, ParamKind::weight, true);
      s.bo = add(p + "bo", 1, d, ParamKind::bias, true);
    }
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".ffn.";
      auto& s = layers[l];
      s.w1 = add(p + "w1", d, f, ParamKind::weight, true);
      s.b1 = add(p + "b1", 1, f, ParamKind::bias, true);
      s.w2 = add(p + "w2", f, d, ParamKind::weight, true);
      s.b2 = add(p + "b2", 1, d, ParamKind::bias, true);
    }
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      auto& s = layers[l];
      s.ln1_gain = add(p + "ln1.gain", 1, d, ParamKind::norm_gain, false);
      s.ln1_bias = add(p + "ln1.bias", 1, d, ParamKind::norm_bias, false);
      s.ln2_gain = add(p + "ln2.gain", 1, d, ParamKind::norm_gain, false);
      s.ln2_bias = add(p + "ln2.bias", 1, d, ParamKind::norm_bias, false);
    }
    final_gain = add("final_norm.gain", 1, d, ParamKind::norm_gain, false);
    final_bias = add("final_norm.bias", 1, d, ParamKind::norm_bias, false);
    head_gain = add("head_norm.gain", 1, d, ParamKind::norm_gain, false);
    head_bias = add("head_norm.bias", 1, d, ParamKind::norm_bias, false);
    class_matrix = add("head.class_matrix", d, static_cast<Eigen::Index>(cfg.K * cfg.C), ParamKind::weight, false);
  }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < specs.size(); ++i)
      if (specs[i].name == name) return i;
    throw Error("unknown parameter '" + name + "'");
  }
};

/// All model weights in one flat buffer plus the layout describing it.
struct ModelParameters {
  BackboneConfig config;
  ParameterLayout layout;
  std::vector<double> values;

  explicit ModelParameters(const BackboneConfig& cfg) : config(cfg), layout(cfg), values(layout.total, 0.0) {}

  MatrixMap tensor(std::size_t id) {
    const auto& s = layout.specs[id];
    return MatrixMap(values.data() + s.offset, s.rows, s.cols);
  }
  ConstMatrixMap tensor(std::size_t id) const {
    const auto& s = layout.specs[id];
    return ConstMatrixMap(values.data() + s.offset, s.rows, s.cols);
  }
  MatrixMap tensor(const std::string& name) { return tensor(layout.index_of(name)); }
  ConstMatrixMap tensor(const std::string& name) const { return tensor(layout.index_of(name)); }

  std::size_t size() const { return values.size(); }
};

struct ParameterPartition {
  std::vector<std::string> trainable;
  std::vector<std::string> frozen;
};

/// Attention and feed-forward tensors are frozen; embeddings, norms and head train.
inline ParameterPartition partition_parameters(const ModelParameters& params) {
  ParameterPartition p;
  for (const auto& s : params.layout.specs) (s.frozen ? p.frozen : p.trainable).push_back(s.name);
  return p;
}

/// Per-scalar mask of which values the optimiser may update.
inline std::vector<char> trainable_mask(const ModelParameters& params, bool freeze) {
  std::vector<char> mask(params.size(), 1);
  if (!freeze) return mask;
  for (const auto& s : params.layout.specs)
    if (s.frozen) std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(s.offset), s.size(), char{0});
  return mask;
}

inline std::size_t count_scalars(const ModelParameters& params, bool frozen) {
  std::size_t n = 0;
  for (const auto& s : params.layout.specs)
    if (s.frozen == frozen) n += s.size();
  return n;
}

/// Hash of the frozen tensors as float32, in canonical order.
inline std::uint64_t frozen_block_hash(const ModelParameters& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : params.layout.specs) {
    if (!s.frozen) continue;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const float f = static_cast<float>(params.values[s.offset + i]);
      h = fnv1a64(std::as_bytes(std::span(&f, 1)), h);
    }
  }
  return h;
}

/// Weights ~ N(0, 0.02) truncated at two sigma; biases zero; norm gains one.
inline ModelParameters init_model(const BackboneConfig& cfg, std::uint64_t seed) {
  ModelParameters p(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  for (const auto& s : p.layout.specs) {
    double* v = p.values.data() + s.offset;
    for (std::size_t i = 0; i < s.size(); ++i) {
      switch (s.kind) {
        case ParamKind::weight: {
          double x;
          do {
            x = normal(rng);
          } while (std::abs(x) > 0.04);
          v[i] = to_storage(x);
          break;
        }
        case ParamKind::bias:
        case ParamKind::norm_bias:
          v[i] = 0.0;
          break;
        case ParamKind::norm_gain:
          v[i] = 1.0;
          break;
      }
    }
  }
  return p;
}

}  // namespace lorm
