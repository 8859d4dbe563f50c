#pragma once

#include "lorm/model.hpp"
#include "lorm/sequence.hpp"

#include <cmath>
#include <limits>

namespace lorm {

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) * 0.39894228040143267794;  // 1/sqrt(2 pi)
  return cdf + x * pdf;
}

/// Softmax over [begin, begin + len) of a row, in place.
inline void softmax_inplace(double* v, std::size_t len) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, v[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    v[i] = std::exp(v[i] - mx);
    sum += v[i];
  }
  for (std::size_t i = 0; i < len; ++i) v[i] /= sum;
}

namespace detail {

/// Row-wise layer norm. Keeps normalised rows and inverse std for backward.
struct LayerNormCache {
  Matrix xhat;
  Vector rstd;
};

inline Matrix layer_norm_forward(const Matrix& x, const ConstMatrixMap& gain, const ConstMatrixMap& bias, double eps,
                                 LayerNormCache* cache) {
  const Eigen::Index R = x.rows();
  const auto d = static_cast<double>(x.cols());
  Matrix xhat(R, x.cols());
  Vector rstd(R);
  for (Eigen::Index r = 0; r < R; ++r) {
    const double mu = x.row(r).sum() / d;
    const double var = (x.row(r).array() - mu).square().sum() / d;
    rstd[r] = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * rstd[r];
  }
  Matrix y = (xhat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

/// Returns dx; accumulates into gain/bias gradients when given.
inline Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, const ConstMatrixMap& gain,
                                  double* dgain, double* dbias) {
  const Eigen::Index R = dy.rows();
  const Eigen::Index D = dy.cols();
  if (dgain) {
    MatrixMap(dgain, 1, D) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  }
  if (dbias) {
    MatrixMap(dbias, 1, D) += dy.colwise().sum();
  }
  Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
  Matrix dx(R, D);
  const auto d = static_cast<double>(D);
  for (Eigen::Index r = 0; r < R; ++r) {
    const double m1 = dxhat.row(r).sum() / d;
    const double m2 = dxhat.row(r).dot(cache.xhat.row(r)) / d;
    dx.row(r) = cache.rstd[r] * (dxhat.row(r).array() - m1 - cache.xhat.row(r).array() * m2);
  }
  return dx;
}

}  // namespace detail

/// Intermediate values of a single-window forward pass.
struct ForwardTrace {
  Matrix E;        // NC x d
  Matrix E_tilde;  // NC x d
  Matrix Z;        // NC x d
  RowVector g;
  RowVector u;
  RowVector v;
  Matrix distributions;  // C x K, rows are probability vectors
};

/// Per-channel token distributions, C x K.
using TokenDistributions = Matrix;

/// Forward and reverse pass over a batch of windows that share the model.
/// One instance caches activations of the latest forward() for backward().
class TransformerPass {
public:
  explicit TransformerPass(const ModelParameters& params) : p_(params), L_(params.layout) {}

  /// Stage 1: E = P W_E, E~ = E + P_pos. `patches` stacks B sequences of NC rows.
  Matrix embed(const Matrix& patches) {
    const auto& cfg = p_.config;
    const auto n = static_cast<Eigen::Index>(cfg.max_seq_len);
    if (patches.cols() != static_cast<Eigen::Index>(cfg.patch_len) || patches.rows() % n != 0 || patches.rows() == 0)
      throw ConfigError("window shape differs from training configuration (expected " + std::to_string(n) + " x " +
                        std::to_string(cfg.patch_len) + " patches per window)");
    patches_ = patches;
    batch_ = patches.rows() / n;
    Matrix x = patches * p_.tensor(L_.embed);
    const auto pos = p_.tensor(L_.pos);
    for (Eigen::Index b = 0; b < batch_; ++b) x.middleRows(b * n, n) += pos;
    return x;
  }

  /// Stage 2: transformer blocks and final layer norm.
  Matrix encode(const Matrix& x_in) {
    const auto& cfg = p_.config;
    const auto n = static_cast<Eigen::Index>(cfg.max_seq_len);
    if (x_in.rows() % n != 0 || x_in.cols() != static_cast<Eigen::Index>(cfg.hidden_dim))
      throw ConfigError("encode: input shape inconsistent with backbone");
    batch_ = x_in.rows() / n;
    layers_.resize(cfg.num_layers);
    Matrix x = x_in;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) x = block_forward(l, x);
    return detail::layer_norm_forward(x, p_.tensor(L_.final_gain), p_.tensor(L_.final_bias), cfg.layer_norm_eps,
                                      &final_ln_);
  }

  /// Stage 3: pooling, GELU, layer norm, class matrix, per-channel softmax.
  /// Returns B x KC probabilities.
  Matrix head(const Matrix& z) {
    const auto& cfg = p_.config;
    const auto n = static_cast<Eigen::Index>(cfg.max_seq_len);
    const Eigen::Index B = z.rows() / n;
    pooled_.resize(B, z.cols());
    for (Eigen::Index b = 0; b < B; ++b) pooled_.row(b) = z.middleRows(b * n, n).colwise().mean();
    Matrix act = pooled_.unaryExpr([](double v) { return gelu(v); });
    u_ = detail::layer_norm_forward(act, p_.tensor(L_.head_gain), p_.tensor(L_.head_bias), cfg.layer_norm_eps,
                                    &head_ln_);
    scores_ = u_ * p_.tensor(L_.class_matrix);
    probs_ = scores_;
    for (Eigen::Index b = 0; b < B; ++b)
      for (std::size_t c = 0; c < cfg.C; ++c)
        softmax_inplace(probs_.row(b).data() + c * cfg.K, cfg.K);
    return probs_;
  }

  Matrix forward(const Matrix& patches) { return head(encode(embed(patches))); }

  const Matrix& pooled() const { return pooled_; }
  const Matrix& head_features() const { return u_; }
  const Matrix& scores() const { return scores_; }

  /// Reverse pass for loss = (1/B) sum_b (1/C) sum_c -log max(pi_b^c[y], floor).
  /// Gradients are added into `grad` for tensors with need[id] set.
  void backward(const std::vector<TokenVector>& tokens, std::vector<double>& grad, const std::vector<char>& need,
                double prob_floor = 1e-12) {
    const auto& cfg = p_.config;
    const auto n = static_cast<Eigen::Index>(cfg.max_seq_len);
    const Eigen::Index B = probs_.rows();
    const auto K = static_cast<Eigen::Index>(cfg.K);
    const auto C = static_cast<Eigen::Index>(cfg.C);
    auto want = [&](std::size_t id) { return need[id] != 0; };
    auto gptr = [&](std::size_t id) -> double* { return want(id) ? grad.data() + L_.specs[id].offset : nullptr; };
    auto gmap = [&](std::size_t id) {
      const auto& s = L_.specs[id];
      return MatrixMap(grad.data() + s.offset, s.rows, s.cols);
    };

    // d loss / d scores
    Matrix dv = Matrix::Zero(B, K * C);
    const double scale = 1.0 / (static_cast<double>(B) * static_cast<double>(C));
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index c = 0; c < C; ++c) {
        const int y = tokens[static_cast<std::size_t>(b)][static_cast<std::size_t>(c)];
        if (probs_(b, c * K + y) < prob_floor) continue;  // clamped: flat
        for (Eigen::Index k = 0; k < K; ++k) dv(b, c * K + k) = scale * (probs_(b, c * K + k) - (k == y ? 1.0 : 0.0));
      }

    if (want(L_.class_matrix)) gmap(L_.class_matrix).noalias() += u_.transpose() * dv;
    Matrix du = dv * p_.tensor(L_.class_matrix).transpose();
    Matrix dact = detail::layer_norm_backward(du, head_ln_, p_.tensor(L_.head_gain), gptr(L_.head_gain),
                                              gptr(L_.head_bias));
    Matrix dpool = dact.array() * pooled_.unaryExpr([](double v) { return gelu_grad(v); }).array();

    Matrix dz(B * n, dpool.cols());
    for (Eigen::Index b = 0; b < B; ++b) dz.middleRows(b * n, n).rowwise() = dpool.row(b) / static_cast<double>(n);

    Matrix dx = detail::layer_norm_backward(dz, final_ln_, p_.tensor(L_.final_gain), gptr(L_.final_gain),
                                            gptr(L_.final_bias));
    for (std::size_t l = cfg.num_layers; l-- > 0;) dx = block_backward(l, dx, grad, need);

    if (want(L_.pos)) {
      auto dpos = gmap(L_.pos);
      for (Eigen::Index b = 0; b < B; ++b) dpos += dx.middleRows(b * n, n);
    }
    if (want(L_.embed)) gmap(L_.embed).noalias() += patches_.transpose() * dx;
    input_grad_ = std::move(dx);
  }

  /// d loss / d E~ from the latest backward().
  const Matrix& input_grad() const { return input_grad_; }

private:
  struct LayerCache {
    detail::LayerNormCache ln1, ln2;
    Matrix h1, q, k, v, attn_concat, h2, f1, act;
    std::vector<Matrix> attn;  // B * heads matrices of n x n
  };

  Matrix block_forward(std::size_t l, const Matrix& x) {
    const auto& cfg = p_.config;
    const auto& s = L_.layers[l];
    auto& c = layers_[l];
    const auto n = static_cast<Eigen::Index>(cfg.max_seq_len);
    const auto H = static_cast<Eigen::Index>(cfg.num_heads);
    const auto dh = static_cast<Eigen::Index>(cfg.head_dim());
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool causal = cfg.attention_mode == AttentionMode::causal;

    c.h1 = detail::layer_norm_forward(x, p_.tensor(s.ln1_gain), p_.tensor(s.ln1_bias), cfg.layer_norm_eps, &c.ln1);
    c.q = (c.h1 * p_.tensor(s.wq)).rowwise() + p_.tensor(s.bq).row(0);
    c.k = (c.h1 * p_.tensor(s.wk)).rowwise() + p_.tensor(s.bk).row(0);
    c.v = (c.h1 * p_.tensor(s.wv)).rowwise() + p_.tensor(s.bv).row(0);
    c.attn.resize(static_cast<std::size_t>(batch_ * H));
    c.attn_concat.resize(x.rows(), x.cols());
    for (Eigen::Index b = 0; b < batch_; ++b) {
      for (Eigen::Index h = 0; h < H; ++h) {
        Matrix& a = c.attn[static_cast<std::size_t>(b * H + h)];
        a.noalias() = c.q.block(b * n, h * dh, n, dh) * c.k.block(b * n, h * dh, n, dh).transpose();
        a *= inv_sqrt;
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto len = static_cast<std::size_t>(causal ? i + 1 : n);
          softmax_inplace(a.row(i).data(), len);
          if (causal) a.row(i).tail(n - i - 1).setZero();
        }
        c.attn_concat.block(b * n, h * dh, n, dh).noalias() = a * c.v.block(b * n, h * dh, n, dh);
      }
    }
    Matrix mid = x + ((c.attn_concat * p_.tensor(s.wo)).rowwise() + p_.tensor(s.bo).row(0));

    c.h2 = detail::layer_norm_forward(mid, p_.tensor(s.ln2_gain), p_.tensor(s.ln2_bias), cfg.layer_norm_eps, &c.ln2);
    c.f1 = (c.h2 * p_.tensor(s.w1)).rowwise() + p_.tensor(s.b1).row(0);
    c.act = c.f1.unaryExpr([](double v) { return gelu(v); });
    mid += (c.act * p_.tensor(s.w2)).rowwise() + p_.tensor(s.b2).row(0);
    return mid;
  }

  Matrix block_backward(std::size_t l, const Matrix& dout, std::vector<double>& grad, const std::vector<char>& need) {
    const auto& cfg = p_.config;
    const auto& s = L_.layers[l];
    auto& c = layers_[l];
    const auto n = static_cast<Eigen::Index>(cfg.max_seq_len);
    const auto H = static_cast<Eigen::Index>(cfg.num_heads);
    const auto dh = static_cast<Eigen::Index>(cfg.head_dim());
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    auto want = [&](std::size_t id) { return need[id] != 0; };
    auto gptr = [&](std::size_t id) -> double* { return want(id) ? grad.data() + L_.specs[id].offset : nullptr; };
    auto gmap = [&](std::size_t id) {
      const auto& sp = L_.specs[id];
      return MatrixMap(grad.data() + sp.offset, sp.rows, sp.cols);
    };
    auto accumulate_linear = [&](std::size_t w, std::size_t bias, const Matrix& in, const Matrix& dy) {
      if (want(w)) gmap(w).noalias() += in.transpose() * dy;
      if (want(bias)) gmap(bias) += dy.colwise().sum();
    };

    // feed-forward branch
    accumulate_linear(s.w2, s.b2, c.act, dout);
    Matrix df1 = (dout * p_.tensor(s.w2).transpose()).array() *
                 c.f1.unaryExpr([](double v) { return gelu_grad(v); }).array();
    accumulate_linear(s.w1, s.b1, c.h2, df1);
    Matrix dh2 = df1 * p_.tensor(s.w1).transpose();
    Matrix dmid = dout + detail::layer_norm_backward(dh2, c.ln2, p_.tensor(s.ln2_gain), gptr(s.ln2_gain),
                                                     gptr(s.ln2_bias));

    // attention branch
    accumulate_linear(s.wo, s.bo, c.attn_concat, dmid);
    Matrix dconcat = dmid * p_.tensor(s.wo).transpose();
    Matrix dq(dmid.rows(), dmid.cols()), dk(dmid.rows(), dmid.cols()), dv(dmid.rows(), dmid.cols());
    for (Eigen::Index b = 0; b < batch_; ++b) {
      for (Eigen::Index h = 0; h < H; ++h) {
        const Matrix& a = c.attn[static_cast<std::size_t>(b * H + h)];
        const auto dO = dconcat.block(b * n, h * dh, n, dh);
        Matrix da = dO * c.v.block(b * n, h * dh, n, dh).transpose();
        dv.block(b * n, h * dh, n, dh).noalias() = a.transpose() * dO;
        // softmax backward; masked entries have a == 0 and drop out
        Vector rowdot = (da.array() * a.array()).rowwise().sum();
        Matrix ds = (a.array() * (da.colwise() - rowdot).array()) * inv_sqrt;
        dq.block(b * n, h * dh, n, dh).noalias() = ds * c.k.block(b * n, h * dh, n, dh);
        dk.block(b * n, h * dh, n, dh).noalias() = ds.transpose() * c.q.block(b * n, h * dh, n, dh);
      }
    }
    accumulate_linear(s.wq, s.bq, c.h1, dq);
    accumulate_linear(s.wk, s.bk, c.h1, dk);
    accumulate_linear(s.wv, s.bv, c.h1, dv);
    Matrix dh1 = dq * p_.tensor(s.wq).transpose();
    dh1.noalias() += dk * p_.tensor(s.wk).transpose();
    dh1.noalias() += dv * p_.tensor(s.wv).transpose();
    return dmid + detail::layer_norm_backward(dh1, c.ln1, p_.tensor(s.ln1_gain), gptr(s.ln1_gain), gptr(s.ln1_bias));
  }

  const ModelParameters& p_;
  const ParameterLayout& L_;
  Eigen::Index batch_ = 0;
  Matrix patches_;
  std::vector<LayerCache> layers_;
  detail::LayerNormCache final_ln_, head_ln_;
  Matrix pooled_, u_, scores_, probs_;
  Matrix input_grad_;
};

/// Reshapes one B x KC probability row into C x K.
inline TokenDistributions distributions_row(const Matrix& probs, Eigen::Index b, std::size_t C, std::size_t K) {
  TokenDistributions d(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(K));
  for (std::size_t c = 0; c < C; ++c)
    d.row(static_cast<Eigen::Index>(c)) = probs.row(b).segment(static_cast<Eigen::Index>(c * K), static_cast<Eigen::Index>(K));
  return d;
}

/// E and E~ for one MCPS.
inline std::pair<Matrix, Matrix> embed_and_position(const PatchSequence& mcps, const ModelParameters& params) {
  if (mcps.rows.rows() != static_cast<Eigen::Index>(params.config.max_seq_len) ||
      mcps.rows.cols() != static_cast<Eigen::Index>(params.config.patch_len))
    throw ConfigError("window shape differs from training configuration");
  Matrix E = mcps.rows * params.tensor(params.layout.embed);
  Matrix Et = E + params.tensor(params.layout.pos);
  return {std::move(E), std::move(Et)};
}

inline Matrix encode_context(const Matrix& E_tilde, const ModelParameters& params) {
  TransformerPass pass(params);
  return pass.encode(E_tilde);
}

/// g, and C x K token distributions for one contextualised matrix Z.
inline std::pair<RowVector, TokenDistributions> pool_and_predict(const Matrix& Z, const ModelParameters& params) {
  TransformerPass pass(params);
  Matrix probs = pass.head(Z);
  return {pass.pooled().row(0), distributions_row(probs, 0, params.config.C, params.config.K)};
}

inline ForwardTrace forward_trace(const PatchSequence& mcps, const ModelParameters& params) {
  ForwardTrace t;
  std::tie(t.E, t.E_tilde) = embed_and_position(mcps, params);
  TransformerPass pass(params);
  t.Z = pass.encode(t.E_tilde);
  Matrix probs = pass.head(t.Z);
  t.g = pass.pooled().row(0);
  t.u = pass.head_features().row(0);
  t.v = pass.scores().row(0);
  t.distributions = distributions_row(probs, 0, params.config.C, params.config.K);
  return t;
}

inline TokenDistributions predict(const PatchSequence& mcps, const ModelParameters& params) {
  TransformerPass pass(params);
  return distributions_row(pass.forward(mcps.rows), 0, params.config.C, params.config.K);
}

}  // namespace lorm
