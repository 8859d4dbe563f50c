#pragma once

#include "lorm/signal_io.hpp"

#include <json.hpp>

#include <limits>
#include <random>

namespace lorm {

/// K centroids of dimension W - S for one channel. Row k is centroid k.
struct Codebook {
  std::size_t channel_index = 0;
  std::string name;
  Matrix centroids;

  std::size_t K() const { return static_cast<std::size_t>(centroids.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(centroids.cols()); }
};

struct CodebookSet {
  std::vector<Codebook> codebooks;
  std::size_t target_dim = 0;

  std::size_t channels() const { return codebooks.size(); }
  std::size_t K() const { return codebooks.empty() ? 0 : codebooks.front().K(); }

  void validate() const {
    if (codebooks.empty()) throw Error("codebooks: no channels");
    for (std::size_t c = 0; c < codebooks.size(); ++c) {
      const auto& cb = codebooks[c];
      if (cb.K() < 1 || cb.K() != K()) throw Error("codebooks: channels disagree on K");
      if (cb.dim() != target_dim) throw Error("codebooks: centroid dimension differs from target_dim");
      if (!cb.centroids.allFinite()) throw Error("codebooks: non-finite centroid");
    }
  }
};

struct KMeansOptions {
  std::size_t max_iterations = 100;
  double relative_tolerance = 1e-6;
};

struct KMeansResult {
  Matrix centroids;
  std::vector<int> assignment;
  /// Inertia after every assignment step; the last entry is the final inertia.
  std::vector<double> inertia_history;
  double inertia() const { return inertia_history.back(); }
};

namespace detail {

inline double squared_distance(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

/// Uniform double in [0, 1) from 53 random bits.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t count_distinct_rows(const Matrix& points) {
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    rows.emplace_back(points.row(i).data(), points.row(i).data() + points.cols());
  std::sort(rows.begin(), rows.end());
  return static_cast<std::size_t>(std::unique(rows.begin(), rows.end()) - rows.begin());
}

}  // namespace detail

/// k-means++ seeding: first centre uniform, later ones with probability
/// proportional to squared distance from the nearest chosen centre.
inline Matrix kmeanspp_seeds(const Matrix& points, std::size_t K, std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  if (n < static_cast<Eigen::Index>(K) || K == 0) throw Error("kmeans: insufficient samples");
  std::mt19937_64 rng(seed);
  Matrix centres(static_cast<Eigen::Index>(K), points.cols());
  auto first = static_cast<Eigen::Index>(detail::uniform01(rng) * static_cast<double>(n));
  centres.row(0) = points.row(std::min(first, n - 1));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = detail::squared_distance(points, i, centres, 0);
  for (Eigen::Index k = 1; k < static_cast<Eigen::Index>(K); ++k) {
    double total = 0.0;
    for (double v : d2) total += v;
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      const double r = detail::uniform01(rng) * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (r < acc && d2[static_cast<std::size_t>(i)] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    centres.row(k) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], detail::squared_distance(points, i, centres, k));
  }
  return centres;
}

/// Nearest centroid by Euclidean distance; ties go to the lowest index.
inline int nearest_centroid(const Matrix& centroids, const Eigen::Ref<const RowVector>& x) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
    const double d = (centroids.row(k) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

/// Lloyd iterations from explicit initial centres.
inline KMeansResult lloyd(const Matrix& points, Matrix centres, const KMeansOptions& opt = {}) {
  const Eigen::Index n = points.rows();
  const Eigen::Index K = centres.rows();
  KMeansResult res;
  res.assignment.assign(static_cast<std::size_t>(n), 0);
  std::vector<double> dist(static_cast<std::size_t>(n));

  auto assign = [&] {
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int k = nearest_centroid(centres, points.row(i));
      res.assignment[static_cast<std::size_t>(i)] = k;
      const double d = detail::squared_distance(points, i, centres, k);
      dist[static_cast<std::size_t>(i)] = d;
      inertia += d;
    }
    res.inertia_history.push_back(inertia);
  };

  assign();
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    const double prev = res.inertia_history.back();
    if (prev == 0.0) break;

    Matrix sums = Matrix::Zero(K, points.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(K), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int k = res.assignment[static_cast<std::size_t>(i)];
      sums.row(k) += points.row(i);
      ++counts[static_cast<std::size_t>(k)];
    }
    for (Eigen::Index k = 0; k < K; ++k) {
      if (counts[static_cast<std::size_t>(k)] > 0)
        centres.row(k) = sums.row(k) / static_cast<double>(counts[static_cast<std::size_t>(k)]);
    }
    // Empty cluster: move its centre onto the point farthest from its own centre.
    for (Eigen::Index k = 0; k < K; ++k) {
      if (counts[static_cast<std::size_t>(k)] > 0) continue;
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = detail::squared_distance(points, i, centres, res.assignment[static_cast<std::size_t>(i)]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      centres.row(k) = points.row(far);
      res.assignment[static_cast<std::size_t>(far)] = static_cast<int>(k);
      counts[static_cast<std::size_t>(k)] = 1;
    }

    assign();
    const double cur = res.inertia_history.back();
    if ((prev - cur) < opt.relative_tolerance * prev) break;
  }
  res.centroids = std::move(centres);
  return res;
}

inline KMeansResult kmeans(const Matrix& points, std::size_t K, std::uint64_t seed, const KMeansOptions& opt = {}) {
  if (points.rows() < static_cast<Eigen::Index>(K) || K == 0) throw Error("kmeans: insufficient samples");
  if (!points.allFinite()) throw Error("kmeans: non-finite sample");
  if (detail::count_distinct_rows(points) < K) throw Error("kmeans: insufficient samples (fewer distinct points than K)");
  return lloyd(points, kmeanspp_seeds(points, K, seed), opt);
}

/// Codebook for one channel from its training target segments (one per row).
inline Codebook fit_codebook(const Matrix& targets, std::size_t K, std::uint64_t seed, std::size_t channel_index = 0,
                             const KMeansOptions& opt = {}) {
  Codebook cb;
  cb.channel_index = channel_index;
  cb.name = "ch" + std::to_string(channel_index);
  cb.centroids = kmeans(targets, K, seed, opt).centroids;
  return cb;
}

inline int assign_token(const Eigen::Ref<const RowVector>& target, const Codebook& codebook) {
  if (static_cast<std::size_t>(target.size()) != codebook.dim())
    throw Error("assign_token: target dimension " + std::to_string(target.size()) + " differs from codebook (" +
                std::to_string(codebook.dim()) + ")");
  return nearest_centroid(codebook.centroids, target);
}

/// Token per channel for a (W - S) x C target segment.
inline TokenVector tokenize_window(const Matrix& target, const CodebookSet& set) {
  if (static_cast<std::size_t>(target.cols()) != set.channels())
    throw Error("tokenize_window: channel count differs from codebooks");
  TokenVector y(set.channels());
  for (std::size_t c = 0; c < set.channels(); ++c) {
    RowVector col = target.col(static_cast<Eigen::Index>(c)).transpose();
    y[c] = assign_token(col, set.codebooks[c]);
  }
  return y;
}

/// Fits one codebook per channel over the target segments of (already normalised) windows.
inline CodebookSet fit_codebooks(std::span<const SignalWindow> windows, std::size_t split, std::size_t K,
                                 std::uint64_t seed, const std::vector<std::string>& channel_names = {},
                                 const KMeansOptions& opt = {}) {
  if (windows.empty()) throw Error("fit_codebooks: insufficient samples (no windows)");
  const auto W = static_cast<std::size_t>(windows.front().data.rows());
  const auto C = static_cast<std::size_t>(windows.front().data.cols());
  if (split == 0 || split >= W) throw Error("fit_codebooks: split index out of range");
  const std::size_t dim = W - split;
  CodebookSet set;
  set.target_dim = dim;
  for (std::size_t c = 0; c < C; ++c) {
    Matrix targets(static_cast<Eigen::Index>(windows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < windows.size(); ++i)
      targets.row(static_cast<Eigen::Index>(i)) =
          windows[i].data.col(static_cast<Eigen::Index>(c)).tail(static_cast<Eigen::Index>(dim)).transpose();
    Codebook cb = fit_codebook(targets, K, seed + c, c, opt);
    if (c < channel_names.size()) cb.name = channel_names[c];
    set.codebooks.push_back(std::move(cb));
  }
  return set;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline constexpr int kCodebookFormatVersion = 1;

inline nlohmann::json codebooks_to_json(const CodebookSet& set) {
  nlohmann::json j;
  j["version"] = kCodebookFormatVersion;
  j["K"] = set.K();
  j["target_dim"] = set.target_dim;
  j["channels"] = nlohmann::json::array();
  for (const auto& cb : set.codebooks) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index k = 0; k < cb.centroids.rows(); ++k) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index d = 0; d < cb.centroids.cols(); ++d) row.push_back(cb.centroids(k, d));
      rows.push_back(std::move(row));
    }
    j["channels"].push_back({{"name", cb.name}, {"centroids", std::move(rows)}});
  }
  return j;
}

inline CodebookSet codebooks_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kCodebookFormatVersion)
      throw Error("codebooks: unsupported version " + j.at("version").dump());
    CodebookSet set;
    const auto K = j.at("K").get<std::size_t>();
    set.target_dim = j.at("target_dim").get<std::size_t>();
    std::size_t c = 0;
    for (const auto& ch : j.at("channels")) {
      Codebook cb;
      cb.channel_index = c++;
      cb.name = ch.at("name").get<std::string>();
      const auto& rows = ch.at("centroids");
      if (rows.size() != K) throw Error("codebooks: channel '" + cb.name + "' has wrong centroid count");
      cb.centroids.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(set.target_dim));
      for (std::size_t k = 0; k < K; ++k) {
        if (rows[k].size() != set.target_dim) throw Error("codebooks: centroid dimension mismatch");
        for (std::size_t d = 0; d < set.target_dim; ++d)
          cb.centroids(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d)) = rows[k][d].get<double>();
      }
      set.codebooks.push_back(std::move(cb));
    }
    set.validate();
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("codebooks: malformed document: ") + e.what());
  }
}

inline std::string codebooks_to_string(const CodebookSet& set) { return codebooks_to_json(set).dump(1) + "\n"; }

/// Fingerprint of the canonical serialisation; checkpoints record it.
inline std::string codebook_hash(const CodebookSet& set) { return hex64(fnv1a64(codebooks_to_string(set))); }

inline void save_codebooks(const std::string& path, const CodebookSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write codebooks: " + path);
  out << codebooks_to_string(set);
}

inline CodebookSet load_codebooks(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open codebooks: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("codebooks: cannot parse " + path + ": " + e.what());
  }
  return codebooks_from_json(j);
}

}  // namespace lorm
