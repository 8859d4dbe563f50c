#pragma once

#include "lorm/model.hpp"
#include "lorm/signal_io.hpp"
#include "lorm/tokenizer.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace lorm {

/// Everything needed to score a window offline or online.
struct Checkpoint {
  ModelParameters params;
  ChannelStats stats;
  std::vector<std::string> channel_names;
  WindowingConfig windowing;
  std::string codebook_hash;
};

inline constexpr char kCheckpointMagic[4] = {'L', 'O', 'R', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error(std::string("checkpoint: truncated ") + what);
  return v;
}

inline nlohmann::json vector_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vector vector_from_json(const nlohmann::json& a) {
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

}  // namespace detail

/// Layout: "LORM", u32 version, u64 header length, JSON header, then every
/// parameter as a little-endian float32 in canonical layout order.
inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  nlohmann::json header;
  header["backbone"] = to_json(ck.params.config);
  header["windowing"] = {{"window_len", ck.windowing.window_len},
                         {"context_len", ck.windowing.context_len},
                         {"stride", ck.windowing.stride}};
  header["stats"] = {{"mean", detail::vector_json(ck.stats.mean)},
                     {"std", detail::vector_json(ck.stats.std)},
                     {"epsilon", ck.stats.epsilon}};
  header["channel_names"] = ck.channel_names;
  header["codebook_hash"] = ck.codebook_hash;
  header["num_parameters"] = ck.params.size();
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& s : ck.params.layout.specs) layout.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
  header["layout"] = std::move(layout);
  const std::string text = header.dump();

  out.write(kCheckpointMagic, 4);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double v : ck.params.values) detail::put_le<float>(out, static_cast<float>(v));
}

inline Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw Error("checkpoint: bad magic header");
  const auto version = detail::get_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw Error("checkpoint: unsupported format version " + std::to_string(version));
  const auto len = detail::get_le<std::uint64_t>(in, "header length");
  if (len > (std::uint64_t{1} << 30)) throw Error("checkpoint: implausible header length");
  std::string text(static_cast<std::size_t>(len), '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw Error("checkpoint: truncated header");
  try {
    const auto header = nlohmann::json::parse(text);
    const BackboneConfig cfg = backbone_from_json(header.at("backbone"));
    Checkpoint ck{ModelParameters(cfg), {}, {}, {}, {}};
    ck.windowing.window_len = header.at("windowing").at("window_len").get<std::size_t>();
    ck.windowing.context_len = header.at("windowing").at("context_len").get<std::size_t>();
    ck.windowing.stride = header.at("windowing").at("stride").get<std::size_t>();
    ck.stats.mean = detail::vector_from_json(header.at("stats").at("mean"));
    ck.stats.std = detail::vector_from_json(header.at("stats").at("std"));
    ck.stats.epsilon = header.at("stats").at("epsilon").get<double>();
    ck.channel_names = header.at("channel_names").get<std::vector<std::string>>();
    ck.codebook_hash = header.at("codebook_hash").get<std::string>();
    if (header.at("num_parameters").get<std::size_t>() != ck.params.size())
      throw Error("checkpoint: parameter count does not match the backbone configuration");
    const auto& layout = header.at("layout");
    if (layout.size() != ck.params.layout.specs.size()) throw Error("checkpoint: layout mismatch");
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const auto& s = ck.params.layout.specs[i];
      if (layout[i].at("name").get<std::string>() != s.name || layout[i].at("rows").get<Eigen::Index>() != s.rows ||
          layout[i].at("cols").get<Eigen::Index>() != s.cols)
        throw Error("checkpoint: layout mismatch at tensor '" + s.name + "'");
    }
    if (ck.stats.mean.size() != static_cast<Eigen::Index>(cfg.C) || ck.stats.std.size() != static_cast<Eigen::Index>(cfg.C))
      throw Error("checkpoint: channel statistics do not match C");
    for (auto& v : ck.params.values) v = static_cast<double>(detail::get_le<float>(in, "parameters"));
    if (in.peek() != std::char_traits<char>::eof()) throw Error("checkpoint: trailing bytes after parameters");
    ck.windowing.validate();
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: malformed header: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path);
  write_checkpoint(out, ck);
  if (!out) throw Error("checkpoint: write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  return read_checkpoint(in);
}

/// Throws unless `codebooks` is the set the checkpoint was trained with.
inline void verify_codebooks(const Checkpoint& ck, const CodebookSet& codebooks) {
  const std::string h = codebook_hash(codebooks);
  if (h != ck.codebook_hash)
    throw Error("checkpoint: codebook hash mismatch (checkpoint " + ck.codebook_hash + ", codebooks " + h + ")");
  if (codebooks.K() != ck.params.config.K || codebooks.channels() != ck.params.config.C)
    throw Error("checkpoint: codebooks disagree with backbone K/C");
}

}  // namespace lorm
