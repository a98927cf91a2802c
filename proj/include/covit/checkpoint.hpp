#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "covit/binary_io.hpp"
#include "covit/error.hpp"
#include "covit/genome.hpp"
#include "covit/model.hpp"

namespace covit {

/// Everything besides tensors that a checkpoint must carry to be self-describing.
struct TrainingMetadata {
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;
  std::size_t sketch_k = 16;
  std::uint64_t hash_seed = 0;
  std::vector<std::string> class_names;
  bool operator==(const TrainingMetadata&) const = default;
};

template <typename Scalar>
struct Checkpoint {
  ModelParams<Scalar> params;
  TrainingMetadata meta;
};

inline constexpr std::string_view kCheckpointMagic = "CVIT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// The sketch settings a checkpoint was trained with.
inline SketchConfig sketch_config_of(const ModelConfig& cfg, const TrainingMetadata& meta) {
  SketchConfig s;
  s.k = meta.sketch_k;
  s.n = cfg.n_fragments;
  s.f = cfg.f;
  s.hash_seed = meta.hash_seed;
  return s;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Canonical key=value block, one key per line in fixed order.
inline std::string encode_metadata(const ModelConfig& c, bool embed_frozen, const std::vector<bool>& frozen,
                                   const TrainingMetadata& m) {
  std::string s;
  auto kv = [&](const std::string& k, const std::string& v) { s += k + "=" + v + "\n"; };
  kv("layers", std::to_string(c.layers));
  kv("d_model", std::to_string(c.d_model));
  kv("heads", std::to_string(c.heads));
  kv("d_k", std::to_string(c.d_k));
  kv("d_v", std::to_string(c.d_v));
  kv("d_ff", std::to_string(c.d_ff));
  kv("n_fragments", std::to_string(c.n_fragments));
  kv("f", std::to_string(c.f));
  kv("num_classes", std::to_string(c.num_classes));
  kv("dropout_rate", format_double(c.dropout_rate));
  kv("ln_eps", format_double(c.ln_eps));
  std::string fr;
  for (bool b : frozen) fr += b ? '1' : '0';
  kv("frozen", fr);
  kv("embed_frozen", embed_frozen ? "1" : "0");
  kv("epoch", std::to_string(m.epoch));
  kv("seed", std::to_string(m.seed));
  kv("sketch_k", std::to_string(m.sketch_k));
  kv("hash_seed", std::to_string(m.hash_seed));
  for (std::size_t i = 0; i < m.class_names.size(); ++i) kv("class." + std::to_string(i), m.class_names[i]);
  return s;
}

struct DecodedMetadata {
  ModelConfig config;
  std::vector<bool> frozen;
  bool embed_frozen = false;
  TrainingMetadata meta;
};

inline DecodedMetadata decode_metadata(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("corrupt checkpoint metadata line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw ParseError("checkpoint metadata lacks '" + k + "'");
    return it->second;
  };
  auto num = [&](const std::string& k) -> std::uint64_t {
    try {
      return std::stoull(get(k));
    } catch (const std::logic_error&) {
      throw ParseError("checkpoint metadata '" + k + "' is not an integer");
    }
  };
  auto real = [&](const std::string& k) -> double {
    try {
      return std::stod(get(k));
    } catch (const std::logic_error&) {
      throw ParseError("checkpoint metadata '" + k + "' is not a number");
    }
  };
  DecodedMetadata d;
  d.config.layers = num("layers");
  d.config.d_model = num("d_model");
  d.config.heads = num("heads");
  d.config.d_k = num("d_k");
  d.config.d_v = num("d_v");
  d.config.d_ff = num("d_ff");
  d.config.n_fragments = num("n_fragments");
  d.config.f = num("f");
  d.config.num_classes = num("num_classes");
  d.config.dropout_rate = real("dropout_rate");
  d.config.ln_eps = real("ln_eps");
  for (char c : get("frozen")) d.frozen.push_back(c == '1');
  d.embed_frozen = get("embed_frozen") == "1";
  d.meta.epoch = num("epoch");
  d.meta.seed = num("seed");
  d.meta.sketch_k = num("sketch_k");
  d.meta.hash_seed = num("hash_seed");
  for (std::size_t i = 0;; ++i) {
    auto it = kv.find("class." + std::to_string(i));
    if (it == kv.end()) break;
    d.meta.class_names.push_back(it->second);
  }
  return d;
}

/// Vectors (gains, biases, embedding) are stored rank-1; matrices rank-2.
inline bool stored_rank1(const std::string& name, TensorRole role) {
  return role != TensorRole::weight || name == "embed.w";
}

}  // namespace detail

/// "CVIT" | u32 version | u32 metadata length + canonical metadata text |
/// u32 tensor count | per tensor: u32-prefixed name, u8 dtype (0 f64, 1 f32),
/// u32 rank, u64 dims, u64 payload offset | u64 payload length | payload of
/// row-major little-endian values.
template <typename Scalar>
std::string encode_checkpoint(const ModelParams<Scalar>& p, const TrainingMetadata& meta) {
  static_assert(std::is_same_v<Scalar, double> || std::is_same_v<Scalar, float>);
  std::vector<bool> frozen;
  for (const auto& L : p.layers) frozen.push_back(L.frozen);
  ByteWriter w;
  w.put_bytes(kCheckpointMagic);
  w.put(kCheckpointVersion);
  w.put_string(detail::encode_metadata(p.config, p.embedding.frozen, frozen, meta));

  ByteWriter manifest, payload;
  std::uint32_t count = 0;
  visit_tensors(p, [&](const std::string& name, const Tensor<Scalar>& t, TensorRole role, bool) {
    ++count;
    manifest.put_string(name);
    manifest.put(static_cast<std::uint8_t>(std::is_same_v<Scalar, double> ? 0 : 1));
    if (detail::stored_rank1(name, role)) {
      manifest.put(std::uint32_t{1});
      manifest.put(static_cast<std::uint64_t>(t.size()));
    } else {
      manifest.put(std::uint32_t{2});
      manifest.put(static_cast<std::uint64_t>(t.rows()));
      manifest.put(static_cast<std::uint64_t>(t.cols()));
    }
    manifest.put(static_cast<std::uint64_t>(payload.size()));
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) payload.put(t(r, c));
    }
  });
  w.put(count);
  w.put_bytes(manifest.bytes());
  w.put(static_cast<std::uint64_t>(payload.size()));
  w.put_bytes(payload.bytes());
  return w.take();
}

/// Rebuilds the model from the file alone. Throws ParseError on bad magic,
/// unknown version, truncation, or a manifest that disagrees with the config.
template <typename Scalar = double>
Checkpoint<Scalar> decode_checkpoint(std::string_view bytes) {
  ByteReader r(bytes, "truncated checkpoint");
  if (bytes.size() < 4 && kCheckpointMagic.starts_with(bytes)) throw ParseError("truncated checkpoint");
  if (bytes.size() < 4 || bytes.substr(0, 4) != kCheckpointMagic) throw ParseError("not a CVIT checkpoint (bad magic)");
  r.get_bytes(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto decoded = detail::decode_metadata(r.get_string());
  try {
    decoded.config.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint config invalid: ") + e.what());
  }
  if (decoded.frozen.size() != decoded.config.layers) throw ParseError("manifest mismatch: frozen flags vs layer count");

  Checkpoint<Scalar> ck;
  ck.meta = decoded.meta;
  // Skeleton with the right shapes; every value is overwritten below.
  ck.params = init_params<Scalar>(decoded.config, 0);
  for (std::size_t i = 0; i < decoded.frozen.size(); ++i) ck.params.layers[i].frozen = decoded.frozen[i];
  ck.params.embedding.frozen = decoded.embed_frozen;

  struct Entry {
    std::string name;
    std::uint8_t dtype;
    std::vector<std::uint64_t> dims;
    std::uint64_t offset;
  };
  const auto count = r.get<std::uint32_t>();
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.get_string();
    e.dtype = r.get<std::uint8_t>();
    if (e.dtype > 1) throw ParseError("manifest mismatch: unknown dtype for '" + e.name + "'");
    const auto rank = r.get<std::uint32_t>();
    if (rank < 1 || rank > 2) throw ParseError("manifest mismatch: bad rank for '" + e.name + "'");
    for (std::uint32_t k = 0; k < rank; ++k) e.dims.push_back(r.get<std::uint64_t>());
    e.offset = r.get<std::uint64_t>();
    entries.push_back(std::move(e));
  }
  const auto payload_len = r.get<std::uint64_t>();
  const std::string_view payload = r.get_bytes(payload_len);
  if (r.remaining() != 0) throw ParseError("corrupt checkpoint: trailing bytes");

  std::size_t idx = 0;
  visit_tensors(ck.params, [&](const std::string& name, Tensor<Scalar>& t, TensorRole role, bool) {
    if (idx >= entries.size()) throw ParseError("manifest mismatch: missing tensor '" + name + "'");
    const Entry& e = entries[idx++];
    if (e.name != name) throw ParseError("manifest mismatch: expected '" + name + "', found '" + e.name + "'");
    const bool rank1 = detail::stored_rank1(name, role);
    const bool shape_ok = rank1 ? (e.dims.size() == 1 && e.dims[0] == static_cast<std::uint64_t>(t.size()))
                                : (e.dims.size() == 2 && e.dims[0] == static_cast<std::uint64_t>(t.rows()) &&
                                   e.dims[1] == static_cast<std::uint64_t>(t.cols()));
    if (!shape_ok) throw ParseError("manifest mismatch: shape of '" + name + "'");
    const std::size_t width = e.dtype == 0 ? 8 : 4;
    const std::uint64_t nbytes = static_cast<std::uint64_t>(t.size()) * width;
    if (e.offset > payload.size() || nbytes > payload.size() - e.offset) throw ParseError("truncated checkpoint");
    ByteReader pr(payload.substr(e.offset, nbytes), "truncated checkpoint");
    for (Eigen::Index row = 0; row < t.rows(); ++row) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        t(row, c) = e.dtype == 0 ? static_cast<Scalar>(pr.get<double>()) : static_cast<Scalar>(pr.get<float>());
      }
    }
  });
  if (idx != entries.size()) throw ParseError("manifest mismatch: unexpected extra tensors");
  return ck;
}

template <typename Scalar>
void save_checkpoint(const ModelParams<Scalar>& p, const TrainingMetadata& meta, const std::string& path) {
  write_text_file(path, encode_checkpoint(p, meta));
}

template <typename Scalar = double>
Checkpoint<Scalar> load_checkpoint(const std::string& path) {
  const std::string bytes = read_text_file(path);
  try {
    return decode_checkpoint<Scalar>(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace covit
