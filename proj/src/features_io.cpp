#include "covit/features_io.hpp"

#include "covit/binary_io.hpp"
#include "covit/error.hpp"
#include "covit/genome.hpp"

namespace covit {

namespace {

constexpr std::string_view kMagic = "CVFT";

std::size_t packed_bytes(const SketchConfig& cfg) { return (cfg.n * cfg.f * 4 + 7) / 8; }

}  // namespace

std::string encode_features(const FeatureFile& file) {
  const SketchConfig& cfg = file.config;
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put(FeatureFile::kVersion);
  w.put(static_cast<std::uint32_t>(cfg.k));
  w.put(static_cast<std::uint32_t>(cfg.n));
  w.put(static_cast<std::uint32_t>(cfg.f));
  w.put(cfg.hash_seed);
  w.put(static_cast<std::uint64_t>(file.records.size()));
  for (const auto& rec : file.records) {
    if (rec.fragments.size() != cfg.n) throw ConfigError("feature record '" + rec.id + "' has the wrong fragment count");
    w.put_string(rec.id);
    std::string bits(packed_bytes(cfg), '\0');
    std::size_t bit = 0;
    for (const auto& fm : rec.fragments) {
      if (fm.rows() != static_cast<Eigen::Index>(cfg.f)) throw ConfigError("fragment of wrong length in '" + rec.id + "'");
      for (Eigen::Index r = 0; r < fm.rows(); ++r) {
        for (Eigen::Index c = 0; c < 4; ++c, ++bit) {
          if (fm(r, c)) bits[bit / 8] = static_cast<char>(bits[bit / 8] | (1u << (bit % 8)));
        }
      }
    }
    w.put_bytes(bits);
  }
  return w.take();
}

FeatureFile decode_features(std::string_view bytes) {
  ByteReader r(bytes, "truncated feature file");
  if (r.remaining() < 4 || r.get_bytes(4) != kMagic) throw ParseError("not a CVFT feature file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != FeatureFile::kVersion) throw ParseError("unsupported feature file version " + std::to_string(version));
  FeatureFile file;
  file.config.k = r.get<std::uint32_t>();
  file.config.n = r.get<std::uint32_t>();
  file.config.f = r.get<std::uint32_t>();
  file.config.hash_seed = r.get<std::uint64_t>();
  try {
    file.config.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("feature file header: ") + e.what());
  }
  const auto count = r.get<std::uint64_t>();
  const std::size_t nbytes = packed_bytes(file.config);
  for (std::uint64_t i = 0; i < count; ++i) {
    FeatureRecord rec;
    rec.id = r.get_string();
    const std::string_view bits = r.get_bytes(nbytes);
    std::size_t bit = 0;
    rec.fragments.reserve(file.config.n);
    for (std::size_t j = 0; j < file.config.n; ++j) {
      FragmentMatrix fm(static_cast<Eigen::Index>(file.config.f), 4);
      for (Eigen::Index row = 0; row < fm.rows(); ++row) {
        int ones = 0;
        for (Eigen::Index c = 0; c < 4; ++c, ++bit) {
          const bool on = (static_cast<unsigned char>(bits[bit / 8]) >> (bit % 8)) & 1u;
          fm(row, c) = on ? 1 : 0;
          ones += on;
        }
        if (ones > 1) throw ParseError("corrupt feature record '" + rec.id + "': row is not one-hot");
      }
      rec.fragments.push_back(std::move(fm));
    }
    file.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after feature records");
  return file;
}

void write_features_file(const FeatureFile& file, const std::string& path) {
  write_text_file(path, encode_features(file));
}

FeatureFile read_features_file(const std::string& path) {
  return decode_features(read_text_file(path));
}

}  // namespace covit
