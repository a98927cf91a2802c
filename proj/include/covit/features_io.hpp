#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "covit/sketch.hpp"

namespace covit {

struct FeatureRecord {
  std::string id;
  FeatureSequence fragments;  // exactly n matrices of f x 4
  bool operator==(const FeatureRecord&) const = default;
};

struct FeatureFile {
  static constexpr std::uint32_t kVersion = 1;
  SketchConfig config;
  std::vector<FeatureRecord> records;
};

/// "CVFT" container: magic, u32 version, u32 k, u32 n, u32 f, u64 hash_seed,
/// u64 record count, then per record a u32-length-prefixed id followed by the
/// n*f*4 one-hot cells packed LSB-first. All integers little-endian.
std::string encode_features(const FeatureFile& file);
FeatureFile decode_features(std::string_view bytes);

void write_features_file(const FeatureFile& file, const std::string& path);
FeatureFile read_features_file(const std::string& path);

}  // namespace covit
