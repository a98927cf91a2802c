#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "covit/features_io.hpp"
#include "covit/genome.hpp"
#include "covit/sketch.hpp"

namespace covit {

struct LabeledItem {
  std::string id;
  FeatureSequence features;
  std::size_t label = 0;
};

struct LabeledDataset {
  std::vector<LabeledItem> items;
  std::vector<std::string> class_names;  // index -> lineage
  std::string split;

  std::size_t size() const noexcept { return items.size(); }
  bool empty() const noexcept { return items.empty(); }
};

/// One retained sample: its position in the input order and its class index.
struct Selection {
  std::size_t index = 0;
  std::size_t label = 0;
};

struct SelectionResult {
  std::vector<Selection> kept;           // ascending by index
  std::vector<std::string> class_names;  // surviving lineages, sorted
};

/// Drops lineages with fewer than `min_class_size` members and keeps at most
/// `per_class_cap` members of each remaining lineage (a seeded uniform
/// subsample). `lineages[i]` is the label of input item i. Throws ConfigError
/// when no class survives.
SelectionResult select_per_class(const std::vector<std::string>& lineages, std::size_t per_class_cap,
                                 std::size_t min_class_size, std::uint64_t seed);

/// Selects labelled genomes and extracts their fragments; unlabelled genomes are ignored.
LabeledDataset build_dataset(const GenomeSet& gs, const SketchConfig& cfg, std::size_t per_class_cap,
                             std::size_t min_class_size, std::uint64_t seed);

/// Same selection applied to pre-extracted features; records without a label are ignored.
LabeledDataset build_dataset(const FeatureFile& features, const std::map<std::string, std::string>& labels,
                             std::size_t per_class_cap, std::size_t min_class_size, std::uint64_t seed);

struct DatasetSplit {
  LabeledDataset train, val, test;
};

/// Seeded random partition; each part keeps the input order. Requires val + test < |ds|.
DatasetSplit split(const LabeledDataset& ds, std::size_t val_count, std::size_t test_count, std::uint64_t seed);

/// Per-class partition: val_per_class and test_per_class items from every class.
DatasetSplit split_stratified(const LabeledDataset& ds, std::size_t val_per_class, std::size_t test_per_class,
                              std::uint64_t seed);

}  // namespace covit
