#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "covit/model.hpp"
#include "covit/sketch.hpp"
#include "covit/synth.hpp"
#include "covit/train.hpp"

namespace covit {

/// Dataset assembly knobs used by `train`.
struct DataConfig {
  std::size_t per_class_cap = 1024;
  std::size_t min_class_size = 1;
  // Stratified split when either per-class count is non-zero, otherwise a
  // random split of val_count / test_count items.
  std::size_t val_per_class = 8;
  std::size_t test_per_class = 8;
  std::size_t val_count = 0;
  std::size_t test_count = 0;
  bool operator==(const DataConfig&) const = default;
};

/// Everything a run depends on. `seed` drives simulation, selection,
/// splitting, initialization, training and masking.
struct RunConfig {
  SketchConfig sketch;
  ModelConfig model;
  TrainConfig train;
  SimConfig sim;
  DataConfig data;
  std::uint64_t seed = 1;
  std::vector<double> ambiguity{0.0};
  std::size_t top = 5;

  /// The settings resolved for downstream modules (seed propagated,
  /// f / n copied from the sketch into the model).
  SketchConfig sketch_config() const { return sketch; }
  ModelConfig model_config(std::size_t num_classes) const;
  TrainConfig train_config() const;
  SimConfig sim_config() const;

  void validate() const;
};

/// Keys in canonical order.
const std::vector<std::string>& config_keys();

/// Sets one key; throws ConfigError naming the key when it is unknown or
/// the value does not parse.
void set_config_value(RunConfig& rc, std::string_view key, std::string_view value);

/// Flat `key = value` lines; '#' starts a comment, blank lines are skipped.
/// Keys encountered are appended to `seen` when given.
void apply_config_text(RunConfig& rc, std::string_view text, std::vector<std::string>* seen = nullptr);
void apply_config_file(RunConfig& rc, const std::string& path, std::vector<std::string>* seen = nullptr);

/// Every key with its resolved value, one per line in canonical order.
std::string config_to_text(const RunConfig& rc);

std::vector<double> parse_rate_list(std::string_view text);
std::vector<LayerwiseStage> parse_layerwise(std::string_view text);

}  // namespace covit
