#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covit/genome.hpp"

namespace covit {

struct SimConfig {
  std::size_t ref_length = 30000;
  std::size_t num_lineages = 8;
  std::size_t lineage_divergence = 25;
  std::size_t within_lineage_noise = 3;
  std::size_t samples_per_lineage = 64;
  double indel_rate = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const SimConfig&) const = default;
};

struct Substitution {
  std::size_t position = 0;
  Base from = Base::A;
  Base to = Base::A;
  bool operator==(const Substitution&) const = default;
};

struct Lineage {
  std::string name;
  Genome founder;
  std::vector<Substitution> mutations;  // relative to the reference
};

struct LineageTree {
  Genome reference;
  std::vector<Lineage> lineages;
  GenomeSet samples;  // labelled with lineage names
};

/// Star phylogeny: every founder is the reference plus `lineage_divergence`
/// distinct substitutions; every sample is its founder plus
/// `within_lineage_noise` substitutions at sites its founder did not mutate,
/// followed by optional 1-3 base indels (floor(indel_rate * ref_length) events).
LineageTree simulate(const SimConfig& cfg);

/// Hamming distance; throws ConfigError on unequal lengths.
std::size_t mutation_distance(const Genome& a, const Genome& b);

std::string lineage_name(std::size_t index);
std::string sample_id(std::size_t lineage, std::size_t sample);

}  // namespace covit
