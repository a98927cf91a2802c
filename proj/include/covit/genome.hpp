#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace covit {

enum class Base : std::uint8_t { A = 0, C = 1, G = 2, T = 3, N = 4 };

/// Case-insensitive; every letter other than A/C/G/T collapses to N.
Base base_from_char(char c) noexcept;
char base_to_char(Base b) noexcept;

using Sequence = std::vector<Base>;

Sequence sequence_from_string(std::string_view s);
std::string sequence_to_string(std::span<const Base> seq);

struct Genome {
  std::string id;
  std::string description;
  Sequence seq;

  std::size_t length() const noexcept { return seq.size(); }
  bool operator==(const Genome&) const = default;
};

/// Ordered genomes with unique ids and an optional id -> lineage labelling.
class GenomeSet {
 public:
  GenomeSet() = default;

  /// Throws ConfigError on a duplicate or empty id, or an empty sequence.
  void add(Genome g);

  /// Keeps labels whose id is present in the set; ids absent from the set are dropped.
  void attach_labels(const std::map<std::string, std::string>& labels);

  const std::vector<Genome>& genomes() const noexcept { return genomes_; }
  std::size_t size() const noexcept { return genomes_.size(); }
  bool empty() const noexcept { return genomes_.empty(); }
  const Genome& operator[](std::size_t i) const { return genomes_[i]; }
  const Genome* find(std::string_view id) const;

  bool has_labels() const noexcept { return labels_.has_value(); }
  const std::map<std::string, std::string>& labels() const;
  std::optional<std::string> label_of(std::string_view id) const;

 private:
  std::vector<Genome> genomes_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::optional<std::map<std::string, std::string>> labels_;
};

GenomeSet parse_fasta(std::string_view text);
GenomeSet read_fasta_file(const std::string& path);

std::string write_fasta(const GenomeSet& gs, std::size_t width = 60);
void write_fasta_file(const GenomeSet& gs, const std::string& path, std::size_t width = 60);

/// Two-column TSV (genome id, lineage). Blank lines and '#' comments are skipped.
std::map<std::string, std::string> parse_labels(std::string_view text);
std::map<std::string, std::string> read_labels_file(const std::string& path);
std::string write_labels(const GenomeSet& gs);

/// Sets exactly floor(rate * length) distinct positions to N, sampled without
/// replacement from a generator seeded with `seed`.
Genome mask_random(const Genome& g, double rate, std::uint64_t seed);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace covit
