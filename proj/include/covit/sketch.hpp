#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "covit/genome.hpp"

namespace covit {

struct SketchConfig {
  std::size_t k = 16;
  std::size_t n = 256;
  std::size_t f = 256;
  std::uint64_t hash_seed = 0;

  /// Throws ConfigError unless 1 <= k <= min(f, kMaxK) and n >= 1.
  void validate() const;
  bool operator==(const SketchConfig&) const = default;
};

/// A k-mer packed 3 bits per base (A=0 C=1 G=2 T=3 N=4). Bases are grouped
/// into 64-bit lanes of 21; within a lane the earliest base is most
/// significant, and lane 0 holds the leading bases. Comparing lanes in order
/// is therefore lexicographic under A < C < G < T < N.
class Kmer {
 public:
  static constexpr std::size_t kBasesPerLane = 21;
  static constexpr std::size_t kMaxLanes = 4;

  Kmer() = default;
  explicit Kmer(std::span<const Base> bases);

  std::size_t size() const noexcept { return len_; }
  std::size_t lane_count() const noexcept { return (len_ + kBasesPerLane - 1) / kBasesPerLane; }
  std::span<const std::uint64_t> lanes() const noexcept { return {lanes_.data(), lane_count()}; }
  std::uint64_t packed() const noexcept { return lanes_[0]; }

  Sequence decode() const;
  std::string to_string() const;

  friend auto operator<=>(const Kmer& a, const Kmer& b) noexcept {
    if (auto c = a.len_ <=> b.len_; c != 0) return c;
    return a.lanes_ <=> b.lanes_;
  }
  friend bool operator==(const Kmer&, const Kmer&) = default;

 private:
  std::array<std::uint64_t, kMaxLanes> lanes_{};
  std::size_t len_ = 0;
};

inline constexpr std::size_t kMaxK = Kmer::kBasesPerLane * Kmer::kMaxLanes;

struct KmerHasher {
  std::size_t operator()(const Kmer& km) const noexcept;
};

struct KmerOccurrence {
  Kmer kmer;
  std::size_t position = 0;
};

/// Reference digest over raw lanes; see README for the definition and test vectors.
std::uint64_t hash_lanes(std::span<const std::uint64_t> lanes, std::size_t k, std::uint64_t seed) noexcept;
std::uint64_t hash_kmer(const Kmer& km, std::uint64_t seed) noexcept;

/// One entry per distinct k-mer, leftmost position, in order of first occurrence.
std::vector<KmerOccurrence> enumerate_kmers(const Genome& g, std::size_t k);

struct SketchEntry {
  Kmer kmer;
  std::size_t anchor = 0;
  std::uint64_t hash = 0;
  bool operator==(const SketchEntry&) const = default;
};

struct Sketch {
  SketchConfig config;
  std::vector<SketchEntry> entries;  // ascending by (hash, kmer)

  std::size_t size() const noexcept { return entries.size(); }
  bool operator==(const Sketch&) const = default;
};

/// Bottom-n selection: the min(n, |kmers|) entries with the smallest digests.
Sketch sketch(std::span<const KmerOccurrence> kmers, const SketchConfig& cfg);
Sketch sketch_genome(const Genome& g, const SketchConfig& cfg);

/// |S(a) ∩ S(b)| / |S(a) ∪ S(b)| over sketch k-mers; 0 for two empty sketches.
double jaccard_estimate(const Sketch& a, const Sketch& b);

/// f x 4 one-hot rows; an N row is all zeros.
using FragmentMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 4, Eigen::RowMajor>;

/// The n fragments of one genome, in sketch order.
using FeatureSequence = std::vector<FragmentMatrix>;

FragmentMatrix one_hot(std::span<const Base> fragment);

/// Window of each anchor: [anchor - floor((f-k)/2), anchor + k + ceil((f-k)/2)).
std::size_t fragment_left(const SketchConfig& cfg) noexcept;
std::size_t fragment_right(const SketchConfig& cfg) noexcept;

/// Raw fragment bases, out-of-range positions padded with N; padded with
/// all-N fragments up to exactly n.
std::vector<Sequence> extract_fragment_bases(const Genome& g, const SketchConfig& cfg);
FeatureSequence extract_fragments(const Genome& g, const SketchConfig& cfg);

}  // namespace covit
