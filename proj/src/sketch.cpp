#include "covit/sketch.hpp"

#include <algorithm>
#include <unordered_map>

#include "covit/error.hpp"

namespace covit {

void SketchConfig::validate() const {
  if (k < 1) throw ConfigError("k must be at least 1");
  if (k > kMaxK) throw ConfigError("k must not exceed " + std::to_string(kMaxK));
  if (k > f) throw ConfigError("k must not exceed the fragment length f");
  if (n < 1) throw ConfigError("sketch size n must be at least 1");
}

Kmer::Kmer(std::span<const Base> bases) : len_(bases.size()) {
  if (bases.size() > kMaxK) throw ConfigError("k-mer longer than " + std::to_string(kMaxK));
  for (std::size_t i = 0; i < bases.size(); ++i) {
    auto& lane = lanes_[i / kBasesPerLane];
    lane = (lane << 3) | static_cast<std::uint64_t>(bases[i]);
  }
}

Sequence Kmer::decode() const {
  Sequence out(len_);
  for (std::size_t lane = 0; lane < lane_count(); ++lane) {
    const std::size_t first = lane * kBasesPerLane;
    const std::size_t count = std::min(kBasesPerLane, len_ - first);
    std::uint64_t v = lanes_[lane];
    for (std::size_t j = count; j-- > 0;) {
      out[first + j] = static_cast<Base>(v & 7u);
      v >>= 3;
    }
  }
  return out;
}

std::string Kmer::to_string() const { return sequence_to_string(decode()); }

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int r) noexcept { return (x << r) | (x >> (64 - r)); }

constexpr std::uint64_t fmix64(std::uint64_t x) noexcept {
  x ^= x >> 33;
  x *= 0xFF51AFD7ED558CCDULL;
  x ^= x >> 33;
  x *= 0xC4CEB9FE1A85EC53ULL;
  x ^= x >> 33;
  return x;
}

}  // namespace

std::uint64_t hash_lanes(std::span<const std::uint64_t> lanes, std::size_t k,
                         std::uint64_t seed) noexcept {
  std::uint64_t h = seed ^ 0x9E3779B97F4A7C15ULL;
  for (std::uint64_t lane : lanes) {
    lane *= 0x87C37B91114253D5ULL;
    lane = rotl(lane, 31);
    lane *= 0x4CF5AD432745937FULL;
    h ^= lane;
    h = rotl(h, 27) * 5 + 0x52DCE729ULL;
  }
  h ^= static_cast<std::uint64_t>(k);
  return fmix64(h);
}

std::uint64_t hash_kmer(const Kmer& km, std::uint64_t seed) noexcept {
  return hash_lanes(km.lanes(), km.size(), seed);
}

std::size_t KmerHasher::operator()(const Kmer& km) const noexcept {
  return static_cast<std::size_t>(hash_kmer(km, 0x5EED));
}

std::vector<KmerOccurrence> enumerate_kmers(const Genome& g, std::size_t k) {
  if (k == 0) throw ConfigError("k must be at least 1");
  if (k > g.length()) throw ConfigError("genome shorter than k ('" + g.id + "')");
  const std::size_t windows = g.length() - k + 1;
  std::vector<KmerOccurrence> out;
  std::unordered_map<Kmer, std::size_t, KmerHasher> seen;
  seen.reserve(windows);
  out.reserve(windows);
  const std::span<const Base> seq(g.seq);
  for (std::size_t i = 0; i < windows; ++i) {
    Kmer km(seq.subspan(i, k));
    if (seen.emplace(km, out.size()).second) out.push_back({km, i});
  }
  return out;
}

namespace {

bool entry_less(const SketchEntry& a, const SketchEntry& b) noexcept {
  if (a.hash != b.hash) return a.hash < b.hash;
  return a.kmer < b.kmer;
}

}  // namespace

Sketch sketch(std::span<const KmerOccurrence> kmers, const SketchConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("sketch size n must be at least 1");
  std::vector<SketchEntry> all;
  all.reserve(kmers.size());
  for (const auto& occ : kmers) all.push_back({occ.kmer, occ.position, hash_kmer(occ.kmer, cfg.hash_seed)});
  const std::size_t keep = std::min(cfg.n, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), entry_less);
  all.resize(keep);
  return Sketch{cfg, std::move(all)};
}

Sketch sketch_genome(const Genome& g, const SketchConfig& cfg) {
  cfg.validate();
  const auto kmers = enumerate_kmers(g, cfg.k);
  return sketch(kmers, cfg);
}

double jaccard_estimate(const Sketch& a, const Sketch& b) {
  if (a.config.k != b.config.k || a.config.n != b.config.n || a.config.hash_seed != b.config.hash_seed) {
    throw ConfigError("jaccard_estimate: sketches built with different configurations");
  }
  std::vector<Kmer> ka, kb;
  ka.reserve(a.size());
  kb.reserve(b.size());
  for (const auto& e : a.entries) ka.push_back(e.kmer);
  for (const auto& e : b.entries) kb.push_back(e.kmer);
  std::sort(ka.begin(), ka.end());
  std::sort(kb.begin(), kb.end());
  std::size_t common = 0;
  for (std::size_t i = 0, j = 0; i < ka.size() && j < kb.size();) {
    if (ka[i] < kb[j]) {
      ++i;
    } else if (kb[j] < ka[i]) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  const std::size_t uni = ka.size() + kb.size() - common;
  return uni == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(uni);
}

FragmentMatrix one_hot(std::span<const Base> fragment) {
  FragmentMatrix m = FragmentMatrix::Zero(static_cast<Eigen::Index>(fragment.size()), 4);
  for (std::size_t r = 0; r < fragment.size(); ++r) {
    if (fragment[r] != Base::N) m(static_cast<Eigen::Index>(r), static_cast<std::uint8_t>(fragment[r])) = 1;
  }
  return m;
}

std::size_t fragment_left(const SketchConfig& cfg) noexcept { return (cfg.f - cfg.k) / 2; }
std::size_t fragment_right(const SketchConfig& cfg) noexcept { return (cfg.f - cfg.k + 1) / 2; }

std::vector<Sequence> extract_fragment_bases(const Genome& g, const SketchConfig& cfg) {
  const Sketch s = sketch_genome(g, cfg);
  const auto left = static_cast<std::ptrdiff_t>(fragment_left(cfg));
  const auto len = static_cast<std::ptrdiff_t>(g.length());
  std::vector<Sequence> out;
  out.reserve(cfg.n);
  for (const auto& e : s.entries) {
    Sequence frag(cfg.f, Base::N);
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(e.anchor) - left;
    for (std::size_t r = 0; r < cfg.f; ++r) {
      const std::ptrdiff_t p = start + static_cast<std::ptrdiff_t>(r);
      if (p >= 0 && p < len) frag[r] = g.seq[static_cast<std::size_t>(p)];
    }
    out.push_back(std::move(frag));
  }
  while (out.size() < cfg.n) out.emplace_back(cfg.f, Base::N);
  return out;
}

FeatureSequence extract_fragments(const Genome& g, const SketchConfig& cfg) {
  FeatureSequence out;
  for (const auto& frag : extract_fragment_bases(g, cfg)) out.push_back(one_hot(frag));
  return out;
}

}  // namespace covit
