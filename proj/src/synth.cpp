#include "covit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "covit/error.hpp"
#include "covit/random.hpp"

namespace covit {

void SimConfig::validate() const {
  if (ref_length < 1 || num_lineages < 1 || samples_per_lineage < 1) {
    throw ConfigError("ref_length, num_lineages and samples_per_lineage must be at least 1");
  }
  if (lineage_divergence + within_lineage_noise > ref_length) {
    throw ConfigError("lineage_divergence + within_lineage_noise exceeds ref_length");
  }
  if (!(indel_rate >= 0.0 && indel_rate <= 1.0)) throw ConfigError("indel_rate must lie in [0, 1]");
  // Distinct founders available: C(ref_length, divergence) * 3^divergence.
  const double log_founders = std::lgamma(static_cast<double>(ref_length) + 1) -
                              std::lgamma(static_cast<double>(lineage_divergence) + 1) -
                              std::lgamma(static_cast<double>(ref_length - lineage_divergence) + 1) +
                              static_cast<double>(lineage_divergence) * std::log(3.0);
  if (std::log(static_cast<double>(num_lineages)) > log_founders + 1e-9) {
    throw ConfigError("num_lineages exceeds the number of distinct founders attainable at this divergence");
  }
}

std::string lineage_name(std::size_t index) { return "L" + std::to_string(index); }

std::string sample_id(std::size_t lineage, std::size_t sample) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "L%zu_s%04zu", lineage, sample);
  return buf;
}

namespace {

Base other_base(Base from, Rng& rng) {
  auto code = static_cast<std::uint8_t>(from);
  if (code > 3) return static_cast<Base>(rng.below(4));
  const auto shift = static_cast<std::uint8_t>(1 + rng.below(3));
  return static_cast<Base>((code + shift) % 4);
}

/// `count` distinct positions in [0, length) avoiding `excluded`, ascending.
std::vector<std::size_t> sample_positions(std::size_t length, std::size_t count,
                                          const std::set<std::size_t>& excluded, Rng& rng) {
  std::set<std::size_t> chosen;
  while (chosen.size() < count) {
    const auto p = static_cast<std::size_t>(rng.below(length));
    if (!excluded.contains(p)) chosen.insert(p);
  }
  return {chosen.begin(), chosen.end()};
}

void apply_indels(Sequence& seq, std::size_t events, Rng& rng) {
  for (std::size_t e = 0; e < events; ++e) {
    const auto len = static_cast<std::size_t>(1 + rng.below(3));
    const bool insertion = rng.below(2) == 0;
    if (insertion) {
      const auto at = static_cast<std::size_t>(rng.below(seq.size() + 1));
      Sequence ins(len);
      for (auto& b : ins) b = static_cast<Base>(rng.below(4));
      seq.insert(seq.begin() + static_cast<std::ptrdiff_t>(at), ins.begin(), ins.end());
    } else if (seq.size() > len + 1) {
      const auto at = static_cast<std::size_t>(rng.below(seq.size() - len + 1));
      seq.erase(seq.begin() + static_cast<std::ptrdiff_t>(at), seq.begin() + static_cast<std::ptrdiff_t>(at + len));
    }
  }
}

}  // namespace

LineageTree simulate(const SimConfig& cfg) {
  cfg.validate();
  LineageTree tree;
  Rng ref_rng(derive_seed(cfg.seed, 0x5EF));
  tree.reference.id = "reference";
  tree.reference.seq.resize(cfg.ref_length);
  for (auto& b : tree.reference.seq) b = static_cast<Base>(ref_rng.below(4));

  std::set<Sequence> seen;
  for (std::size_t l = 0; l < cfg.num_lineages; ++l) {
    Lineage lin;
    lin.name = lineage_name(l);
    // Redraw on the (vanishingly rare) collision with an earlier founder.
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (attempt == 1000) throw ConfigError("could not draw pairwise distinct founders");
      Rng rng(derive_seed(cfg.seed, 0xF0, l, attempt));
      lin.founder = tree.reference;
      lin.mutations.clear();
      for (std::size_t pos : sample_positions(cfg.ref_length, cfg.lineage_divergence, {}, rng)) {
        const Base from = lin.founder.seq[pos];
        const Base to = other_base(from, rng);
        lin.founder.seq[pos] = to;
        lin.mutations.push_back({pos, from, to});
      }
      if (seen.insert(lin.founder.seq).second) break;
    }
    lin.founder.id = "founder_" + lin.name;
    tree.lineages.push_back(std::move(lin));
  }

  const auto indel_events =
      static_cast<std::size_t>(std::floor(cfg.indel_rate * static_cast<double>(cfg.ref_length) + 1e-9));
  std::map<std::string, std::string> labels;
  for (std::size_t l = 0; l < cfg.num_lineages; ++l) {
    const Lineage& lin = tree.lineages[l];
    std::set<std::size_t> founder_sites;
    for (const auto& m : lin.mutations) founder_sites.insert(m.position);
    for (std::size_t s = 0; s < cfg.samples_per_lineage; ++s) {
      Rng rng(derive_seed(cfg.seed, 0x5A, l, s));
      Genome g;
      g.id = sample_id(l, s);
      g.seq = lin.founder.seq;
      for (std::size_t pos : sample_positions(cfg.ref_length, cfg.within_lineage_noise, founder_sites, rng)) {
        g.seq[pos] = other_base(g.seq[pos], rng);
      }
      if (indel_events > 0) apply_indels(g.seq, indel_events, rng);
      labels[g.id] = lin.name;
      tree.samples.add(std::move(g));
    }
  }
  tree.samples.attach_labels(labels);
  return tree;
}

std::size_t mutation_distance(const Genome& a, const Genome& b) {
  if (a.length() != b.length()) throw ConfigError("mutation_distance: genomes differ in length");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.length(); ++i) d += a.seq[i] != b.seq[i];
  return d;
}

}  // namespace covit
