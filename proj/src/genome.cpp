#include "covit/genome.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "covit/error.hpp"
#include "covit/random.hpp"

namespace covit {

Base base_from_char(char c) noexcept {
  switch (c) {
    case 'A': case 'a': return Base::A;
    case 'C': case 'c': return Base::C;
    case 'G': case 'g': return Base::G;
    case 'T': case 't': return Base::T;
    default: return Base::N;
  }
}

char base_to_char(Base b) noexcept {
  static constexpr char kChars[] = {'A', 'C', 'G', 'T', 'N'};
  return kChars[static_cast<std::uint8_t>(b)];
}

Sequence sequence_from_string(std::string_view s) {
  Sequence out;
  out.reserve(s.size());
  for (char c : s) out.push_back(base_from_char(c));
  return out;
}

std::string sequence_to_string(std::span<const Base> seq) {
  std::string out;
  out.reserve(seq.size());
  for (Base b : seq) out.push_back(base_to_char(b));
  return out;
}

void GenomeSet::add(Genome g) {
  if (g.id.empty()) throw ConfigError("genome with empty id");
  if (g.seq.empty()) throw ConfigError("genome '" + g.id + "' has an empty sequence");
  if (index_.contains(g.id)) throw ConfigError("duplicate genome id '" + g.id + "'");
  index_.emplace(g.id, genomes_.size());
  genomes_.push_back(std::move(g));
}

void GenomeSet::attach_labels(const std::map<std::string, std::string>& labels) {
  std::map<std::string, std::string> kept;
  for (const auto& [id, lineage] : labels) {
    if (index_.contains(id)) kept.emplace(id, lineage);
  }
  labels_ = std::move(kept);
}

const Genome* GenomeSet::find(std::string_view id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &genomes_[it->second];
}

const std::map<std::string, std::string>& GenomeSet::labels() const {
  if (!labels_) throw ConfigError("genome set carries no labels");
  return *labels_;
}

std::optional<std::string> GenomeSet::label_of(std::string_view id) const {
  if (!labels_) return std::nullopt;
  auto it = labels_->find(std::string(id));
  if (it == labels_->end()) return std::nullopt;
  return it->second;
}

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

GenomeSet parse_fasta(std::string_view text) {
  GenomeSet gs;
  std::optional<Genome> current;
  std::size_t header_line = 0;
  std::size_t line_no = 0;

  auto flush = [&] {
    if (!current) return;
    if (current->seq.empty()) {
      throw ParseError("record '" + current->id + "' has an empty sequence", header_line);
    }
    try {
      gs.add(std::move(*current));
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), header_line);
    }
    current.reset();
  };

  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;

    if (!line.empty() && line.front() == '>') {
      flush();
      std::string_view header = line.substr(1);
      std::size_t start = 0;
      while (start < header.size() && is_space(header[start])) ++start;
      std::size_t stop = start;
      while (stop < header.size() && !is_space(header[stop])) ++stop;
      if (stop == start) throw ParseError("header without an identifier", line_no);
      Genome g;
      g.id = std::string(header.substr(start, stop - start));
      std::size_t desc = stop;
      while (desc < header.size() && is_space(header[desc])) ++desc;
      std::size_t desc_end = header.size();
      while (desc_end > desc && is_space(header[desc_end - 1])) --desc_end;
      g.description = std::string(header.substr(desc, desc_end - desc));
      current = std::move(g);
      header_line = line_no;
      continue;
    }

    for (char c : line) {
      if (is_space(c)) continue;
      if (!std::isalpha(static_cast<unsigned char>(c))) {
        throw ParseError(std::string("invalid sequence character '") + c + "'", line_no);
      }
      if (!current) throw ParseError("sequence data before the first '>' header", line_no);
      current->seq.push_back(base_from_char(c));
    }
  }
  flush();
  if (gs.empty()) throw ParseError("empty FASTA input");
  return gs;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

GenomeSet read_fasta_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return parse_fasta(text);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string write_fasta(const GenomeSet& gs, std::size_t width) {
  if (width == 0) throw ConfigError("FASTA line width must be positive");
  std::string out;
  for (const Genome& g : gs.genomes()) {
    out += '>';
    out += g.id;
    if (!g.description.empty()) {
      out += ' ';
      out += g.description;
    }
    out += '\n';
    for (std::size_t i = 0; i < g.seq.size(); i += width) {
      const std::size_t len = std::min(width, g.seq.size() - i);
      out += sequence_to_string(std::span(g.seq).subspan(i, len));
      out += '\n';
    }
  }
  return out;
}

void write_fasta_file(const GenomeSet& gs, const std::string& path, std::size_t width) {
  write_text_file(path, write_fasta(gs, width));
}

std::map<std::string, std::string> parse_labels(std::string_view text) {
  std::map<std::string, std::string> labels;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
      throw ParseError("expected 'id<TAB>lineage'", line_no);
    }
    std::string id = line.substr(0, tab);
    std::string lineage = line.substr(tab + 1);
    if (lineage.find('\t') != std::string::npos) throw ParseError("more than two columns", line_no);
    if (!labels.emplace(id, lineage).second) throw ParseError("duplicate label for '" + id + "'", line_no);
  }
  return labels;
}

std::map<std::string, std::string> read_labels_file(const std::string& path) {
  try {
    return parse_labels(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string write_labels(const GenomeSet& gs) {
  std::string out;
  for (const Genome& g : gs.genomes()) {
    if (auto lab = gs.label_of(g.id)) out += g.id + '\t' + *lab + '\n';
  }
  return out;
}

Genome mask_random(const Genome& g, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("mask rate must lie in [0, 1]");
  const std::size_t len = g.length();
  // The small slack keeps products like 0.29 * 100 from flooring to 28.
  auto count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(len) + 1e-9));
  count = std::min(count, len);

  Genome out = g;
  if (count == 0) return out;
  std::vector<std::size_t> order(len);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(len - i));
    std::swap(order[i], order[j]);
    out.seq[order[i]] = Base::N;
  }
  return out;
}

}  // namespace covit
