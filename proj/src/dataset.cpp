#include "covit/dataset.hpp"

#include <algorithm>
#include <numeric>

#include "covit/error.hpp"
#include "covit/parallel.hpp"
#include "covit/random.hpp"

namespace covit {

namespace {

void shuffle_prefix(std::vector<std::size_t>& v, std::size_t prefix, Rng& rng) {
  for (std::size_t i = 0; i < prefix && i + 1 < v.size(); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(v.size() - i));
    std::swap(v[i], v[j]);
  }
}

LabeledDataset subset(const LabeledDataset& ds, std::vector<std::size_t> idx, const std::string& tag) {
  std::sort(idx.begin(), idx.end());
  LabeledDataset out;
  out.class_names = ds.class_names;
  out.split = tag;
  out.items.reserve(idx.size());
  for (std::size_t i : idx) out.items.push_back(ds.items[i]);
  return out;
}

}  // namespace

SelectionResult select_per_class(const std::vector<std::string>& lineages, std::size_t per_class_cap,
                                 std::size_t min_class_size, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < lineages.size(); ++i) members[lineages[i]].push_back(i);

  SelectionResult out;
  for (auto& [name, idx] : members) {
    if (idx.size() < min_class_size) continue;
    const std::size_t label = out.class_names.size();
    out.class_names.push_back(name);
    if (idx.size() > per_class_cap) {
      Rng rng(derive_seed(seed, hash_string(name)));
      shuffle_prefix(idx, per_class_cap, rng);
      idx.resize(per_class_cap);
    }
    for (std::size_t i : idx) out.kept.push_back({i, label});
  }
  if (out.class_names.empty()) throw ConfigError("no lineage has at least min_class_size samples");
  std::sort(out.kept.begin(), out.kept.end(), [](const Selection& a, const Selection& b) { return a.index < b.index; });
  return out;
}

LabeledDataset build_dataset(const GenomeSet& gs, const SketchConfig& cfg, std::size_t per_class_cap,
                             std::size_t min_class_size, std::uint64_t seed) {
  cfg.validate();
  std::vector<std::size_t> labelled;
  std::vector<std::string> lineages;
  for (std::size_t i = 0; i < gs.size(); ++i) {
    if (auto lab = gs.label_of(gs[i].id)) {
      labelled.push_back(i);
      lineages.push_back(*lab);
    }
  }
  if (labelled.empty()) throw ConfigError("build_dataset: genome set has no labels");
  const SelectionResult sel = select_per_class(lineages, per_class_cap, min_class_size, seed);
  LabeledDataset ds;
  ds.class_names = sel.class_names;
  ds.items.resize(sel.kept.size());
  parallel_for(sel.kept.size(), [&](std::size_t i) {
    const Genome& g = gs[labelled[sel.kept[i].index]];
    ds.items[i] = {g.id, extract_fragments(g, cfg), sel.kept[i].label};
  });
  return ds;
}

LabeledDataset build_dataset(const FeatureFile& features, const std::map<std::string, std::string>& labels,
                             std::size_t per_class_cap, std::size_t min_class_size, std::uint64_t seed) {
  std::vector<std::size_t> labelled;
  std::vector<std::string> lineages;
  for (std::size_t i = 0; i < features.records.size(); ++i) {
    auto it = labels.find(features.records[i].id);
    if (it == labels.end()) continue;
    labelled.push_back(i);
    lineages.push_back(it->second);
  }
  if (labelled.empty()) throw ConfigError("build_dataset: no feature record has a label");
  const SelectionResult sel = select_per_class(lineages, per_class_cap, min_class_size, seed);
  LabeledDataset ds;
  ds.class_names = sel.class_names;
  for (const auto& s : sel.kept) {
    const FeatureRecord& rec = features.records[labelled[s.index]];
    ds.items.push_back({rec.id, rec.fragments, s.label});
  }
  return ds;
}

DatasetSplit split(const LabeledDataset& ds, std::size_t val_count, std::size_t test_count, std::uint64_t seed) {
  if (val_count + test_count >= ds.size()) throw ConfigError("split: val_count + test_count must be below the dataset size");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5B117));
  shuffle_prefix(order, val_count + test_count, rng);
  const auto v_end = order.begin() + static_cast<std::ptrdiff_t>(val_count);
  const auto t_end = v_end + static_cast<std::ptrdiff_t>(test_count);
  return {subset(ds, {t_end, order.end()}, "train"), subset(ds, {order.begin(), v_end}, "val"),
          subset(ds, {v_end, t_end}, "test")};
}

DatasetSplit split_stratified(const LabeledDataset& ds, std::size_t val_per_class, std::size_t test_per_class,
                              std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(ds.class_names.size());
  for (std::size_t i = 0; i < ds.size(); ++i) by_class.at(ds.items[i].label).push_back(i);
  std::vector<std::size_t> train, val, test;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (val_per_class + test_per_class >= idx.size()) {
      throw ConfigError("split_stratified: class '" + ds.class_names[c] + "' is too small for the requested split");
    }
    Rng rng(derive_seed(seed, 0x57A7, c));
    shuffle_prefix(idx, val_per_class + test_per_class, rng);
    val.insert(val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(val_per_class));
    test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(val_per_class),
                idx.begin() + static_cast<std::ptrdiff_t>(val_per_class + test_per_class));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(val_per_class + test_per_class), idx.end());
  }
  return {subset(ds, std::move(train), "train"), subset(ds, std::move(val), "val"), subset(ds, std::move(test), "test")};
}

}  // namespace covit
