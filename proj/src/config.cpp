#include "covit/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>

#include "covit/error.hpp"
#include "covit/genome.hpp"

namespace covit {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_unsigned(std::string_view key, std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (v.empty() || r.ec != std::errc() || r.ptr != end) {
    throw ConfigError("config key '" + std::string(key) + "': expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  const std::string s(v);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) {
    throw ConfigError("config key '" + std::string(key) + "': expected a number, got '" + s + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true/false, got '" + std::string(v) + "'");
}

std::string join_rates(const std::vector<double>& rates) {
  std::string s;
  for (std::size_t i = 0; i < rates.size(); ++i) s += (i ? "," : "") + fmt_double(rates[i]);
  return s;
}

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field size_field(T RunConfig::*outer, std::size_t T::*member) {
  return {[=](RunConfig& rc, std::string_view k, std::string_view v) { rc.*outer.*member = parse_unsigned<std::size_t>(k, v); },
          [=](const RunConfig& rc) { return std::to_string(rc.*outer.*member); }};
}

template <typename T>
Field u64_field(T RunConfig::*outer, std::uint64_t T::*member) {
  return {[=](RunConfig& rc, std::string_view k, std::string_view v) { rc.*outer.*member = parse_unsigned<std::uint64_t>(k, v); },
          [=](const RunConfig& rc) { return std::to_string(rc.*outer.*member); }};
}

template <typename T>
Field real_field(T RunConfig::*outer, double T::*member) {
  return {[=](RunConfig& rc, std::string_view k, std::string_view v) { rc.*outer.*member = parse_real(k, v); },
          [=](const RunConfig& rc) { return fmt_double(rc.*outer.*member); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    t.emplace_back("seed", Field{[](RunConfig& rc, std::string_view k, std::string_view v) {
                                   rc.seed = parse_unsigned<std::uint64_t>(k, v);
                                 },
                                 [](const RunConfig& rc) { return std::to_string(rc.seed); }});
    t.emplace_back("sketch.k", size_field(&RunConfig::sketch, &SketchConfig::k));
    t.emplace_back("sketch.n", size_field(&RunConfig::sketch, &SketchConfig::n));
    t.emplace_back("sketch.f", size_field(&RunConfig::sketch, &SketchConfig::f));
    t.emplace_back("sketch.hash_seed", u64_field(&RunConfig::sketch, &SketchConfig::hash_seed));
    t.emplace_back("model.layers", size_field(&RunConfig::model, &ModelConfig::layers));
    t.emplace_back("model.d_model", size_field(&RunConfig::model, &ModelConfig::d_model));
    t.emplace_back("model.heads", size_field(&RunConfig::model, &ModelConfig::heads));
    t.emplace_back("model.d_k", size_field(&RunConfig::model, &ModelConfig::d_k));
    t.emplace_back("model.d_v", size_field(&RunConfig::model, &ModelConfig::d_v));
    t.emplace_back("model.d_ff", size_field(&RunConfig::model, &ModelConfig::d_ff));
    t.emplace_back("model.dropout", real_field(&RunConfig::model, &ModelConfig::dropout_rate));
    t.emplace_back("model.ln_eps", real_field(&RunConfig::model, &ModelConfig::ln_eps));
    t.emplace_back("train.batch_size", size_field(&RunConfig::train, &TrainConfig::batch_size));
    t.emplace_back("train.lr", real_field(&RunConfig::train, &TrainConfig::lr));
    t.emplace_back("train.beta1", real_field(&RunConfig::train, &TrainConfig::beta1));
    t.emplace_back("train.beta2", real_field(&RunConfig::train, &TrainConfig::beta2));
    t.emplace_back("train.eps", real_field(&RunConfig::train, &TrainConfig::eps));
    t.emplace_back("train.weight_decay", real_field(&RunConfig::train, &TrainConfig::weight_decay));
    t.emplace_back("train.max_epochs", size_field(&RunConfig::train, &TrainConfig::max_epochs));
    t.emplace_back("train.patience", size_field(&RunConfig::train, &TrainConfig::patience));
    t.emplace_back("train.record_time", Field{[](RunConfig& rc, std::string_view k, std::string_view v) {
                                                rc.train.record_time = parse_bool(k, v);
                                              },
                                              [](const RunConfig& rc) {
                                                return std::string(rc.train.record_time ? "true" : "false");
                                              }});
    t.emplace_back("data.per_class_cap", size_field(&RunConfig::data, &DataConfig::per_class_cap));
    t.emplace_back("data.min_class_size", size_field(&RunConfig::data, &DataConfig::min_class_size));
    t.emplace_back("data.val_per_class", size_field(&RunConfig::data, &DataConfig::val_per_class));
    t.emplace_back("data.test_per_class", size_field(&RunConfig::data, &DataConfig::test_per_class));
    t.emplace_back("data.val_count", size_field(&RunConfig::data, &DataConfig::val_count));
    t.emplace_back("data.test_count", size_field(&RunConfig::data, &DataConfig::test_count));
    t.emplace_back("synth.ref_length", size_field(&RunConfig::sim, &SimConfig::ref_length));
    t.emplace_back("synth.num_lineages", size_field(&RunConfig::sim, &SimConfig::num_lineages));
    t.emplace_back("synth.lineage_divergence", size_field(&RunConfig::sim, &SimConfig::lineage_divergence));
    t.emplace_back("synth.within_lineage_noise", size_field(&RunConfig::sim, &SimConfig::within_lineage_noise));
    t.emplace_back("synth.samples_per_lineage", size_field(&RunConfig::sim, &SimConfig::samples_per_lineage));
    t.emplace_back("synth.indel_rate", real_field(&RunConfig::sim, &SimConfig::indel_rate));
    t.emplace_back("eval.ambiguity", Field{[](RunConfig& rc, std::string_view, std::string_view v) {
                                             rc.ambiguity = parse_rate_list(v);
                                           },
                                           [](const RunConfig& rc) { return join_rates(rc.ambiguity); }});
    t.emplace_back("eval.top", Field{[](RunConfig& rc, std::string_view k, std::string_view v) {
                                       rc.top = parse_unsigned<std::size_t>(k, v);
                                     },
                                     [](const RunConfig& rc) { return std::to_string(rc.top); }});
    return t;
  }();
  return table;
}

const Field& field(std::string_view key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

ModelConfig RunConfig::model_config(std::size_t num_classes) const {
  ModelConfig m = model;
  m.f = sketch.f;
  m.n_fragments = sketch.n;
  m.num_classes = num_classes;
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

SimConfig RunConfig::sim_config() const {
  SimConfig s = sim;
  s.seed = seed;
  return s;
}

void RunConfig::validate() const {
  sketch.validate();
  model_config(2).validate();
  train.validate();
  if (top < 1) throw ConfigError("eval.top must be at least 1");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& rc, std::string_view key, std::string_view value) {
  field(key).set(rc, key, trim(value));
}

void apply_config_text(RunConfig& rc, std::string_view text, std::vector<std::string>* seen) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    set_config_value(rc, key, std::string_view(t).substr(eq + 1));
    if (seen) seen->push_back(key);
  }
}

void apply_config_file(RunConfig& rc, const std::string& path, std::vector<std::string>* seen) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  try {
    apply_config_text(rc, text, seen);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string config_to_text(const RunConfig& rc) {
  std::string s;
  for (const auto& [name, f] : fields()) s += name + " = " + f.get(rc) + "\n";
  return s;
}

std::vector<double> parse_rate_list(std::string_view text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string item = trim(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    const double r = parse_real("eval.ambiguity", item);
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("ambiguity rate " + item + " outside [0, 1]");
    out.push_back(r);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::vector<LayerwiseStage> parse_layerwise(std::string_view text) {
  std::vector<LayerwiseStage> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string item = trim(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("--layerwise stage '" + item + "' is not layers:epochs");
    LayerwiseStage st;
    st.layers_to_add = parse_unsigned<std::size_t>("--layerwise", trim(std::string_view(item).substr(0, colon)));
    st.epochs = parse_unsigned<std::size_t>("--layerwise", trim(std::string_view(item).substr(colon + 1)));
    if (st.layers_to_add < 1) throw ConfigError("--layerwise stage '" + item + "' adds no layers");
    out.push_back(st);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace covit
