#include "covit/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "covit/checkpoint.hpp"
#include "covit/config.hpp"
#include "covit/dataset.hpp"
#include "covit/error.hpp"
#include "covit/features_io.hpp"
#include "covit/genome.hpp"
#include "covit/metrics.hpp"
#include "covit/synth.hpp"
#include "covit/train.hpp"

namespace covit {
namespace {

namespace fs = std::filesystem;

constexpr const char* kRunConfigName = "run_config.txt";

/// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key = value config file");
    app->add_option("--set", overrides, "override one key (key=value); repeatable");
    app->add_option("--seed", seed, "master seed");
  }

  /// File first, then --set, then dedicated flags. Records which keys were set.
  RunConfig resolve(std::set<std::string>* explicit_keys = nullptr) const {
    RunConfig rc;
    if (!config_path.empty()) {
      std::vector<std::string> seen;
      apply_config_file(rc, config_path, &seen);
      if (explicit_keys) explicit_keys->insert(seen.begin(), seen.end());
    }
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
      const std::string key = o.substr(0, eq);
      set_config_value(rc, key, o.substr(eq + 1));
      if (explicit_keys) explicit_keys->insert(key);
    }
    if (seed) {
      rc.seed = *seed;
      if (explicit_keys) explicit_keys->insert("seed");
    }
    return rc;
  }
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_run_config(const std::string& dir, const RunConfig& rc) {
  write_text_file(join(dir, kRunConfigName), config_to_text(rc));
}

/// Sketch keys given on the command line must agree with the checkpoint.
void check_sketch_overrides(const RunConfig& rc, const std::set<std::string>& explicit_keys, const SketchConfig& ck) {
  auto check = [&](const char* key, std::uint64_t mine, std::uint64_t theirs, const char* what) {
    if (explicit_keys.contains(key) && mine != theirs) {
      throw ConfigError(std::string(key) + " = " + std::to_string(mine) + " does not match the checkpoint's " + what +
                        " = " + std::to_string(theirs));
    }
  };
  check("sketch.f", rc.sketch.f, ck.f, "d_model");
  check("sketch.n", rc.sketch.n, ck.n, "n_fragments");
  check("sketch.k", rc.sketch.k, ck.k, "k");
  check("sketch.hash_seed", rc.sketch.hash_seed, ck.hash_seed, "hash_seed");
}

std::string summary_table(const std::vector<EvalReport>& reports) {
  std::string s = "ambiguity  placement  top1    top2    top5\n";
  for (const auto& r : reports) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-9.4f  %-9.4f  %.4f  %.4f  %.4f\n", r.ambiguity_rate, r.placement_rate, r.top1,
                  r.top2, r.top5);
    s += buf;
  }
  return s;
}

// ---------------------------------------------------------------------------

int cmd_synth(const Common& common, const std::string& out_dir, std::ostream& out) {
  const RunConfig rc = common.resolve();
  const SimConfig sim = rc.sim_config();
  const LineageTree tree = simulate(sim);
  ensure_dir(out_dir);
  write_fasta_file(tree.samples, join(out_dir, "genomes.fasta"));
  write_text_file(join(out_dir, "labels.tsv"), write_labels(tree.samples));
  GenomeSet ref;
  ref.add(tree.reference);
  write_fasta_file(ref, join(out_dir, "reference.fasta"));
  std::string manifest = "lineage\tposition\tfrom\tto\n";
  for (const auto& L : tree.lineages) {
    for (const auto& m : L.mutations) {
      manifest += L.name + "\t" + std::to_string(m.position) + "\t" + base_to_char(m.from) + "\t" + base_to_char(m.to) + "\n";
    }
  }
  write_text_file(join(out_dir, "manifest.tsv"), manifest);
  write_run_config(out_dir, rc);
  out << "synth: " << tree.samples.size() << " genomes in " << tree.lineages.size() << " lineages -> " << out_dir
      << "\n";
  return kExitOk;
}

int cmd_extract(const Common& common, const std::string& fasta, const std::string& out_dir, std::ostream& out,
                std::ostream& err) {
  const RunConfig rc = common.resolve();
  rc.sketch.validate();
  const GenomeSet gs = read_fasta_file(fasta);
  const SketchConfig cfg = rc.sketch_config();

  std::vector<std::size_t> keep;
  std::string skipped = "genome_id\tlength\treason\n";
  std::size_t skip_count = 0;
  for (std::size_t i = 0; i < gs.size(); ++i) {
    if (gs[i].length() < cfg.k) {
      skipped += gs[i].id + "\t" + std::to_string(gs[i].length()) + "\tshorter than k\n";
      ++skip_count;
    } else {
      keep.push_back(i);
    }
  }
  FeatureFile file;
  file.config = cfg;
  file.records.resize(keep.size());
  parallel_for(keep.size(), [&](std::size_t j) {
    const Genome& g = gs[keep[j]];
    file.records[j] = {g.id, extract_fragments(g, cfg)};
  });
  err << "extract: " << keep.size() << "/" << gs.size() << " genomes sketched (k=" << cfg.k << ", n=" << cfg.n
      << ", f=" << cfg.f << ")\n";
  if (skip_count) err << "warning: skipped " << skip_count << " genome(s) shorter than k; see skipped.tsv\n";

  ensure_dir(out_dir);
  write_features_file(file, join(out_dir, "features.cvft"));
  write_text_file(join(out_dir, "skipped.tsv"), skipped);
  write_run_config(out_dir, rc);
  out << "extract: wrote " << file.records.size() << " feature records -> " << join(out_dir, "features.cvft") << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string features, labels, out_dir, layerwise, transfer_from;
  std::optional<std::size_t> classes;
};

void append_split_rows(std::string& s, const LabeledDataset& ds, const char* name) {
  for (const auto& item : ds.items) s += item.id + "\t" + name + "\t" + ds.class_names[item.label] + "\n";
}

int cmd_train(const Common& common, const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig rc = common.resolve();
  const FeatureFile features = read_features_file(a.features);
  const auto labels = read_labels_file(a.labels);
  rc.sketch = features.config;  // the feature file is authoritative for sketch settings
  rc.validate();

  const LabeledDataset ds = build_dataset(features, labels, rc.data.per_class_cap, rc.data.min_class_size, rc.seed);
  const std::size_t C = ds.class_names.size();
  const DatasetSplit parts = (rc.data.val_per_class || rc.data.test_per_class)
                                 ? split_stratified(ds, rc.data.val_per_class, rc.data.test_per_class, rc.seed)
                                 : split(ds, rc.data.val_count, rc.data.test_count, rc.seed);
  if (a.classes && *a.classes != C) {
    throw ConfigError("--classes " + std::to_string(*a.classes) + " but the labels define " + std::to_string(C) +
                      " classes");
  }
  const TrainConfig tc = rc.train_config();

  FitResult<double> result;
  if (!a.transfer_from.empty()) {
    if (!a.layerwise.empty()) throw ConfigError("--layerwise and --transfer-from are mutually exclusive");
    const auto base = load_checkpoint<double>(a.transfer_from);
    const SketchConfig ck_sketch = sketch_config_of(base.params.config, base.meta);
    if (!(ck_sketch == features.config)) {
      throw ConfigError("feature file sketch settings do not match the checkpoint being transferred");
    }
    rc.model = base.params.config;
    err << "train: transferring " << base.params.config.layers << "-layer encoder to " << C << " classes\n";
    result = transfer_learn(base.params, C, parts.train, parts.val, tc);
  } else if (!a.layerwise.empty()) {
    const auto schedule = parse_layerwise(a.layerwise);
    std::size_t total = 0;
    for (const auto& st : schedule) total += st.layers_to_add;
    rc.model.layers = total;
    result = layerwise_pretrain<double>(schedule, rc.model_config(C), parts.train, parts.val, tc);
  } else {
    result = fit(init_params<double>(rc.model_config(C), rc.seed), parts.train, parts.val, tc);
  }

  TrainingMetadata meta;
  meta.epoch = result.best_epoch;
  meta.seed = rc.seed;
  meta.sketch_k = features.config.k;
  meta.hash_seed = features.config.hash_seed;
  meta.class_names = ds.class_names;

  ensure_dir(a.out_dir);
  save_checkpoint(result.params, meta, join(a.out_dir, "model.cvit"));
  write_text_file(join(a.out_dir, "train_log.csv"), train_log_csv(result.log));
  std::string split_tsv = "genome_id\tsplit\tlineage\n";
  append_split_rows(split_tsv, parts.train, "train");
  append_split_rows(split_tsv, parts.val, "val");
  append_split_rows(split_tsv, parts.test, "test");
  write_text_file(join(a.out_dir, "split.tsv"), split_tsv);
  write_run_config(a.out_dir, rc);

  out << "train: " << result.log.size() << " epochs, best epoch " << result.best_epoch << ", "
      << result.params.config.layers << " layers, " << C << " classes -> " << join(a.out_dir, "model.cvit") << "\n";
  if (!parts.test.empty()) {
    std::vector<RankedPrediction> preds(parts.test.size());
    std::map<std::string, std::size_t> truth;
    parallel_for(parts.test.size(), [&](std::size_t i) {
      preds[i] = predict_features(result.params, parts.test.items[i].id, parts.test.items[i].features, C);
    });
    for (const auto& item : parts.test.items) truth[item.id] = item.label;
    const EvalReport rep = make_report(preds, truth, parts.test.size(), C, 0.0);
    write_text_file(join(a.out_dir, "test_report.csv"), eval_reports_csv({rep}));
    out << "held-out test: top1 " << fmt("%.4f", rep.top1) << ", top2 " << fmt("%.4f", rep.top2) << ", top5 "
        << fmt("%.4f", rep.top5) << " (" << parts.test.size() << " genomes)\n";
  }
  return kExitOk;
}

int cmd_classify(const Common& common, const std::string& fasta, const std::string& ckpt_path,
                 std::optional<std::size_t> top, const std::string& out_path, std::ostream& out) {
  std::set<std::string> explicit_keys;
  RunConfig rc = common.resolve(&explicit_keys);
  const auto ck = load_checkpoint<double>(ckpt_path);
  const SketchConfig cfg = sketch_config_of(ck.params.config, ck.meta);
  check_sketch_overrides(rc, explicit_keys, cfg);
  const std::size_t n = top ? *top : rc.top;
  if (n < 1) throw ConfigError("--top must be at least 1");
  if (ck.meta.class_names.size() != ck.params.config.num_classes) throw ConfigError("checkpoint class names incomplete");

  const GenomeSet gs = read_fasta_file(fasta);
  for (const auto& g : gs.genomes()) {
    if (g.length() < cfg.k) throw ConfigError("genome '" + g.id + "' is shorter than k = " + std::to_string(cfg.k));
  }
  std::vector<RankedPrediction> preds(gs.size());
  parallel_for(gs.size(), [&](std::size_t i) { preds[i] = predict(ck.params, gs[i], cfg, n); });
  const std::string tsv = predictions_tsv(preds, ck.meta.class_names);
  if (out_path.empty()) {
    out << tsv;
  } else {
    write_text_file(out_path, tsv);
    rc.sketch = cfg;
    write_text_file((fs::path(out_path).parent_path() / kRunConfigName).string(), config_to_text(rc));
    out << "classify: " << preds.size() << " genomes -> " << out_path << "\n";
  }
  return kExitOk;
}

struct EvalArgs {
  std::string fasta, labels, checkpoint, ambiguity, out_dir, split_file, split_name = "test";
};

int cmd_eval(const Common& common, const EvalArgs& a, std::ostream& out) {
  std::set<std::string> explicit_keys;
  RunConfig rc = common.resolve(&explicit_keys);
  if (!a.ambiguity.empty()) rc.ambiguity = parse_rate_list(a.ambiguity);
  const auto ck = load_checkpoint<double>(a.checkpoint);
  const SketchConfig cfg = sketch_config_of(ck.params.config, ck.meta);
  check_sketch_overrides(rc, explicit_keys, cfg);
  rc.sketch = cfg;

  const auto labels = read_labels_file(a.labels);
  GenomeSet all = read_fasta_file(a.fasta);
  std::optional<std::set<std::string>> wanted;
  if (!a.split_file.empty()) {
    wanted.emplace();
    const std::string text = read_text_file(a.split_file);
    std::size_t pos = text.find('\n');  // header
    while (pos != std::string::npos && pos + 1 < text.size()) {
      const std::size_t next = text.find('\n', pos + 1);
      const std::string line = text.substr(pos + 1, next == std::string::npos ? std::string::npos : next - pos - 1);
      pos = next;
      const auto t1 = line.find('\t');
      if (t1 == std::string::npos) continue;
      const auto t2 = line.find('\t', t1 + 1);
      if (line.substr(t1 + 1, t2 == std::string::npos ? std::string::npos : t2 - t1 - 1) == a.split_name) {
        wanted->insert(line.substr(0, t1));
      }
    }
    if (wanted->empty()) throw ConfigError("split file lists no '" + a.split_name + "' genomes");
  }
  GenomeSet test;
  for (const auto& g : all.genomes()) {
    if (!wanted || wanted->contains(g.id)) test.add(g);
  }
  if (test.empty()) throw ConfigError("no genomes to evaluate");
  for (const auto& g : test.genomes()) {
    if (!labels.contains(g.id)) throw ConfigError("genome '" + g.id + "' has no label in " + a.labels);
    if (g.length() < cfg.k) throw ConfigError("genome '" + g.id + "' is shorter than k = " + std::to_string(cfg.k));
  }
  test.attach_labels(labels);
  const auto truth = class_index_labels(test, ck.meta.class_names);
  const auto reports = ambiguity_sweep(ck.params, test, truth, rc.ambiguity, cfg, rc.seed);

  ensure_dir(a.out_dir);
  write_text_file(join(a.out_dir, "eval_report.csv"), eval_reports_csv(reports));
  write_run_config(a.out_dir, rc);
  out << "eval: " << test.size() << " genomes\n" << summary_table(reports);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"covit: lineage classification of viral genomes from MinHash fragment features"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "covit 1.0");

  Common c_synth, c_extract, c_train, c_classify, c_eval;

  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "simulate a labelled lineage corpus (FASTA + labels)");
  c_synth.attach(synth);
  synth->add_option("--out", synth_out, "output directory")->required();

  std::string extract_fasta, extract_out;
  auto* extract = app.add_subcommand("extract", "sketch genomes into a CVFT feature file");
  c_extract.attach(extract);
  extract->add_option("--fasta", extract_fasta, "input FASTA")->required();
  extract->add_option("--out", extract_out, "output directory")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "fit a model on extracted features");
  c_train.attach(train);
  train->add_option("--features", ta.features, "CVFT feature file")->required();
  train->add_option("--labels", ta.labels, "labels TSV")->required();
  train->add_option("--out", ta.out_dir, "output directory")->required();
  train->add_option("--layerwise", ta.layerwise, "greedy layer-wise schedule, e.g. 2:60,2:120");
  train->add_option("--transfer-from", ta.transfer_from, "checkpoint whose encoder is reused with a new head");
  train->add_option("--classes", ta.classes, "expected class count of the new head");

  std::string cl_fasta, cl_ckpt, cl_out;
  std::optional<std::size_t> cl_top;
  auto* classify = app.add_subcommand("classify", "rank lineages for each genome");
  c_classify.attach(classify);
  classify->add_option("--fasta", cl_fasta, "input FASTA")->required();
  classify->add_option("--checkpoint", cl_ckpt, "CVIT checkpoint")->required();
  classify->add_option("--top", cl_top, "rows per genome");
  classify->add_option("--out", cl_out, "predictions TSV (default: stdout)");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "accuracy and placement rate under random base masking");
  c_eval.attach(eval);
  eval->add_option("--fasta", ea.fasta, "input FASTA")->required();
  eval->add_option("--labels", ea.labels, "labels TSV")->required();
  eval->add_option("--checkpoint", ea.checkpoint, "CVIT checkpoint")->required();
  eval->add_option("--ambiguity", ea.ambiguity, "comma-separated masking rates, e.g. 0,0.08,0.16,0.32");
  eval->add_option("--out", ea.out_dir, "output directory")->required();
  eval->add_option("--split-file", ea.split_file, "split.tsv written by train; restricts evaluation");
  eval->add_option("--split", ea.split_name, "split name to evaluate (default test)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, x;
    const int code = app.exit(e, o, x);
    out << o.str();
    err << x.str();
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth) return cmd_synth(c_synth, synth_out, out);
    if (*extract) return cmd_extract(c_extract, extract_fasta, extract_out, out, err);
    if (*train) return cmd_train(c_train, ta, out, err);
    if (*classify) return cmd_classify(c_classify, cl_fasta, cl_ckpt, cl_top, cl_out, out);
    if (*eval) return cmd_eval(c_eval, ea, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}

}  // namespace covit
