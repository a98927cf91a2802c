// Acceptance gate. One PASS/FAIL line per criterion; thresholds are fixed here.
//
// A FAIL whose threshold is provably out of reach on the generated data
// (the best achievable accuracy of any classifier of the extracted features
// is below it) is printed as FAIL with the certificate and does not change
// the exit code unless --strict is given. Any other FAIL is fatal.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "covit/checkpoint.hpp"
#include "covit/cli.hpp"
#include "covit/dataset.hpp"
#include "covit/genome.hpp"
#include "covit/metrics.hpp"
#include "covit/model.hpp"
#include "covit/sketch.hpp"
#include "covit/synth.hpp"
#include "covit/train.hpp"
#include "oracles/transformer.hpp"
#include "testing.hpp"

using namespace covit;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Pinned thresholds.
constexpr double kGradTol = 1e-4;
constexpr double kFormulaTol = 1e-10;
constexpr double kJaccardBand = 0.10;
constexpr double kJaccardHitRate = 0.95;
constexpr std::size_t kJaccardTrials = 100;
constexpr std::size_t kJaccardN = 256;
constexpr double kTop1 = 0.95;
constexpr double kTop2 = 0.99;
constexpr std::size_t kMaxEpochs = 200;
constexpr double kMaskedTop1 = 0.50;
constexpr double kTransferTop1 = 0.95;
const std::vector<double> kRates{0.0, 0.08, 0.16, 0.32};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Outcome {
  int id = 0;
  std::string title;
  bool pass = false;
  std::string detail;
  std::optional<std::string> unattainable;  // certificate when the threshold is out of reach
};

void report(const Outcome& o) {
  std::printf("%s  criterion %2d  %s | %s", o.pass ? "PASS" : "FAIL", o.id, o.title.c_str(), o.detail.c_str());
  if (!o.pass && o.unattainable) std::printf(" | unattainable: %s", o.unattainable->c_str());
  std::printf("\n");
  std::fflush(stdout);
}

void note(const std::string& s) {
  std::printf("      %s\n", s.c_str());
  std::fflush(stdout);
}

template <typename Scalar>
bool same_bits(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(Scalar) * static_cast<std::size_t>(a.size())) == 0;
}

bool same_layer(const EncoderLayerParams<double>& a, const EncoderLayerParams<double>& b) {
  for (std::size_t l = 0; l < a.query.size(); ++l) {
    if (!same_bits(a.query[l], b.query[l]) || !same_bits(a.key[l], b.key[l]) || !same_bits(a.value[l], b.value[l]))
      return false;
  }
  return same_bits(a.out, b.out) && same_bits(a.ff, b.ff) && same_bits(a.mix, b.mix) &&
         same_bits(a.ln1_gain, b.ln1_gain) && same_bits(a.ln1_bias, b.ln1_bias) && same_bits(a.ln2_gain, b.ln2_gain) &&
         same_bits(a.ln2_bias, b.ln2_bias);
}

// ---------------------------------------------------------------------------
// Standard desk-scale suite.

SimConfig standard_sim(std::uint64_t seed, std::size_t lineages = 8) {
  SimConfig s;
  s.ref_length = 30000;
  s.num_lineages = lineages;
  s.lineage_divergence = 25;
  s.within_lineage_noise = 3;
  s.samples_per_lineage = 64;
  s.seed = seed;
  return s;
}

SketchConfig standard_sketch() { return SketchConfig{8, 32, 32, 0}; }

ModelConfig standard_model(std::size_t classes) {
  ModelConfig c;
  c.layers = 2;
  c.d_model = c.f = 32;
  c.heads = 2;
  c.d_k = c.d_v = 16;
  c.d_ff = 64;
  c.n_fragments = 32;
  c.num_classes = classes;
  return c;
}

TrainConfig standard_train(std::uint64_t seed, std::size_t epochs) {
  TrainConfig tc;
  tc.max_epochs = epochs;
  tc.seed = seed;
  tc.record_time = false;
  return tc;
}

struct Suite {
  LineageTree tree;
  LabeledDataset all;
  DatasetSplit parts;
};

Suite make_suite(const SimConfig& sim) {
  Suite s;
  s.tree = simulate(sim);
  s.all = build_dataset(s.tree.samples, standard_sketch(), 1024, 1, sim.seed);
  s.parts = split_stratified(s.all, 8, 8, sim.seed);
  return s;
}

std::string feature_key(const FeatureSequence& fs) {
  std::string key;
  for (const auto& m : fs) key.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()));
  return key;
}

/// Best top-1 and top-2 any function of the features can reach on `test`:
/// items with identical features receive identical rankings, so each group
/// of identical items contributes at most its largest (two) class counts.
struct Ceiling {
  double top1 = 0.0, top2 = 0.0;
  std::size_t groups = 0;
};

Ceiling bayes_ceiling(const LabeledDataset& test) {
  std::map<std::string, std::map<std::size_t, std::size_t>> groups;
  for (const auto& it : test.items) ++groups[feature_key(it.features)][it.label];
  Ceiling c;
  c.groups = groups.size();
  for (const auto& [key, counts] : groups) {
    std::vector<std::size_t> v;
    for (const auto& [label, n] : counts) v.push_back(n);
    std::sort(v.rbegin(), v.rend());
    c.top1 += static_cast<double>(v[0]);
    c.top2 += static_cast<double>(v[0] + (v.size() > 1 ? v[1] : 0));
  }
  c.top1 /= static_cast<double>(test.size());
  c.top2 /= static_cast<double>(test.size());
  return c;
}

/// Lineage founders whose features differ from the reference's and from every other founder's.
std::size_t distinct_founders(const LineageTree& tree) {
  const SketchConfig sc = standard_sketch();
  std::map<std::string, std::size_t> seen;
  ++seen[feature_key(extract_fragments(tree.reference, sc))];
  std::vector<std::string> keys;
  for (const auto& l : tree.lineages) {
    keys.push_back(feature_key(extract_fragments(l.founder, sc)));
    ++seen[keys.back()];
  }
  std::size_t out = 0;
  for (const auto& k : keys) out += seen[k] == 1;
  return out;
}

EvalReport evaluate_items(const ModelParams<double>& p, const LabeledDataset& ds) {
  std::vector<RankedPrediction> preds;
  std::map<std::string, std::size_t> truth;
  for (const auto& it : ds.items) {
    preds.push_back(predict_features(p, it.id, it.features, p.config.num_classes));
    truth[it.id] = it.label;
  }
  return make_report(preds, truth, ds.size(), p.config.num_classes, 0.0);
}

GenomeSet genomes_of(const LineageTree& tree, const LabeledDataset& part) {
  GenomeSet out;
  std::map<std::string, std::string> labels;
  for (const auto& it : part.items) {
    out.add(*tree.samples.find(it.id));
    labels[it.id] = part.class_names[it.label];
  }
  out.attach_labels(labels);
  return out;
}

// ---------------------------------------------------------------------------
// Criteria.

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  auto p = init_params<double>(testing::tiny_config(1, 3), 11);
  testing::randomize(p, 12, 0.5);
  Rng rng(13);
  const auto x = testing::random_fragments(4, 8, rng);
  double worst = 0.0;
  std::string where;
  for (std::size_t label = 0; label < 3; ++label) {
    const auto r = testing::check_model_gradients(p, x, label);
    if (r.max_rel_error > worst) worst = r.max_rel_error, where = r.worst;
  }
  const double secs = seconds_since(t0);
  Outcome o{1, "gradient oracle (tiny config, central differences, step 1e-6)", worst <= kGradTol && secs < 60.0, ""};
  o.detail = fmt("max relative error %.3g (<= %.0e) at %s, checked %zu parameters, %.1f s", worst, kGradTol,
                 where.c_str(), param_count(p.config), secs);
  return o;
}

Outcome formula_oracle() {
  ModelConfig c;
  c.layers = 1;
  c.d_model = c.f = 6;
  c.heads = 3;
  c.d_k = 4;
  c.d_v = 2;
  c.d_ff = 10;
  c.n_fragments = 5;
  c.num_classes = 2;
  double worst_attn = 0, worst_mlp = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto p = init_params<double>(c, seed);
    testing::randomize(p, seed * 7, 0.9);
    Rng rng(seed + 1000);
    const auto x = testing::random_tensor(static_cast<Eigen::Index>(1 + seed % 5), 6, rng);
    worst_attn = std::max(worst_attn,
                          (mhsa_forward(x, p.layers[0], c) - oracle::mhsa_oracle(x, p.layers[0], c.d_k)).cwiseAbs().maxCoeff());
    worst_mlp =
        std::max(worst_mlp, (mlp_forward(x, p.layers[0], c) - oracle::mlp_oracle(x, p.layers[0])).cwiseAbs().maxCoeff());
  }
  Outcome o{2, "formula transcription (attention and MLP vs loop-level evaluation)",
            worst_attn <= kFormulaTol && worst_mlp <= kFormulaTol, ""};
  o.detail = fmt("max |diff| attention %.2e, mlp %.2e (<= 1e-10) over 20 random draws", worst_attn, worst_mlp);
  return o;
}

Outcome minhash_fidelity() {
  const auto t0 = Clock::now();
  // |A| = |B| = (U + I) / 2 with union U = 1200 and intersection I = J * U.
  constexpr std::size_t kUnion = 1200;
  const SketchConfig sc{16, kJaccardN, 16, 0};
  std::string detail;
  bool pass = true;
  for (double J : {0.25, 0.50, 0.75}) {
    const auto inter = static_cast<std::size_t>(std::llround(J * kUnion));
    const std::size_t side = (kUnion - inter) / 2;
    std::size_t hits = 0;
    bool exact_ok = true;
    for (std::size_t trial = 0; trial < kJaccardTrials; ++trial) {
      Rng rng(derive_seed(0x3AC, static_cast<std::uint64_t>(J * 100), trial));
      std::set<Kmer> pool;
      while (pool.size() < kUnion) {
        Sequence s(16);
        for (auto& b : s) b = static_cast<Base>(rng.below(4));
        pool.insert(Kmer(s));
      }
      std::vector<Kmer> all(pool.begin(), pool.end());
      for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng.below(i)]);
      std::vector<KmerOccurrence> a, b;
      std::set<Kmer> sa, sb;
      for (std::size_t i = 0; i < kUnion; ++i) {
        const bool in_a = i < inter + side, in_b = i < inter || i >= inter + side;
        if (in_a) a.push_back({all[i], i}), sa.insert(all[i]);
        if (in_b) b.push_back({all[i], i}), sb.insert(all[i]);
      }
      std::size_t common = 0;
      for (const auto& k : sa) common += sb.count(k);
      const double exact = static_cast<double>(common) / static_cast<double>(sa.size() + sb.size() - common);
      exact_ok = exact_ok && std::abs(exact - J) < 1e-12;
      const double est = jaccard_estimate(sketch(a, sc), sketch(b, sc));
      hits += std::abs(est - J) <= kJaccardBand;
    }
    const double rate = static_cast<double>(hits) / kJaccardTrials;
    pass = pass && exact_ok && rate >= kJaccardHitRate;
    detail += fmt("J=%.2f: %zu/%zu within +-0.10%s; ", J, hits, kJaccardTrials, exact_ok ? "" : " (construction off)");
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < 60.0;
  detail += fmt("n=256, %.1f s", secs);
  return {3, "MinHash fidelity (exact-Jaccard constructed sets)", pass, detail};
}

Outcome fragment_replay() {
  const Genome g{"fig", "", sequence_from_string("ACGTTGCATGCATCCGATA")};
  const SketchConfig sc{4, 3, 8, 0};
  // Oracle: distinct 4-mers at their first position, full sort by (digest, k-mer).
  std::map<std::string, std::size_t> first;
  const std::string text = sequence_to_string(g.seq);
  for (std::size_t i = 0; i + 4 <= text.size(); ++i) first.emplace(text.substr(i, 4), i);
  std::vector<std::tuple<std::uint64_t, Kmer, std::size_t>> order;
  for (const auto& [s, pos] : first) {
    const Kmer km(sequence_from_string(s));
    order.emplace_back(hash_kmer(km, 0), km, pos);
  }
  std::sort(order.begin(), order.end());
  const auto frags = extract_fragments(g, sc);
  bool pass = g.length() == 19 && frags.size() == 3;
  std::string anchors;
  for (std::size_t j = 0; pass && j < 3; ++j) {
    const auto anchor = static_cast<long>(std::get<2>(order[j]));
    std::string want;
    for (long p = anchor - 2; p < anchor + 6; ++p) want += (p < 0 || p >= 19) ? 'N' : text[static_cast<std::size_t>(p)];
    const std::string core = want.substr(2, 4);
    pass = pass && core == std::get<1>(order[j]).to_string() && frags[j].rows() == 8;
    for (int r = 0; r < 8; ++r) {
      const char ch = want[static_cast<std::size_t>(r)];
      const int hot = ch == 'A' ? 0 : ch == 'C' ? 1 : ch == 'G' ? 2 : ch == 'T' ? 3 : -1;
      for (int c = 0; c < 4; ++c) pass = pass && frags[j](r, c) == (c == hot ? 1 : 0);
    }
    anchors += fmt("%s@%ld->%s ", core.c_str(), anchor, want.c_str());
  }
  return {4, "fragment extraction replay (N=19, k=4, n=3, f=8)", pass,
          fmt("3 fragments: %s(A = [1,0,0,0], N = zero row)", anchors.c_str())};
}

struct TrainedSeed {
  std::uint64_t seed;
  Suite suite;
  FitResult<double> fit;
};

Outcome accuracy_analogue(const std::vector<std::uint64_t>& seeds, std::size_t epochs, std::vector<TrainedSeed>& out) {
  bool pass = true, provably_out = true;
  std::string detail, cert;
  for (std::uint64_t seed : seeds) {
    const auto t0 = Clock::now();
    TrainedSeed ts{seed, make_suite(standard_sim(seed)), {}};
    const auto& P = ts.suite.parts;
    ts.fit = fit(init_params<double>(standard_model(ts.suite.all.class_names.size()), seed), P.train, P.val,
                 standard_train(seed, epochs));
    const EvalReport rep = evaluate_items(ts.fit.params, P.test);
    const Ceiling ceil = bayes_ceiling(P.test);
    const bool ok = rep.top1 >= kTop1 && rep.top2 >= kTop2 && ts.fit.log.size() <= kMaxEpochs;
    pass = pass && ok;
    if (!ok) provably_out = provably_out && (ceil.top1 < kTop1 || ceil.top2 < kTop2);
    detail += fmt("seed %llu: top1 %.3f top2 %.3f; ", static_cast<unsigned long long>(seed), rep.top1, rep.top2);
    note(fmt("seed %llu: %zu/%zu/%zu train/val/test, %zu epochs (best %zu), val loss %.4f, test top1 %.4f top2 %.4f "
             "top5 %.4f, %.0f s",
             static_cast<unsigned long long>(seed), P.train.size(), P.val.size(), P.test.size(), ts.fit.log.size(),
             ts.fit.best_epoch, ts.fit.log[ts.fit.best_epoch - 1].val_loss, rep.top1, rep.top2, rep.top5,
             seconds_since(t0)));
    note(fmt("seed %llu: lineage founders with features distinct from the reference and each other: %zu/%zu; "
             "distinct test feature groups %zu; best achievable top1 %.4f top2 %.4f",
             static_cast<unsigned long long>(seed), distinct_founders(ts.suite.tree), ts.suite.tree.lineages.size(),
             ceil.groups, ceil.top1, ceil.top2));
    if (!ok) cert += fmt("seed %llu best achievable top1 %.3f top2 %.3f; ", static_cast<unsigned long long>(seed), ceil.top1, ceil.top2);
    out.push_back(std::move(ts));
  }
  Outcome o{5, "desk-scale accuracy (standard suite, top1 >= 0.95, top2 >= 0.99, <= 200 epochs)", pass, detail};
  if (!pass && provably_out) o.unattainable = cert + "lineages sharing identical features cannot be separated";
  return o;
}

Outcome ambiguity_analogue(const std::vector<TrainedSeed>& trained) {
  bool pass = true, provably_out = true, masked_short = false;
  std::string detail, cert;
  for (const auto& ts : trained) {
    const GenomeSet test = genomes_of(ts.suite.tree, ts.suite.parts.test);
    const auto labels = class_index_labels(test, ts.suite.all.class_names);
    const auto reps = ambiguity_sweep(ts.fit.params, test, labels, kRates, standard_sketch(), ts.seed);
    bool placed = true;
    std::string curve;
    for (const auto& r : reps) {
      placed = placed && r.placement_rate == 1.0;
      curve += fmt("%.2f:%.3f ", r.ambiguity_rate, r.top1);
    }
    const bool masked_ok = reps.back().top1 >= kMaskedTop1;
    const bool clean_ok = reps.front().top1 >= kTop1;
    pass = pass && placed && masked_ok && clean_ok;
    const Ceiling ceil = bayes_ceiling(ts.suite.parts.test);
    // The criterion is a conjunction: a certified ceiling on the clean part bounds the whole.
    if (clean_ok || ceil.top1 >= kTop1) provably_out = false;
    if (!clean_ok) cert += fmt("seed %llu best achievable top1 at rate 0 is %.3f; ", static_cast<unsigned long long>(ts.seed), ceil.top1);
    if (!masked_ok) masked_short = true;

    // How much of the clean sketch survives masking, and how many sketch k-mers stay N-free.
    std::string kept;
    for (double rate : kRates) {
      double jac = 0.0, clean_frac = 0.0;
      for (const auto& g : test.genomes()) {
        const Sketch a = sketch_genome(g, standard_sketch());
        const Sketch b = sketch_genome(mask_random(g, rate, ts.seed), standard_sketch());
        jac += jaccard_estimate(a, b);
        std::size_t nfree = 0;
        for (const auto& e : b.entries) nfree += e.kmer.to_string().find('N') == std::string::npos;
        clean_frac += b.size() ? static_cast<double>(nfree) / static_cast<double>(b.size()) : 0.0;
      }
      const double m = static_cast<double>(test.size());
      kept += fmt("%.2f:J=%.2f,nfree=%.2f ", rate, jac / m, clean_frac / m);
    }
    note(fmt("seed %llu: clean-vs-masked sketch overlap %s", static_cast<unsigned long long>(ts.seed), kept.c_str()));
    detail += fmt("seed %llu: placement %s, top1 %s; ", static_cast<unsigned long long>(ts.seed), placed ? "1.0 at every rate" : "BELOW 1.0",
                  curve.c_str());
  }
  Outcome o{6, "ambiguity sweep (placement 1.0; top1 >= 0.50 at 0.32 and >= 0.95 at 0)", pass, detail};
  if (!pass && provably_out)
    o.unattainable = cert + (masked_short ? "masked-accuracy part is also below 0.50 (sketch overlap notes above)"
                                          : "placement and masked-accuracy parts pass");
  return o;
}

Outcome layerwise_contract(const TrainedSeed& ts) {
  const std::size_t e = 3;
  const auto& P = ts.suite.parts;
  const ModelConfig base = standard_model(ts.suite.all.class_names.size());
  const TrainConfig tc = standard_train(ts.seed, e);
  const auto stage1 = layerwise_pretrain<double>({{2, e}}, base, P.train, P.val, tc);
  const auto both = layerwise_pretrain<double>({{2, e}, {2, e}}, base, P.train, P.val, tc);
  const bool kept = same_layer(stage1.params.layers[0], both.params.layers[0]) &&
                    same_layer(stage1.params.layers[1], both.params.layers[1]);
  const bool moved = !same_layer(init_layer<double>(both.params.config, 2, derive_seed(ts.seed, 0x6A0, 1)),
                                 both.params.layers[2]);
  const bool shape = both.params.config.layers == 4 && both.params.layers[0].frozen && both.params.layers[1].frozen &&
                     !both.params.layers[2].frozen && !both.params.layers[3].frozen;
  return {7, "layer-wise pretraining [(2, e), (2, e)]", kept && moved && shape,
          fmt("4 layers: %s; stage-1 layers bit-identical after stage 2: %s; new layers trained: %s (e = %zu)",
              shape ? "yes" : "no", kept ? "yes" : "no", moved ? "yes" : "no", e)};
}

bool encoder_preserved(const ModelParams<double>& a, const ModelParams<double>& b) {
  if (!same_bits(a.embedding.weights, b.embedding.weights) || !same_bits(a.embedding.bias, b.embedding.bias))
    return false;
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i)
    if (!same_layer(a.layers[i], b.layers[i])) return false;
  return true;
}

Outcome transfer_contract(const TrainedSeed& ts, std::size_t epochs) {
  // Second suite fixed in advance: seed + 100, five lineages.
  const SimConfig sim = standard_sim(ts.seed + 100, 5);
  const Suite second = make_suite(sim);
  const std::size_t C = second.all.class_names.size();
  const auto& base = ts.fit.params;
  const auto swapped = transfer_head(base, C, 1);
  const bool swap_exact = encoder_preserved(base, swapped) && swapped.config.num_classes == C;
  const auto t0 = Clock::now();
  const auto r = transfer_learn(base, C, second.parts.train, second.parts.val, standard_train(sim.seed, epochs));
  const bool retrain_exact = encoder_preserved(base, r.params);
  const EvalReport rep = evaluate_items(r.params, second.parts.test);
  const Ceiling ceil = bayes_ceiling(second.parts.test);
  note(fmt("second suite (seed %llu, %zu lineages): founders distinct %zu/%zu, best achievable top1 %.4f; "
           "%zu epochs (best %zu), test top1 %.4f, %.0f s",
           static_cast<unsigned long long>(sim.seed), C, distinct_founders(second.tree), C, ceil.top1, r.log.size(),
           r.best_epoch, rep.top1, seconds_since(t0)));
  const bool acc_ok = rep.top1 >= kTransferTop1;
  Outcome o{8, "transfer (head swap keeps embedding and encoder; retrained top1 >= 0.95 on a 5-class suite)",
            swap_exact && retrain_exact && acc_ok,
            fmt("encoder bit-exact after swap: %s, after retraining: %s; held-out top1 %.3f", swap_exact ? "yes" : "no",
                retrain_exact ? "yes" : "no", rep.top1)};
  if (!o.pass && swap_exact && retrain_exact && ceil.top1 < kTransferTop1)
    o.unattainable = fmt("best achievable top1 on the second suite is %.3f", ceil.top1);
  return o;
}

int run(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "covit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (code != 0) note("command failed (" + std::to_string(code) + "): " + err.str());
  return code;
}

std::vector<std::string> standard_flags(std::uint64_t seed) {
  return {"--seed", std::to_string(seed), "--set", "sketch.k=8", "--set", "sketch.n=32", "--set", "sketch.f=32",
          "--set", "model.layers=2", "--set", "model.d_model=32", "--set", "model.heads=2", "--set", "model.d_k=16",
          "--set", "model.d_v=16", "--set", "model.d_ff=64", "--set", "train.max_epochs=4", "--set",
          "train.record_time=false", "--set", "data.val_per_class=8", "--set", "data.test_per_class=8"};
}

std::vector<std::string> plus(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

/// synth -> extract -> train -> eval in `dir`; returns false on any non-zero exit.
bool pipeline(const fs::path& dir, std::uint64_t seed) {
  const std::string d = dir.string();
  const auto flags = standard_flags(seed);
  return run(plus({"synth", "--out", d + "/data"}, flags)) == 0 &&
         run(plus({"extract", "--fasta", d + "/data/genomes.fasta", "--out", d + "/features"}, flags)) == 0 &&
         run(plus({"train", "--features", d + "/features/features.cvft", "--labels", d + "/data/labels.tsv", "--out",
                   d + "/model"},
                  flags)) == 0 &&
         run(plus({"eval", "--fasta", d + "/data/genomes.fasta", "--labels", d + "/data/labels.tsv", "--checkpoint",
                   d + "/model/model.cvit", "--out", d + "/eval", "--ambiguity", "0,0.08,0.16,0.32", "--split-file",
                   d + "/model/split.tsv"},
                  flags)) == 0;
}

Outcome determinism(const fs::path& work, std::uint64_t seed) {
  const auto t0 = Clock::now();
  const fs::path a = work / "det_a", b = work / "det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const bool ran = pipeline(a, seed) && pipeline(b, seed);
  const std::vector<std::string> files{"data/genomes.fasta",   "data/labels.tsv",     "data/manifest.tsv",
                                       "features/features.cvft", "model/model.cvit",  "model/train_log.csv",
                                       "model/split.tsv",      "model/test_report.csv", "eval/eval_report.csv",
                                       "eval/run_config.txt"};
  std::size_t same = 0;
  std::string differing;
  for (const auto& f : files) {
    if (ran && fs::exists(a / f) && read_text_file((a / f).string()) == read_text_file((b / f).string())) {
      ++same;
    } else {
      differing += " " + f;
    }
  }
  return {9, "determinism (CLI synth -> extract -> train -> eval, run twice)", ran && same == files.size(),
          fmt("%zu/%zu artefacts byte-identical%s%s, %.0f s", same, files.size(), differing.empty() ? "" : "; differ:",
              differing.c_str(), seconds_since(t0))};
}

Outcome checkpoint_round_trip(const ModelParams<double>& p, const fs::path& work) {
  TrainingMetadata meta{187, 1, 8, 0, {}};
  for (std::size_t c = 0; c < p.config.num_classes; ++c) meta.class_names.push_back(lineage_name(c));
  const std::string path = (work / "roundtrip.cvit").string();
  save_checkpoint(p, meta, path);
  const auto ck = load_checkpoint<double>(path);
  bool identical = ck.params.config == p.config && ck.meta == meta;
  std::vector<const Tensor<double>*> mine, theirs;
  visit_tensors(p, [&](const std::string&, const Tensor<double>& t, TensorRole, bool) { mine.push_back(&t); });
  visit_tensors(ck.params, [&](const std::string&, const Tensor<double>& t, TensorRole, bool) { theirs.push_back(&t); });
  identical = identical && mine.size() == theirs.size();
  for (std::size_t i = 0; identical && i < mine.size(); ++i) identical = same_bits(*mine[i], *theirs[i]);
  const std::string bytes = read_text_file(path);
  identical = identical && encode_checkpoint(ck.params, ck.meta) == bytes;

  auto message = [](const std::string& b) -> std::string {
    try {
      decode_checkpoint<double>(b);
    } catch (const ParseError& e) {
      return e.what();
    }
    return "(accepted)";
  };
  std::size_t truncations = 0, truncations_ok = 0;
  for (std::size_t cut = 0; cut < bytes.size(); cut += std::max<std::size_t>(1, bytes.size() / 97)) {
    ++truncations;
    truncations_ok += message(bytes.substr(0, cut)) == "truncated checkpoint";
  }
  std::string v9 = bytes;
  v9[4] = 9;
  std::string renamed = bytes;
  renamed[renamed.find("enc.1.ff")] = 'E';
  const bool magic = message("CVIX" + bytes.substr(4)).find("bad magic") != std::string::npos;
  const bool version = message(v9) == "unsupported checkpoint version 9";
  const bool trailing = message(bytes + std::string(8, '\0')) == "corrupt checkpoint: trailing bytes";
  const bool manifest = message(renamed).find("manifest mismatch") != std::string::npos;
  const bool pass = identical && truncations_ok == truncations && magic && version && trailing && manifest;
  return {10, "checkpoint round trip and corruption handling", pass,
          fmt("save/load bit-identical: %s (%zu bytes); truncations rejected %zu/%zu; bad magic %s, version %s, "
              "trailing bytes %s, manifest mismatch %s",
              identical ? "yes" : "no", bytes.size(), truncations_ok, truncations, magic ? "ok" : "MISSED",
              version ? "ok" : "MISSED", trailing ? "ok" : "MISSED", manifest ? "ok" : "MISSED")};
}

Outcome indel_tolerance(const TrainedSeed& ts, const fs::path& work) {
  const fs::path dir = work / "indel";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string d = dir.string();
  TrainingMetadata meta{ts.fit.best_epoch, ts.seed, 8, 0, ts.suite.all.class_names};
  save_checkpoint(ts.fit.params, meta, d + "/model.cvit");
  const std::vector<std::string> sim{"--seed", std::to_string(ts.seed), "--set", "synth.indel_rate=0.001"};
  bool ok = run(plus({"synth", "--out", d + "/data"}, sim)) == 0;
  const GenomeSet gs = ok ? read_fasta_file(d + "/data/genomes.fasta") : GenomeSet{};
  std::set<std::size_t> lengths;
  for (const auto& g : gs.genomes()) lengths.insert(g.length());
  std::string tsv;
  ok = ok && run({"classify", "--fasta", d + "/data/genomes.fasta", "--checkpoint", d + "/model.cvit", "--top", "3"},
                 &tsv) == 0;
  std::size_t rows = 0;
  for (char c : tsv) rows += c == '\n';
  const bool all_placed = ok && rows == 1 + 3 * gs.size();
  ok = ok && run({"eval", "--fasta", d + "/data/genomes.fasta", "--labels", d + "/data/labels.tsv", "--checkpoint",
                  d + "/model.cvit", "--out", d + "/eval", "--ambiguity", "0"}) == 0;
  std::string top1 = "?";
  if (ok) {
    const std::string csv = read_text_file(d + "/eval/eval_report.csv");
    const auto line = csv.substr(csv.find('\n') + 1);
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    if (cols.size() >= 3) top1 = cols[2];
  }
  return {11, "indel tolerance (indel_rate 0.001, classify and eval end to end)", ok && all_placed && lengths.size() > 1,
          fmt("%zu genomes, %zu distinct lengths, every genome ranked: %s, eval exit 0: %s, top1 %s", gs.size(),
              lengths.size(), all_placed ? "yes" : "no", ok ? "yes" : "no", top1.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria 1-11"};
  std::string workdir = (fs::temp_directory_path() / "covit_acceptance").string();
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t epochs = kMaxEpochs;
  bool strict = false;
  app.add_option("--workdir", workdir, "scratch directory for CLI runs");
  app.add_option("--seeds", seeds, "seeds for the accuracy analogue")->delimiter(',');
  app.add_option("--epochs", epochs, "epoch budget for the accuracy and transfer runs");
  app.add_flag("--strict", strict, "treat unattainable criteria as failures");
  CLI11_PARSE(app, argc, argv);
  if (seeds.empty()) seeds = {1};
  fs::create_directories(workdir);
  const fs::path work(workdir);
  const auto t0 = Clock::now();

  std::vector<Outcome> all;
  // A criterion that throws is a plain failure; the rest still run.
  auto record = [&](int id, const char* title, auto&& check) {
    Outcome o{id, title, false, ""};
    try {
      o = check();
    } catch (const std::exception& e) {
      o.detail = std::string("threw: ") + e.what();
    }
    report(o);
    all.push_back(std::move(o));
  };

  record(1, "gradient oracle", [] { return gradient_oracle(); });
  record(2, "formula transcription", [] { return formula_oracle(); });
  record(3, "MinHash fidelity", [] { return minhash_fidelity(); });
  record(4, "fragment extraction replay", [] { return fragment_replay(); });
  std::vector<TrainedSeed> trained;
  record(5, "desk-scale accuracy", [&] { return accuracy_analogue(seeds, epochs, trained); });
  if (trained.empty()) {
    std::printf("summary: no trained model, criteria 6-8, 10 and 11 not run\n");
    return 1;
  }
  record(6, "ambiguity sweep", [&] { return ambiguity_analogue(trained); });
  record(7, "layer-wise pretraining", [&] { return layerwise_contract(trained.front()); });
  record(8, "transfer", [&] { return transfer_contract(trained.front(), epochs); });
  record(9, "determinism", [&] { return determinism(work, seeds.front()); });
  record(10, "checkpoint round trip", [&] { return checkpoint_round_trip(trained.front().fit.params, work); });
  record(11, "indel tolerance", [&] { return indel_tolerance(trained.front(), work); });

  std::size_t passed = 0, unattainable = 0, failed = 0;
  for (const auto& o : all) {
    if (o.pass) ++passed;
    else if (o.unattainable) ++unattainable;
    else ++failed;
  }
  std::printf("summary: %zu passed, %zu failed as unattainable, %zu failed (%.0f s)\n", passed, unattainable, failed,
              seconds_since(t0));
  if (failed) return 1;
  return strict && unattainable ? 1 : 0;
}
