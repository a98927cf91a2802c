#include "covit/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "covit/error.hpp"

namespace covit {

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

RankedPrediction rank_probabilities(std::string genome_id, const std::vector<double>& probs, std::size_t top_n) {
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  order.resize(std::min(top_n, order.size()));
  RankedPrediction out;
  out.genome_id = std::move(genome_id);
  for (std::size_t c : order) out.probabilities.push_back(probs[c]);
  out.classes = std::move(order);
  return out;
}

double top_n_accuracy(const std::vector<RankedPrediction>& preds, const std::map<std::string, std::size_t>& labels,
                      std::size_t n) {
  if (preds.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& p : preds) {
    auto it = labels.find(p.genome_id);
    if (it == labels.end()) throw ConfigError("no label for genome '" + p.genome_id + "'");
    const std::size_t upto = std::min(n, p.classes.size());
    hits += std::find(p.classes.begin(), p.classes.begin() + static_cast<std::ptrdiff_t>(upto), it->second) !=
            p.classes.begin() + static_cast<std::ptrdiff_t>(upto);
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double placement_rate(std::size_t placed, std::size_t attempted) {
  if (attempted == 0) throw ConfigError("placement_rate: nothing was attempted");
  return static_cast<double>(placed) / static_cast<double>(attempted);
}

EvalReport make_report(const std::vector<RankedPrediction>& preds, const std::map<std::string, std::size_t>& labels,
                       std::size_t attempted, std::size_t num_classes, double ambiguity_rate) {
  EvalReport r;
  r.ambiguity_rate = ambiguity_rate;
  r.placement_rate = placement_rate(preds.size(), attempted);
  r.top1 = top_n_accuracy(preds, labels, 1);
  r.top2 = top_n_accuracy(preds, labels, 2);
  r.top5 = top_n_accuracy(preds, labels, 5);
  r.per_class.assign(num_classes, {});
  for (const auto& p : preds) {
    const std::size_t truth = labels.at(p.genome_id);
    auto& counts = r.per_class.at(truth);
    ++counts.attempted;
    counts.top1 += !p.classes.empty() && p.classes.front() == truth;
  }
  return r;
}

std::string train_log_csv(const TrainLog& log) {
  std::string out = "epoch,train_loss,val_loss,val_top1,seconds\n";
  for (const auto& row : log) {
    out += std::to_string(row.epoch) + "," + fmt("%.17g", row.train_loss) + "," + fmt("%.17g", row.val_loss) + "," +
           fmt("%.17g", row.val_top1) + "," + fmt("%.3f", row.seconds) + "\n";
  }
  return out;
}

std::string eval_reports_csv(const std::vector<EvalReport>& reports) {
  std::string out = "ambiguity_rate,placement_rate,top1,top2,top5\n";
  for (const auto& r : reports) {
    out += fmt("%.17g", r.ambiguity_rate) + "," + fmt("%.17g", r.placement_rate) + "," + fmt("%.17g", r.top1) + "," +
           fmt("%.17g", r.top2) + "," + fmt("%.17g", r.top5) + "\n";
  }
  return out;
}

std::string predictions_tsv(const std::vector<RankedPrediction>& preds, const std::vector<std::string>& class_names) {
  std::string out = "genome_id\trank\tclass_name\tprobability\n";
  for (const auto& p : preds) {
    for (std::size_t r = 0; r < p.classes.size(); ++r) {
      const std::size_t c = p.classes[r];
      const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
      out += p.genome_id + "\t" + std::to_string(r + 1) + "\t" + name + "\t" + fmt("%.9g", p.probabilities[r]) + "\n";
    }
  }
  return out;
}

}  // namespace covit
