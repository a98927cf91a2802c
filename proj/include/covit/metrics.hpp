#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace covit {

struct RankedPrediction {
  std::string genome_id;
  std::vector<std::size_t> classes;  // descending probability, ties by class index
  std::vector<double> probabilities;
};

/// Orders classes by descending probability (ties by ascending index) and keeps the first top_n.
RankedPrediction rank_probabilities(std::string genome_id, const std::vector<double>& probs, std::size_t top_n);

/// Fraction of predictions whose true class is among their first n ranks.
/// Throws ConfigError when a prediction has no label.
double top_n_accuracy(const std::vector<RankedPrediction>& preds, const std::map<std::string, std::size_t>& labels,
                      std::size_t n);

/// |placed| / attempted; throws ConfigError when nothing was attempted.
double placement_rate(std::size_t placed, std::size_t attempted);

struct ClassCounts {
  std::size_t attempted = 0;
  std::size_t top1 = 0;
};

struct EvalReport {
  double ambiguity_rate = 0.0;
  double placement_rate = 0.0;
  double top1 = 0.0;
  double top2 = 0.0;
  double top5 = 0.0;
  std::vector<ClassCounts> per_class;
};

EvalReport make_report(const std::vector<RankedPrediction>& preds, const std::map<std::string, std::size_t>& labels,
                       std::size_t attempted, std::size_t num_classes, double ambiguity_rate);

struct TrainLogRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_top1 = 0.0;
  double seconds = 0.0;
  bool operator==(const TrainLogRow&) const = default;
};

using TrainLog = std::vector<TrainLogRow>;

std::string train_log_csv(const TrainLog& log);
std::string eval_reports_csv(const std::vector<EvalReport>& reports);
std::string predictions_tsv(const std::vector<RankedPrediction>& preds, const std::vector<std::string>& class_names);

}  // namespace covit
