#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "covit/adam.hpp"
#include "covit/dataset.hpp"
#include "covit/error.hpp"
#include "covit/genome.hpp"
#include "covit/metrics.hpp"
#include "covit/model.hpp"
#include "covit/parallel.hpp"

namespace covit {

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 1;
  bool record_time = true;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (!(lr >= 0.0)) throw ConfigError("lr must be non-negative");
  }
  AdamConfig adam() const { return {lr, beta1, beta2, eps, weight_decay}; }
};

template <typename Scalar>
struct FitResult {
  ModelParams<Scalar> params;  // best validation loss
  TrainLog log;
  std::size_t best_epoch = 0;
};

/// Examples per gradient chunk. Chunks are summed in index order, so the
/// reduction is the same for every worker count.
inline constexpr std::size_t kGradientChunk = 8;

template <typename Scalar>
struct LossAndTop1 {
  double loss = 0.0;
  double top1 = 0.0;
};

/// Cross-entropy of one example in inference mode.
template <typename Scalar>
double example_loss(const ModelParams<Scalar>& p, const LabeledItem& item) {
  Tape<Scalar> tape;
  const auto b = bind(tape, p, false);
  const auto probs = forward_graph(tape, b, p.config, item.features, DropoutContext::inference());
  return static_cast<double>(cross_entropy(probs, item.label).value()(0, 0));
}

/// Mean inference-mode loss and top-1 accuracy over a dataset.
template <typename Scalar>
LossAndTop1<Scalar> evaluate_dataset(const ModelParams<Scalar>& p, const LabeledDataset& ds) {
  std::vector<double> losses(ds.size());
  std::vector<int> hits(ds.size());
  parallel_for(ds.size(), [&](std::size_t i) {
    Tape<Scalar> tape;
    const auto b = bind(tape, p, false);
    const auto probs = forward_graph(tape, b, p.config, ds.items[i].features, DropoutContext::inference());
    losses[i] = static_cast<double>(cross_entropy(probs, ds.items[i].label).value()(0, 0));
    Eigen::Index arg = 0;
    probs.value().row(0).maxCoeff(&arg);
    hits[i] = static_cast<std::size_t>(arg) == ds.items[i].label;
  });
  LossAndTop1<Scalar> out;
  if (ds.empty()) return out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.loss += losses[i];
    out.top1 += hits[i];
  }
  out.loss /= static_cast<double>(ds.size());
  out.top1 /= static_cast<double>(ds.size());
  return out;
}

/// Mean training-mode loss over `batch` and its gradient for every tensor in
/// visit_tensors order.
template <typename Scalar>
std::pair<double, std::vector<Tensor<Scalar>>> batch_gradient(const ModelParams<Scalar>& p,
                                                              const std::vector<const LabeledItem*>& batch,
                                                              const std::vector<std::uint64_t>& dropout_seeds) {
  const std::size_t chunks = (batch.size() + kGradientChunk - 1) / kGradientChunk;
  const auto scale = static_cast<Scalar>(1.0 / static_cast<double>(batch.size()));
  std::vector<std::vector<Tensor<Scalar>>> partial(chunks);
  std::vector<double> partial_loss(chunks, 0.0);
  parallel_for(chunks, [&](std::size_t c) {
    auto& acc = partial[c];
    const std::size_t end = std::min(batch.size(), (c + 1) * kGradientChunk);
    for (std::size_t i = c * kGradientChunk; i < end; ++i) {
      Tape<Scalar> tape;
      const auto b = bind(tape, p, true);
      DropoutContext drop{p.config.dropout_rate > 0.0, p.config.dropout_rate, dropout_seeds[i]};
      const auto probs = forward_graph(tape, b, p.config, batch[i]->features, drop);
      const auto loss = cross_entropy(probs, batch[i]->label);
      partial_loss[c] += static_cast<double>(loss.value()(0, 0));
      tape.backward(loss, scale);
      if (acc.empty()) {
        for (const auto& v : b.flat) acc.push_back(tape.grad(v));
      } else {
        for (std::size_t k = 0; k < b.flat.size(); ++k) acc[k] += tape.grad(b.flat[k]);
      }
    }
  });
  std::vector<Tensor<Scalar>> total = std::move(partial[0]);
  double loss = partial_loss[0];
  for (std::size_t c = 1; c < chunks; ++c) {
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += partial[c][k];
    loss += partial_loss[c];
  }
  return {loss / static_cast<double>(batch.size()), std::move(total)};
}

template <typename Scalar>
std::vector<ParamSlot<Scalar>> optimizer_slots(ModelParams<Scalar>& p, const std::vector<Tensor<Scalar>>& grads) {
  std::vector<ParamSlot<Scalar>> slots;
  std::size_t k = 0;
  visit_tensors(p, [&](const std::string&, Tensor<Scalar>& t, TensorRole role, bool frozen) {
    slots.push_back({&t, &grads[k++], role == TensorRole::weight, frozen});
  });
  return slots;
}

/// Mini-batch Adam on cross-entropy with early stopping on validation loss
/// (training loss when `val` is empty). Returns the best-epoch parameters.
/// Throws NumericError when a loss turns non-finite.
template <typename Scalar>
FitResult<Scalar> fit(ModelParams<Scalar> params, const LabeledDataset& train, const LabeledDataset& val,
                      const TrainConfig& tc) {
  tc.validate();
  if (train.empty()) throw ConfigError("fit: empty training set");
  for (const auto& item : train.items) {
    if (item.label >= params.config.num_classes) throw ConfigError("fit: label exceeds the model's class count");
  }
  FitResult<Scalar> result;
  result.params = params;
  AdamState<Scalar> state;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(tc.seed, 0xE90C, epoch));
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      std::swap(order[i], order[i + static_cast<std::size_t>(rng.below(order.size() - i))]);
    }

    double train_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += tc.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + tc.batch_size);
      std::vector<const LabeledItem*> batch;
      std::vector<std::uint64_t> seeds;
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(&train.items[order[i]]);
        seeds.push_back(derive_seed(tc.seed, epoch, batch_index, i - begin));
      }
      auto [loss, grads] = batch_gradient(params, batch, seeds);
      if (!std::isfinite(loss)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      train_loss += loss * static_cast<double>(batch.size());
      const auto slots = optimizer_slots(params, grads);
      adam_step(std::span<const ParamSlot<Scalar>>(slots), state, tc.adam());
    }
    train_loss /= static_cast<double>(train.size());

    TrainLogRow row;
    row.epoch = epoch;
    row.train_loss = train_loss;
    if (!val.empty()) {
      const auto v = evaluate_dataset(params, val);
      row.val_loss = v.loss;
      row.val_top1 = v.top1;
    } else {
      row.val_loss = train_loss;
    }
    if (!std::isfinite(row.val_loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    if (tc.record_time) {
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    result.log.push_back(row);

    if (row.val_loss < best) {
      best = row.val_loss;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= tc.patience) {
      break;
    }
  }
  return result;
}

struct LayerwiseStage {
  std::size_t layers_to_add = 0;
  std::size_t epochs = 0;
};

/// Greedy layer-wise schedule: the first stage trains a fresh model with its
/// layer count; every later stage appends layers, freezes the existing ones
/// and refits. `base.layers` is ignored.
template <typename Scalar>
FitResult<Scalar> layerwise_pretrain(const std::vector<LayerwiseStage>& schedule, ModelConfig base,
                                     const LabeledDataset& train, const LabeledDataset& val, const TrainConfig& tc) {
  if (schedule.empty()) throw ConfigError("layerwise_pretrain: empty schedule");
  base.layers = schedule.front().layers_to_add;
  FitResult<Scalar> acc;
  acc.params = init_params<Scalar>(base, tc.seed);
  std::size_t epoch_offset = 0;
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    if (s > 0) acc.params = grow(std::move(acc.params), schedule[s].layers_to_add, true, derive_seed(tc.seed, 0x6A0, s));
    TrainConfig stage_tc = tc;
    stage_tc.max_epochs = schedule[s].epochs;
    stage_tc.seed = s == 0 ? tc.seed : derive_seed(tc.seed, 0x57A6E, s);
    auto stage = fit(std::move(acc.params), train, val, stage_tc);
    acc.params = std::move(stage.params);
    for (auto row : stage.log) {
      row.epoch += epoch_offset;
      acc.log.push_back(row);
    }
    if (stage.best_epoch) acc.best_epoch = stage.best_epoch + epoch_offset;
    epoch_offset += stage.log.size();
  }
  return acc;
}

/// Head swap for a new class set: embedding and encoder are frozen, only the
/// final norm and classifier are refit.
template <typename Scalar>
FitResult<Scalar> transfer_learn(ModelParams<Scalar> base, std::size_t num_classes, const LabeledDataset& train,
                                 const LabeledDataset& val, const TrainConfig& tc) {
  auto p = transfer_head(std::move(base), num_classes, derive_seed(tc.seed, 0x4EAD));
  p.embedding.frozen = true;
  for (auto& L : p.layers) L.frozen = true;
  return fit(std::move(p), train, val, tc);
}

/// Ranking for pre-extracted fragments; never declines to place.
template <typename Scalar>
RankedPrediction predict_features(const ModelParams<Scalar>& p, const std::string& id, const FeatureSequence& features,
                                  std::size_t top_n) {
  const RowVector<Scalar> probs = forward(features, p);
  std::vector<double> pv(static_cast<std::size_t>(probs.size()));
  for (Eigen::Index c = 0; c < probs.size(); ++c) pv[static_cast<std::size_t>(c)] = static_cast<double>(probs(c));
  return rank_probabilities(id, pv, top_n);
}

/// Genome -> sketch -> fragments -> forward. Throws ConfigError if the
/// sketch settings disagree with the model or the genome is shorter than k.
template <typename Scalar>
RankedPrediction predict(const ModelParams<Scalar>& p, const Genome& g, const SketchConfig& cfg, std::size_t top_n) {
  if (cfg.f != p.config.d_model || cfg.n != p.config.n_fragments) {
    throw ConfigError("sketch settings (f, n) do not match the model (d_model, n_fragments)");
  }
  return predict_features(p, g.id, extract_fragments(g, cfg), top_n);
}

/// Masks every genome at `rate` (seed ^ hash(id)), re-extracts, and scores.
/// `labels` maps genome id to class index; unlabelled genomes are an error.
template <typename Scalar>
EvalReport evaluate_genomes(const ModelParams<Scalar>& p, const GenomeSet& test,
                            const std::map<std::string, std::size_t>& labels, const SketchConfig& cfg, double rate,
                            std::uint64_t seed) {
  for (const auto& g : test.genomes()) {
    if (!labels.contains(g.id)) throw ConfigError("no label for genome '" + g.id + "'");
  }
  std::vector<RankedPrediction> preds(test.size());
  parallel_for(test.size(), [&](std::size_t i) {
    const Genome& g = test[i];
    const Genome masked = rate > 0.0 ? mask_random(g, rate, seed ^ hash_string(g.id)) : g;
    preds[i] = predict(p, masked, cfg, p.config.num_classes);
  });
  return make_report(preds, labels, test.size(), p.config.num_classes, rate);
}

template <typename Scalar>
std::vector<EvalReport> ambiguity_sweep(const ModelParams<Scalar>& p, const GenomeSet& test,
                                        const std::map<std::string, std::size_t>& labels,
                                        const std::vector<double>& rates, const SketchConfig& cfg, std::uint64_t seed) {
  std::vector<EvalReport> out;
  for (double r : rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("ambiguity rates must lie in [0, 1]");
    out.push_back(evaluate_genomes(p, test, labels, cfg, r, seed));
  }
  return out;
}

/// Class-index labels for the genomes of `gs` given lineage names.
inline std::map<std::string, std::size_t> class_index_labels(const GenomeSet& gs,
                                                             const std::vector<std::string>& class_names) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < class_names.size(); ++i) index[class_names[i]] = i;
  std::map<std::string, std::size_t> out;
  for (const auto& g : gs.genomes()) {
    const auto lab = gs.label_of(g.id);
    if (!lab) throw ConfigError("no label for genome '" + g.id + "'");
    auto it = index.find(*lab);
    if (it == index.end()) throw ConfigError("lineage '" + *lab + "' of '" + g.id + "' is unknown to the model");
    out[g.id] = it->second;
  }
  return out;
}

}  // namespace covit
