#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "covit/error.hpp"
#include "covit/random.hpp"
#include "covit/sketch.hpp"
#include "covit/tensor.hpp"

namespace covit {

struct ModelConfig {
  std::size_t layers = 4;
  std::size_t d_model = 256;
  std::size_t heads = 18;
  std::size_t d_k = 96;
  std::size_t d_v = 96;
  std::size_t d_ff = 1536;
  std::size_t n_fragments = 256;
  std::size_t f = 256;
  std::size_t num_classes = 2;
  double dropout_rate = 0.2;
  double ln_eps = 1e-5;

  /// f must equal d_model; every dimension at least 1; dropout in [0, 1).
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

inline void ModelConfig::validate() const {
  if (f != d_model) throw ConfigError("fragment length f must equal d_model");
  if (d_model < 1 || heads < 1 || d_k < 1 || d_v < 1 || d_ff < 1 || n_fragments < 1 || num_classes < 1) {
    throw ConfigError("model dimensions must all be at least 1");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
  if (!(ln_eps > 0.0)) throw ConfigError("ln_eps must be positive");
}

/// Five scalars: weights (w_A, w_C, w_G, w_T) as a 4 x 1 column and the N bias.
template <typename Scalar>
struct EmbeddingParams {
  Tensor<Scalar> weights;  // 4 x 1
  Tensor<Scalar> bias;     // 1 x 1
  bool frozen = false;
};

template <typename Scalar>
struct EncoderLayerParams {
  std::vector<Tensor<Scalar>> query;  // per head, d_model x d_k
  std::vector<Tensor<Scalar>> key;    // per head, d_model x d_k
  std::vector<Tensor<Scalar>> value;  // per head, d_model x d_v
  Tensor<Scalar> out;                 // heads*d_v x d_model
  Tensor<Scalar> ff;                  // d_model x d_ff
  Tensor<Scalar> mix;                 // d_ff x d_model
  Tensor<Scalar> ln1_gain, ln1_bias;  // 1 x d_model
  Tensor<Scalar> ln2_gain, ln2_bias;  // 1 x d_model
  bool frozen = false;
};

template <typename Scalar>
struct HeadParams {
  Tensor<Scalar> weights;               // d_model x num_classes
  Tensor<Scalar> bias;                  // 1 x num_classes
  Tensor<Scalar> norm_gain, norm_bias;  // 1 x d_model
};

template <typename Scalar>
struct ModelParams {
  ModelConfig config;
  EmbeddingParams<Scalar> embedding;
  std::vector<EncoderLayerParams<Scalar>> layers;
  HeadParams<Scalar> head;
};

enum class TensorRole { weight, bias, gain };

/// Visits every tensor in canonical order:
/// embed.w, embed.b, then per layer i: enc.i.q.l, enc.i.k.l, enc.i.v.l (heads
/// in order), enc.i.o, enc.i.ff, enc.i.m, enc.i.ln1.g/.b, enc.i.ln2.g/.b, then
/// final_ln.g/.b, head.w, head.b.
/// `fn(name, tensor, role, frozen)`.
template <typename Params, typename Fn>
void visit_tensors(Params& p, Fn&& fn) {
  fn(std::string("embed.w"), p.embedding.weights, TensorRole::weight, p.embedding.frozen);
  fn(std::string("embed.b"), p.embedding.bias, TensorRole::bias, p.embedding.frozen);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& L = p.layers[i];
    const std::string pre = "enc." + std::to_string(i) + ".";
    for (std::size_t l = 0; l < L.query.size(); ++l) fn(pre + "q." + std::to_string(l), L.query[l], TensorRole::weight, L.frozen);
    for (std::size_t l = 0; l < L.key.size(); ++l) fn(pre + "k." + std::to_string(l), L.key[l], TensorRole::weight, L.frozen);
    for (std::size_t l = 0; l < L.value.size(); ++l) fn(pre + "v." + std::to_string(l), L.value[l], TensorRole::weight, L.frozen);
    fn(pre + "o", L.out, TensorRole::weight, L.frozen);
    fn(pre + "ff", L.ff, TensorRole::weight, L.frozen);
    fn(pre + "m", L.mix, TensorRole::weight, L.frozen);
    fn(pre + "ln1.g", L.ln1_gain, TensorRole::gain, L.frozen);
    fn(pre + "ln1.b", L.ln1_bias, TensorRole::bias, L.frozen);
    fn(pre + "ln2.g", L.ln2_gain, TensorRole::gain, L.frozen);
    fn(pre + "ln2.b", L.ln2_bias, TensorRole::bias, L.frozen);
  }
  fn(std::string("final_ln.g"), p.head.norm_gain, TensorRole::gain, false);
  fn(std::string("final_ln.b"), p.head.norm_bias, TensorRole::bias, false);
  fn(std::string("head.w"), p.head.weights, TensorRole::weight, false);
  fn(std::string("head.b"), p.head.bias, TensorRole::bias, false);
}

/// Total element count of every declared tensor.
inline std::size_t param_count(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  const std::size_t per_layer = c.heads * d * (2 * c.d_k + c.d_v) + c.heads * c.d_v * d + d * c.d_ff + c.d_ff * d + 4 * d;
  return 5 + c.layers * per_layer + 2 * d + d * c.num_classes + c.num_classes;
}

// ---------------------------------------------------------------------------
// Initialization and lifecycle.
// ---------------------------------------------------------------------------
namespace detail {

/// Zero-mean normal, seeded per tensor name.
template <typename Scalar>
Tensor<Scalar> normal(std::size_t fan_in, std::size_t fan_out, double sd, std::uint64_t seed, const std::string& name) {
  Rng rng(derive_seed(seed, hash_string(name)));
  Tensor<Scalar> m(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<Scalar>(sd * rng.normal());
  }
  return m;
}

template <typename Scalar>
Tensor<Scalar> glorot(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed, const std::string& name) {
  return normal<Scalar>(fan_in, fan_out, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)), seed, name);
}

/// Head weights start small (sd 0.25 / sqrt(d_model)) so the initial output is close to uniform.
inline double head_init_sd(std::size_t d_model) { return 0.25 / std::sqrt(static_cast<double>(d_model)); }

template <typename Scalar>
Tensor<Scalar> ones_row(std::size_t n) {
  return Tensor<Scalar>::Ones(1, static_cast<Eigen::Index>(n));
}

template <typename Scalar>
Tensor<Scalar> zeros_row(std::size_t n) {
  return Tensor<Scalar>::Zero(1, static_cast<Eigen::Index>(n));
}

}  // namespace detail

template <typename Scalar>
EncoderLayerParams<Scalar> init_layer(const ModelConfig& c, std::size_t index, std::uint64_t seed) {
  EncoderLayerParams<Scalar> L;
  const std::string pre = "enc." + std::to_string(index) + ".";
  for (std::size_t l = 0; l < c.heads; ++l) {
    L.query.push_back(detail::glorot<Scalar>(c.d_model, c.d_k, seed, pre + "q." + std::to_string(l)));
    L.key.push_back(detail::glorot<Scalar>(c.d_model, c.d_k, seed, pre + "k." + std::to_string(l)));
    L.value.push_back(detail::glorot<Scalar>(c.d_model, c.d_v, seed, pre + "v." + std::to_string(l)));
  }
  L.out = detail::glorot<Scalar>(c.heads * c.d_v, c.d_model, seed, pre + "o");
  L.ff = detail::glorot<Scalar>(c.d_model, c.d_ff, seed, pre + "ff");
  L.mix = detail::glorot<Scalar>(c.d_ff, c.d_model, seed, pre + "m");
  L.ln1_gain = detail::ones_row<Scalar>(c.d_model);
  L.ln1_bias = detail::zeros_row<Scalar>(c.d_model);
  L.ln2_gain = detail::ones_row<Scalar>(c.d_model);
  L.ln2_bias = detail::zeros_row<Scalar>(c.d_model);
  return L;
}

template <typename Scalar>
HeadParams<Scalar> init_head(const ModelConfig& c, std::uint64_t seed) {
  HeadParams<Scalar> h;
  h.weights = detail::normal<Scalar>(c.d_model, c.num_classes, detail::head_init_sd(c.d_model), seed, "head.w");
  h.bias = detail::zeros_row<Scalar>(c.num_classes);
  h.norm_gain = detail::ones_row<Scalar>(c.d_model);
  h.norm_bias = detail::zeros_row<Scalar>(c.d_model);
  return h;
}

template <typename Scalar = double>
ModelParams<Scalar> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams<Scalar> p;
  p.config = cfg;
  p.embedding.weights = detail::glorot<Scalar>(4, 1, seed, "embed.w");
  p.embedding.bias = Tensor<Scalar>::Zero(1, 1);
  for (std::size_t i = 0; i < cfg.layers; ++i) p.layers.push_back(init_layer<Scalar>(cfg, i, seed));
  p.head = init_head<Scalar>(cfg, seed);
  return p;
}

/// Appends freshly initialized encoder layers after the existing ones;
/// optionally freezes the layers that were already present.
template <typename Scalar>
ModelParams<Scalar> grow(ModelParams<Scalar> p, std::size_t extra_layers, bool freeze_existing, std::uint64_t seed) {
  if (extra_layers == 0) return p;
  if (freeze_existing) {
    for (auto& L : p.layers) L.frozen = true;
  }
  const std::size_t first = p.layers.size();
  for (std::size_t i = 0; i < extra_layers; ++i) p.layers.push_back(init_layer<Scalar>(p.config, first + i, seed));
  p.config.layers = p.layers.size();
  return p;
}

/// Keeps embedding and encoder bit-exact; redraws the head for a new class count.
template <typename Scalar>
ModelParams<Scalar> transfer_head(ModelParams<Scalar> p, std::size_t new_num_classes, std::uint64_t seed) {
  if (new_num_classes < 1) throw ConfigError("transfer_head: class count must be at least 1");
  p.config.num_classes = new_num_classes;
  p.head = init_head<Scalar>(p.config, seed);
  return p;
}

// ---------------------------------------------------------------------------
// Forward graph.
// ---------------------------------------------------------------------------

/// Training-mode dropout; each (layer, sub-layer) gets its own derived seed.
struct DropoutContext {
  bool training = false;
  double rate = 0.0;
  std::uint64_t seed = 0;

  std::uint64_t seed_for(std::size_t layer, std::size_t sublayer) const noexcept {
    return derive_seed(seed, layer, sublayer);
  }
  static DropoutContext inference() noexcept { return {}; }
};

template <typename Scalar>
struct LayerVars {
  std::vector<Var<Scalar>> query, key, value;
  Var<Scalar> out, ff, mix, ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

/// Parameters bound to a tape; `flat` follows visit_tensors order.
template <typename Scalar>
struct BoundParams {
  Var<Scalar> embed_w, embed_b;
  std::vector<LayerVars<Scalar>> layers;
  Var<Scalar> norm_gain, norm_bias, head_w, head_b;
  std::vector<Var<Scalar>> flat;
};

/// Binds every tensor as a tracked leaf (track = true) or as a constant.
template <typename Scalar>
BoundParams<Scalar> bind(Tape<Scalar>& tape, const ModelParams<Scalar>& p, bool track = true) {
  BoundParams<Scalar> b;
  auto leaf = [&](const Tensor<Scalar>& t) {
    Var<Scalar> v = tape.parameter(t, track);
    b.flat.push_back(v);
    return v;
  };
  b.embed_w = leaf(p.embedding.weights);
  b.embed_b = leaf(p.embedding.bias);
  for (const auto& L : p.layers) {
    LayerVars<Scalar> lv;
    for (const auto& t : L.query) lv.query.push_back(leaf(t));
    for (const auto& t : L.key) lv.key.push_back(leaf(t));
    for (const auto& t : L.value) lv.value.push_back(leaf(t));
    lv.out = leaf(L.out);
    lv.ff = leaf(L.ff);
    lv.mix = leaf(L.mix);
    lv.ln1_gain = leaf(L.ln1_gain);
    lv.ln1_bias = leaf(L.ln1_bias);
    lv.ln2_gain = leaf(L.ln2_gain);
    lv.ln2_bias = leaf(L.ln2_bias);
    b.layers.push_back(std::move(lv));
  }
  b.norm_gain = leaf(p.head.norm_gain);
  b.norm_bias = leaf(p.head.norm_bias);
  b.head_w = leaf(p.head.weights);
  b.head_b = leaf(p.head.bias);
  return b;
}

/// n fragments -> n x f feature sequence: row j, column r is
/// fm_j.row(r) . (w_A, w_C, w_G, w_T) + b_N.
template <typename Scalar>
Var<Scalar> embed_fragments(Tape<Scalar>& tape, const FeatureSequence& fragments, const Var<Scalar>& w,
                            const Var<Scalar>& b) {
  detail::require(!fragments.empty(), "embed", "no fragments");
  const Eigen::Index f = fragments.front().rows();
  const auto n = static_cast<Eigen::Index>(fragments.size());
  Tensor<Scalar> out(n, f);
  const Tensor<Scalar>& wv = w.value();
  const Scalar bv = b.value()(0, 0);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& fm = fragments[static_cast<std::size_t>(j)];
    detail::require(fm.rows() == f && fm.cols() == 4, "embed", "fragment matrices must all be f x 4");
    out.row(j) = (fm.template cast<Scalar>() * wv).transpose().array() + bv;
  }
  const FeatureSequence* frags = &fragments;
  return tape.record(std::move(out), {w, b}, [w, b, frags](Tape<Scalar>& tp, const Tensor<Scalar>& g) {
    if (tp.requires_grad(w)) {
      Tensor<Scalar> gw = Tensor<Scalar>::Zero(4, 1);
      for (std::size_t j = 0; j < frags->size(); ++j) {
        gw += (*frags)[j].template cast<Scalar>().transpose() * g.row(static_cast<Eigen::Index>(j)).transpose();
      }
      tp.accumulate(w, gw);
    }
    if (tp.requires_grad(b)) tp.accumulate(b, Tensor<Scalar>::Constant(1, 1, g.sum()));
  });
}

/// Multi-head self-attention. When `attention` is non-null it receives each
/// head's row-softmax score matrix.
template <typename Scalar>
Var<Scalar> mhsa(const Var<Scalar>& x, const LayerVars<Scalar>& L, std::size_t d_k,
                 std::vector<Tensor<Scalar>>* attention = nullptr) {
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(d_k));
  std::vector<Var<Scalar>> heads;
  heads.reserve(L.query.size());
  for (std::size_t l = 0; l < L.query.size(); ++l) {
    const Var<Scalar> q = matmul(x, L.query[l]);
    const Var<Scalar> k = matmul(x, L.key[l]);
    const Var<Scalar> v = matmul(x, L.value[l]);
    const Var<Scalar> weights = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt));
    if (attention) attention->push_back(weights.value());
    heads.push_back(matmul(weights, v));
  }
  const Var<Scalar> joined = heads.size() == 1 ? heads.front() : concat_cols(std::span<const Var<Scalar>>(heads));
  return matmul(joined, L.out);
}

/// Row-independent ReLU sandwich without biases.
template <typename Scalar>
Var<Scalar> mlp(const Var<Scalar>& x, const LayerVars<Scalar>& L) {
  return matmul(relu(matmul(x, L.ff)), L.mix);
}

/// x <- x + Dropout(MHSA(LN1(x))); x <- x + Dropout(MLP(LN2(x))).
template <typename Scalar>
Var<Scalar> encoder_layer(const Var<Scalar>& x, const LayerVars<Scalar>& L, const ModelConfig& cfg,
                          const DropoutContext& drop, std::size_t layer_index) {
  const auto eps = static_cast<Scalar>(cfg.ln_eps);
  Var<Scalar> attn = mhsa(layer_norm_rows(x, L.ln1_gain, L.ln1_bias, eps), L, cfg.d_k);
  attn = dropout(attn, drop.rate, drop.training, drop.seed_for(layer_index, 0));
  const Var<Scalar> mid = add(x, attn);
  Var<Scalar> ff = mlp(layer_norm_rows(mid, L.ln2_gain, L.ln2_bias, eps), L);
  ff = dropout(ff, drop.rate, drop.training, drop.seed_for(layer_index, 1));
  return add(mid, ff);
}

/// Full network up to the 1 x num_classes probability row.
template <typename Scalar>
Var<Scalar> forward_graph(Tape<Scalar>& tape, const BoundParams<Scalar>& b, const ModelConfig& cfg,
                          const FeatureSequence& features, const DropoutContext& drop) {
  if (features.size() != cfg.n_fragments) {
    throw ConfigError("expected " + std::to_string(cfg.n_fragments) + " fragments, got " +
                      std::to_string(features.size()));
  }
  for (const auto& fm : features) {
    if (fm.rows() != static_cast<Eigen::Index>(cfg.f)) throw ConfigError("fragment length does not match model f");
  }
  Var<Scalar> x = embed_fragments(tape, features, b.embed_w, b.embed_b);
  for (std::size_t i = 0; i < b.layers.size(); ++i) x = encoder_layer(x, b.layers[i], cfg, drop, i);
  x = layer_norm_rows(x, b.norm_gain, b.norm_bias, static_cast<Scalar>(cfg.ln_eps));
  const Var<Scalar> pooled = mean_rows(x);
  return softmax_rows(add_rowwise(matmul(pooled, b.head_w), b.head_b));
}

// ---------------------------------------------------------------------------
// Value-level entry points.
// ---------------------------------------------------------------------------

template <typename Scalar>
RowVector<Scalar> embed(const FragmentMatrix& fm, const EmbeddingParams<Scalar>& p) {
  if (fm.cols() != 4) throw ConfigError("embed: fragment matrix must have 4 columns");
  return ((fm.template cast<Scalar>() * p.weights).array() + p.bias(0, 0)).matrix().transpose();
}

namespace detail {

template <typename Scalar>
void check_sequence(const Tensor<Scalar>& seq, const ModelConfig& cfg) {
  if (seq.cols() != static_cast<Eigen::Index>(cfg.d_model) || seq.rows() < 1) {
    throw ConfigError("sequence must have d_model columns and at least one row");
  }
}

template <typename Scalar>
LayerVars<Scalar> bind_layer(Tape<Scalar>& tape, const EncoderLayerParams<Scalar>& L) {
  LayerVars<Scalar> lv;
  for (const auto& t : L.query) lv.query.push_back(tape.parameter(t, false));
  for (const auto& t : L.key) lv.key.push_back(tape.parameter(t, false));
  for (const auto& t : L.value) lv.value.push_back(tape.parameter(t, false));
  lv.out = tape.parameter(L.out, false);
  lv.ff = tape.parameter(L.ff, false);
  lv.mix = tape.parameter(L.mix, false);
  lv.ln1_gain = tape.parameter(L.ln1_gain, false);
  lv.ln1_bias = tape.parameter(L.ln1_bias, false);
  lv.ln2_gain = tape.parameter(L.ln2_gain, false);
  lv.ln2_bias = tape.parameter(L.ln2_bias, false);
  return lv;
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> mhsa_forward(const Tensor<Scalar>& seq, const EncoderLayerParams<Scalar>& L, const ModelConfig& cfg) {
  detail::check_sequence(seq, cfg);
  Tape<Scalar> tape;
  return mhsa(tape.constant(seq), detail::bind_layer(tape, L), cfg.d_k).value();
}

/// Per-head attention weight matrices (each n x n, rows sum to 1).
template <typename Scalar>
std::vector<Tensor<Scalar>> attention_weights(const Tensor<Scalar>& seq, const EncoderLayerParams<Scalar>& L,
                                              const ModelConfig& cfg) {
  detail::check_sequence(seq, cfg);
  Tape<Scalar> tape;
  std::vector<Tensor<Scalar>> out;
  mhsa(tape.constant(seq), detail::bind_layer(tape, L), cfg.d_k, &out);
  return out;
}

template <typename Scalar>
Tensor<Scalar> mlp_forward(const Tensor<Scalar>& seq, const EncoderLayerParams<Scalar>& L, const ModelConfig& cfg) {
  detail::check_sequence(seq, cfg);
  Tape<Scalar> tape;
  return mlp(tape.constant(seq), detail::bind_layer(tape, L)).value();
}

template <typename Scalar>
Tensor<Scalar> encoder_layer_forward(const Tensor<Scalar>& seq, const EncoderLayerParams<Scalar>& L,
                                     const ModelConfig& cfg, const DropoutContext& drop = {},
                                     std::size_t layer_index = 0) {
  detail::check_sequence(seq, cfg);
  Tape<Scalar> tape;
  return encoder_layer(tape.constant(seq), detail::bind_layer(tape, L), cfg, drop, layer_index).value();
}

/// Probability distribution over num_classes for one genome's fragments.
template <typename Scalar>
RowVector<Scalar> forward(const FeatureSequence& features, const ModelParams<Scalar>& p,
                          const DropoutContext& drop = {}) {
  Tape<Scalar> tape;
  const BoundParams<Scalar> b = bind(tape, p, false);
  return forward_graph(tape, b, p.config, features, drop).value().row(0);
}

}  // namespace covit
