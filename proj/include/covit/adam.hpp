#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "covit/tensor.hpp"

namespace covit {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

template <typename Scalar>
struct AdamState {
  std::vector<Tensor<Scalar>> m;
  std::vector<Tensor<Scalar>> v;
  std::int64_t t = 0;
};

/// One optimizer slot. `decay` selects decoupled weight decay; frozen slots are skipped.
template <typename Scalar>
struct ParamSlot {
  Tensor<Scalar>* value = nullptr;
  const Tensor<Scalar>* grad = nullptr;
  bool decay = true;
  bool frozen = false;
};

/// Decoupled weight decay (p -= lr*wd*p) followed by the bias-corrected Adam
/// update. Moments are created on the first call; t increments once per call.
template <typename Scalar>
void adam_step(std::span<const ParamSlot<Scalar>> slots, AdamState<Scalar>& state, const AdamConfig& cfg) {
  if (!(cfg.lr >= 0.0)) throw std::invalid_argument("adam_step: learning rate must be non-negative");
  if (state.m.empty()) {
    for (const auto& s : slots) {
      state.m.push_back(Tensor<Scalar>::Zero(s.value->rows(), s.value->cols()));
      state.v.push_back(Tensor<Scalar>::Zero(s.value->rows(), s.value->cols()));
    }
  }
  if (state.m.size() != slots.size()) throw std::invalid_argument("adam_step: parameter count changed");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& s = slots[i];
    if (s.grad->rows() != s.value->rows() || s.grad->cols() != s.value->cols() ||
        state.m[i].rows() != s.value->rows() || state.m[i].cols() != s.value->cols()) {
      throw std::invalid_argument("adam_step: shape mismatch at slot " + std::to_string(i));
    }
  }

  state.t += 1;
  const auto lr = static_cast<Scalar>(cfg.lr);
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto eps = static_cast<Scalar>(cfg.eps);
  const auto wd = static_cast<Scalar>(cfg.weight_decay);
  const Scalar corr1 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta1, static_cast<double>(state.t)));
  const Scalar corr2 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta2, static_cast<double>(state.t)));

  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& s = slots[i];
    if (s.frozen) continue;
    Tensor<Scalar>& p = *s.value;
    const Tensor<Scalar>& g = *s.grad;
    if (s.decay && wd != Scalar(0)) p -= (lr * wd) * p;
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * g.cwiseAbs2();
    p.array() -= lr * (state.m[i].array() / corr1) / ((state.v[i].array() / corr2).sqrt() + eps);
  }
}

}  // namespace covit
