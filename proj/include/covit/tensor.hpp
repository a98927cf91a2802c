#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "covit/random.hpp"

namespace covit {

template <typename Scalar>
using Tensor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
inline constexpr const char* dtype_name = nullptr;
template <>
inline constexpr const char* dtype_name<double> = "f64";
template <>
inline constexpr const char* dtype_name<float> = "f32";

// ---------------------------------------------------------------------------
// Value-level primitives. These are the reference math; the taped versions
// below call them for their forward pass.
// ---------------------------------------------------------------------------
namespace ops {

template <typename Derived>
Tensor<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Tensor<Scalar> y = x;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const Scalar mx = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - mx).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

template <typename Derived>
Tensor<typename Derived::Scalar> relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

/// Row-wise normalization with 1/d variance, then gain * xhat + bias.
template <typename Derived, typename G, typename B>
Tensor<typename Derived::Scalar> layer_norm_rows(const Eigen::MatrixBase<Derived>& x,
                                                 const Eigen::MatrixBase<G>& gain,
                                                 const Eigen::MatrixBase<B>& bias,
                                                 typename Derived::Scalar eps) {
  using Scalar = typename Derived::Scalar;
  Tensor<Scalar> y(x.rows(), x.cols());
  const Scalar d = static_cast<Scalar>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).sum() / d;
    const auto centered = (x.row(r).array() - mean).eval();
    const Scalar var = centered.square().sum() / d;
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    y.row(r) = (centered * inv * gain.array().reshaped().transpose() +
                bias.array().reshaped().transpose()).matrix();
  }
  return y;
}

/// Inverted-dropout multiplier: 0 with probability `rate`, else 1/(1-rate).
/// Each cell depends only on (seed, flat index).
template <typename Scalar>
Tensor<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::uint64_t seed) {
  Tensor<Scalar> mask(rows, cols);
  const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = counter_uniform(seed, static_cast<std::uint64_t>(i)) < rate ? Scalar(0) : keep;
  }
  return mask;
}

template <typename Derived>
Tensor<typename Derived::Scalar> dropout(const Eigen::MatrixBase<Derived>& x, double rate, bool training,
                                         std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  using Scalar = typename Derived::Scalar;
  return x.cwiseProduct(dropout_mask<Scalar>(x.rows(), x.cols(), rate, seed));
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Reverse-mode tape.
// ---------------------------------------------------------------------------
template <typename Scalar>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while its tape lives.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<Scalar>& value() const { return tape_->value(*this); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape<Scalar>* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Tensor<Scalar>;
  using Backward = std::function<void(Tape&, const Mat& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Mat value) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, {}, false, false});
    return {this, nodes_.size() - 1};
  }

  /// Leaf backed by caller-owned storage, which must outlive the tape.
  /// Untracked leaves behave like constants without copying.
  Var<Scalar> parameter(const Mat& value, bool track = true) {
    nodes_.push_back(Node{{}, &value, {}, {}, track, false});
    return {this, nodes_.size() - 1};
  }

  /// Appends an operation node. The closure is kept only if some parent is tracked.
  Var<Scalar> record(Mat value, std::initializer_list<Var<Scalar>> parents, Backward fn, bool scalar = false) {
    return record(std::move(value), std::span<const Var<Scalar>>(parents.begin(), parents.size()),
                  std::move(fn), scalar);
  }

  Var<Scalar> record(Mat value, std::span<const Var<Scalar>> parents, Backward fn, bool scalar = false) {
    bool tracked = false;
    for (const auto& p : parents) {
      check_owner(p);
      tracked = tracked || nodes_[p.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), nullptr, {}, tracked ? std::move(fn) : Backward{}, tracked, scalar});
    return {this, nodes_.size() - 1};
  }

  const Mat& value(const Var<Scalar>& v) const {
    check_owner(v);
    const Node& n = nodes_[v.id()];
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(const Var<Scalar>& v) const { return nodes_.at(v.id()).requires_grad; }

  /// Accumulated gradient; zeros when the node was never reached.
  Mat grad(const Var<Scalar>& v) const {
    const Node& n = nodes_.at(v.id());
    if (n.grad.size() == 0) {
      const Mat& val = value(v);
      return Mat::Zero(val.rows(), val.cols());
    }
    return n.grad;
  }

  template <typename Derived>
  void accumulate(const Var<Scalar>& v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Reverse accumulation from a scalar loss; each node is visited once.
  void backward(const Var<Scalar>& loss, Scalar seed = Scalar(1)) {
    check_owner(loss);
    const Node& root = nodes_[loss.id()];
    if (!root.scalar || value(loss).size() != 1) throw std::invalid_argument("backward requires a scalar loss");
    if (!root.requires_grad) return;
    nodes_[loss.id()].grad = Mat::Constant(1, 1, seed);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) {
        n.backward(*this, n.grad);
      }
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    const Mat* external;
    Mat grad;
    Backward backward;
    bool requires_grad;
    bool scalar;
  };

  void check_owner(const Var<Scalar>& v) const {
    if (v.tape() != this || v.id() >= nodes_.size()) throw std::invalid_argument("variable belongs to another tape");
  }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Taped primitives.
// ---------------------------------------------------------------------------
namespace detail {

inline void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw std::invalid_argument(std::string(op) + ": " + what);
}

template <typename Scalar>
std::string shape_str(const Tensor<Scalar>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& t = *a.tape();
  detail::require(a.cols() == b.rows(), "matmul",
                  "inner dimensions differ (" + detail::shape_str(a.value()) + " * " + detail::shape_str(b.value()) + ")");
  Tensor<Scalar> out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape<Scalar>& tp, const Tensor<Scalar>& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
  });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
  Tensor<Scalar> out = a.value().transpose();
  return a.tape()->record(std::move(out), {a}, [a](Tape<Scalar>& tp, const Tensor<Scalar>& g) {
    tp.accumulate(a, g.transpose());
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add", "shape mismatch");
  Tensor<Scalar> out = a.value() + b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape<Scalar>& tp, const Tensor<Scalar>& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

/// a + row, with a 1 x d row broadcast over every row of a.
template <typename Scalar>
Var<Scalar> add_rowwise(const Var<Scalar>& a, const Var<Scalar>& row) {
  detail::require(row.rows() == 1 && row.cols() == a.cols(), "add_rowwise", "bias must be 1 x cols");
  Tensor<Scalar> out = a.value().rowwise() + row.value().row(0);
  return a.tape()->record(std::move(out), {a, row}, [a, row](Tape<Scalar>& tp, const Tensor<Scalar>& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(row)) tp.accumulate(row, g.colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  Tensor<Scalar> out = a.value() * s;
  return a.tape()->record(std::move(out), {a}, [a, s](Tape<Scalar>& tp, const Tensor<Scalar>& g) {
    tp.accumulate(a, g * s);
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  Tensor<Scalar> out = ops::relu(a.value());
  return a.tape()->record(std::move(out), {a}, [a](Tape<Scalar>& tp, const Tensor<Scalar>& g) {
    tp.accumulate(a, (tp.value(a).array() > Scalar(0)).select(g, Scalar(0)));
  });
}

template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& a) {
  auto& t = *a.tape();
  const Var<Scalar> self(&t, t.size());
  return t.record(ops::softmax_rows(a.value()), {a}, [a, self](Tape<Scalar>& tp, const Tensor<Scalar>& g) {
    const Tensor<Scalar>& y = tp.value(self);
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dots = g.cwiseProduct(y).rowwise().sum();
    tp.accumulate(a, y.cwiseProduct(g - dots.replicate(1, g.cols())));
  });
}

template <typename Scalar>
Var<Scalar> layer_norm_rows(const Var<Scalar>& x, const Var<Scalar>& gain, const Var<Scalar>& bias,
                            Scalar eps = Scalar(1e-5)) {
  detail::require(gain.rows() == 1 && gain.cols() == x.cols() && bias.rows() == 1 && bias.cols() == x.cols(),
                  "layer_norm_rows", "gain and bias must be 1 x d");
  detail::require(eps > Scalar(0), "layer_norm_rows", "eps must be positive");
  const Tensor<Scalar>& xv = x.value();
  const Eigen::Index rows = xv.rows();
  const Scalar d = static_cast<Scalar>(xv.cols());
  Tensor<Scalar> xhat(rows, xv.cols());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Scalar mean = xv.row(r).sum() / d;
    const auto centered = (xv.row(r).array() - mean).eval();
    const Scalar var = centered.square().sum() / d;
    inv_std(r) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(r) = (centered * inv_std(r)).matrix();
  }
  Tensor<Scalar> out = ops::layer_norm_rows(xv, gain.value(), bias.value(), eps);
  return x.tape()->record(std::move(out), {x, gain, bias},
                          [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                              Tape<Scalar>& tp, const Tensor<Scalar>& g) {
                            if (tp.requires_grad(bias)) tp.accumulate(bias, g.colwise().sum());
                            if (tp.requires_grad(gain)) tp.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
                            if (!tp.requires_grad(x)) return;
                            const Tensor<Scalar> dxhat = g.array().rowwise() * tp.value(gain).row(0).array();
                            const Scalar d = static_cast<Scalar>(g.cols());
                            Tensor<Scalar> dx(g.rows(), g.cols());
                            for (Eigen::Index r = 0; r < g.rows(); ++r) {
                              const Scalar m1 = dxhat.row(r).sum() / d;
                              const Scalar m2 = dxhat.row(r).dot(xhat.row(r)) / d;
                              dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
                            }
                            tp.accumulate(x, dx);
                          });
}

template <typename Scalar>
Var<Scalar> dropout(const Var<Scalar>& a, double rate, bool training, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) return a;
  Tensor<Scalar> mask = ops::dropout_mask<Scalar>(a.rows(), a.cols(), rate, seed);
  Tensor<Scalar> out = a.value().cwiseProduct(mask);
  return a.tape()->record(std::move(out), {a}, [a, mask = std::move(mask)](Tape<Scalar>& tp, const Tensor<Scalar>& g) {
    tp.accumulate(a, g.cwiseProduct(mask));
  });
}

/// Concatenation along columns (the last axis).
template <typename Scalar>
Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts) {
  detail::require(!parts.empty(), "concat_cols", "no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == rows, "concat_cols", "row counts differ");
    cols += p.cols();
  }
  Tensor<Scalar> out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var<Scalar>> keep(parts.begin(), parts.end());
  return parts.front().tape()->record(std::move(out), std::span<const Var<Scalar>>(keep),
                                      [keep, offsets](Tape<Scalar>& tp, const Tensor<Scalar>& g) {
                                        for (std::size_t i = 0; i < keep.size(); ++i) {
                                          tp.accumulate(keep[i], g.middleCols(offsets[i], keep[i].cols()));
                                        }
                                      });
}

/// Column means: r x d -> 1 x d.
template <typename Scalar>
Var<Scalar> mean_rows(const Var<Scalar>& a) {
  const Scalar inv = Scalar(1) / static_cast<Scalar>(a.rows());
  Tensor<Scalar> out = a.value().colwise().sum() * inv;
  return a.tape()->record(std::move(out), {a}, [a, inv](Tape<Scalar>& tp, const Tensor<Scalar>& g) {
    tp.accumulate(a, (g * inv).replicate(tp.value(a).rows(), 1));
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  Tensor<Scalar> out = Tensor<Scalar>::Constant(1, 1, a.value().sum());
  return a.tape()->record(std::move(out), {a}, [a](Tape<Scalar>& tp, const Tensor<Scalar>& g) {
    const Tensor<Scalar>& v = tp.value(a);
    tp.accumulate(a, Tensor<Scalar>::Constant(v.rows(), v.cols(), g(0, 0)));
  }, true);
}

inline constexpr double kProbabilityFloor = 1e-12;

/// -ln(max(p[label], 1e-12)) for a 1 x C probability row.
template <typename Scalar>
Var<Scalar> cross_entropy(const Var<Scalar>& probs, std::size_t label) {
  detail::require(probs.rows() == 1, "cross_entropy", "expects a single probability row");
  detail::require(label < static_cast<std::size_t>(probs.cols()), "cross_entropy", "label out of range");
  const auto idx = static_cast<Eigen::Index>(label);
  const Scalar p = probs.value()(0, idx);
  const bool clamped = p < static_cast<Scalar>(kProbabilityFloor);
  const Scalar loss = -std::log(clamped ? static_cast<Scalar>(kProbabilityFloor) : p);
  return probs.tape()->record(Tensor<Scalar>::Constant(1, 1, loss), {probs},
                              [probs, idx, p, clamped](Tape<Scalar>& tp, const Tensor<Scalar>& g) {
                                Tensor<Scalar> d = Tensor<Scalar>::Zero(1, tp.value(probs).cols());
                                if (!clamped) d(0, idx) = -g(0, 0) / p;
                                tp.accumulate(probs, d);
                              },
                              true);
}

}  // namespace covit
