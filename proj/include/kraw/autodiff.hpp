#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records every operation in append order; backward() walks the
// records in reverse and accumulates adjoints into each node's gradient
// buffer. Values are immutable once recorded, so backward closures read
// their saved inputs straight from the tape.
//
// Only the op-set needed to train the spectral filter layers is provided.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kraw/graph.hpp"
#include "kraw/matrix.hpp"

namespace kraw::ad {

/// Raised when an op produces NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& op)
      : std::runtime_error("non-finite value produced by op '" + op + "'"), op_(op) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

using Rng = std::mt19937_64;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const { return id_; }
  const Matrix& value() const;
  /// Adjoint after backward(); zero if the loss does not depend on this node.
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the adjoint of the node's output and pushes contributions
  /// into its inputs via Tape::accumulate.
  using Backprop = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Untracked input.
  Var constant(Matrix value);
  /// Tracked input whose gradient is accumulated by backward().
  Var leaf(Matrix value);

  /// Appends an op record. Throws NonFiniteError if `value` is not finite.
  Var record(std::string_view op, Matrix value, std::span<const Var> inputs, Backprop backprop);

  const Matrix& value(Var v) const { return nodes_.at(v.id()).value; }
  const Matrix& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }

  /// Adds `g` into the adjoint of `v` (no-op when v is untracked).
  void accumulate(Var v, const Matrix& g);
  /// Adds `alpha * g` into the adjoint of `v`.
  void accumulate_scaled(Var v, double alpha, const Matrix& g);
  /// Direct access to the adjoint buffer for in-place accumulation; nullptr
  /// when v is untracked.
  Matrix* grad_buffer(Var v);

  /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1x1.
  /// Throws std::logic_error if called a second time before reset().
  void backward(Var loss);
  /// Drops all records.
  void reset();

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;

  struct Node {
    std::string_view op;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool touched = false;
    Backprop backprop;
  };

  void check_owned(Var v) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Ops. Every input Var must live on the same tape. Sparse operands are held
// by reference and must outlive the tape.

Var spmm(const graph::SparseMatrix& s, Var x);
Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// s * X for a 1x1 tracked scalar s.
Var scale(Var x, Var s);
Var sum(Var x);
/// sum(X .* weights) with constant weights; handy for probing adjoints.
Var weighted_sum(Var x, const Matrix& weights);
Var relu(Var x);
/// Elementwise logistic function.
Var sigmoid(Var x);
/// Per-row normalization to zero mean and unit variance (biased, eps inside
/// the square root), then per-column gain and offset (both 1 x cols).
Var layernorm(Var x, Var gain, Var offset, double eps = 1e-5);
/// Inverted dropout. Identity when !training or rate == 0.
Var dropout(Var x, double rate, Rng& rng, bool training);
Var concat_cols(std::span<const Var> parts);
/// Z * W + 1 * b with b of shape 1 x out.
Var linear(Var z, Var w, Var b);
/// Mean negative log-likelihood of `labels[r]` over the given rows.
Var softmax_cross_entropy(Var logits, std::span<const int> labels,
                          std::span<const std::size_t> rows);

/// Coefficients of one step of a three-term recurrence, plus their
/// derivatives with respect to an optional scalar shape parameter.
struct StepCoeffs {
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  double db = 0.0;
  double dc = 0.0;
};

/// next = a * S * cur - b * cur - c * prev.
///
/// When `shape` is given, b and c are treated as functions of it with
/// derivatives db and dc, and the shape adjoint receives
/// -db * <g, cur> - dc * <g, prev>.
Var recurrence_step(const graph::SparseMatrix& s, Var cur, std::optional<Var> prev,
                    const StepCoeffs& coeffs, std::optional<Var> shape = std::nullopt);

}  // namespace kraw::ad
