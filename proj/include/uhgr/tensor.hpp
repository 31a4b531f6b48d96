#pragma once

// Dense matrices with reverse-mode differentiation.
//
// A Tape records every primitive applied during a forward pass. Each record
// keeps its output value and a closure that maps the output gradient onto
// its inputs. `Tape::backward` walks the records once in reverse and
// accumulates into the bound Parameters.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "uhgr/error.hpp"

namespace uhgr {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Throws NumericError naming `where` if any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* where);

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string name, Matrix value, bool trainable = true);

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

namespace ad {

class Tape;

// Lightweight handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn =
      std::function<void(Tape&, const Matrix& out_grad, const Matrix& out_value)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Binds a leaf to `p`; gradients reaching it are added to p.grad.
  Var param(Parameter& p);

  // Records a primitive. `backward` may be empty when no input needs a
  // gradient.
  Var record(Matrix value, std::vector<Var> inputs, BackwardFn backward, const char* op);

  // Seeds d(loss)/d(loss) = 1 and propagates. Gradients of every trainable
  // Parameter reachable from `loss` are accumulated into Parameter::grad.
  void backward(Var loss);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Adds `g` into the gradient slot of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Matrix& g);
  // Gradient of a node after backward (zero matrix if nothing reached it).
  Matrix grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool has_grad = false;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---- primitives -----------------------------------------------------------

Var matmul(Var a, Var b);
// aᵀ·b without materialising the transpose.
Var matmul_tn(Var a, Var b);
// a·bᵀ.
Var matmul_nt(Var a, Var b);
// Constant sparse left operand.
Var spmm(std::shared_ptr<const SparseMatrix> a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
// Elementwise product.
Var hadamard(Var a, Var b);

// Softmax along each row. When `mask` is given, entries with mask == 0 are
// excluded and come out exactly 0; a row with no unmasked entry is an error.
Var row_softmax(Var m, const Matrix* mask = nullptr);
// Entrywise x > 0 ? x : slope·x with a learnable 1×1 slope.
Var prelu(Var m, Var slope);
Var leaky_relu(Var m, double negative_slope);
Var sigmoid(Var m);
// out_ij = col_a_i + row_b_j, for an n×1 column and an m×1 column.
Var outer_sum(Var col_a, Var col_b);
Var hconcat(const std::vector<Var>& parts);

Var sum(Var m);
Var column_sum(Var m);
Var sum_squares(Var m);
Var trace(Var m);
Var sqrt(Var scalar);

// D^{-1/2}(A + I)D^{-1/2} for a weighted nonnegative square matrix, where D is
// the row-sum degree of A + I. Differentiable in A.
Var normalize_with_self_loops(Var a);

// Mean over rows of -Σ_j p_ij log p_ij.
Var row_entropy_mean(Var probs);

// Binary cross-entropy of positive and negative probability scores, each
// clamped to [kScoreClamp, 1 - kScoreClamp]:
//   -(Σ log p_i + Σ log(1 - q_j)) / (n + m)
inline constexpr double kScoreClamp = 1e-12;
Var bce_scores(Var pos_scores, Var neg_scores);
// Same objective written on pre-sigmoid logits (stable for saturated logits).
Var bce_logits(Var pos_logits, Var neg_logits);

enum class Mode { kTrain, kEval };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Column-wise batch normalisation followed by gamma·x̂ + beta. In train mode
// batch statistics are used (biased variance) and, when `update_stats` is
// set, the running statistics (1×cols each) move by kBatchNormMomentum using
// the unbiased variance. Empty running statistics are initialised to 0 / 1.
Var batch_norm(Var x, Var gamma, Var beta, Matrix& running_mean, Matrix& running_var, Mode mode,
               bool update_stats = true);

// Rows [start, start + count) of `m`.
Var slice_rows(Var m, Eigen::Index start, Eigen::Index count);
// Columns [start, start + count) of `m`.
Var slice_cols(Var m, Eigen::Index start, Eigen::Index count);

// ---- verification ---------------------------------------------------------

using LossBuilder = std::function<Var(Tape&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // Per-parameter cap on checked entries; 0 checks every entry.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  std::size_t entries_checked = 0;
};

// Compares analytic gradients from `build` against central differences:
//   |analytic - numeric| / max(1, |analytic|, |numeric|)
// Throws Error if two forward passes disagree (non-deterministic build).
GradCheckResult gradient_check(const LossBuilder& build, const std::vector<Parameter*>& params,
                               const GradCheckOptions& options = {});

}  // namespace ad

// Xavier/Glorot uniform initialisation.
class Rng;
Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace uhgr
