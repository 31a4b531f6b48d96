#pragma once

// Message-passing layers: the symmetric-normalised GCN rule and single- or
// multi-head graph attention, each followed by PReLU and optional batch norm.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "uhgr/params.hpp"
#include "uhgr/tensor.hpp"

namespace uhgr {

class Rng;

// D̂^{-1/2}(A + I)D̂^{-1/2} for a symmetric binary adjacency with zero
// diagonal. Rejects asymmetric input.
SparseMatrix normalize_adjacency(const SparseMatrix& adjacency);
Matrix normalize_adjacency(const Matrix& adjacency);

// Node feature input: either a constant sparse matrix (raw bag-of-words
// features) or a recorded dense value.
struct NodeInput {
  std::shared_ptr<const SparseMatrix> sparse;
  ad::Var dense;

  static NodeInput of(ad::Var v) { return NodeInput{nullptr, v}; }
  static NodeInput of(std::shared_ptr<const SparseMatrix> s) { return NodeInput{std::move(s), {}}; }

  Eigen::Index rows() const { return sparse ? sparse->rows() : dense.rows(); }
  Eigen::Index cols() const { return sparse ? sparse->cols() : dense.cols(); }
  // x · w
  ad::Var project(ad::Var w) const;
  // The input as a recorded dense value.
  ad::Var materialize(ad::Tape& tape) const;
};

// The propagation operator of one graph level. Level 0 uses a constant
// sparse normalised adjacency; coarsened levels carry a differentiable dense
// weighted adjacency that is renormalised on construction.
class Propagation {
 public:
  static Propagation from_adjacency(const SparseMatrix& adjacency);
  static Propagation from_weighted(ad::Var weighted_adjacency);

  Eigen::Index size() const { return size_; }
  ad::Var apply(ad::Var h) const;
  // Binary n×n neighbourhood mask including self loops, built on first use.
  const Matrix& attention_mask() const;
  bool is_sparse() const { return sparse_ != nullptr; }

 private:
  Eigen::Index size_ = 0;
  std::shared_ptr<const SparseMatrix> sparse_;
  std::shared_ptr<const SparseMatrix> pattern_;
  ad::Var dense_;
  mutable std::shared_ptr<const Matrix> mask_;
};

struct BatchNormLayer {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  Parameter* running_mean = nullptr;
  Parameter* running_var = nullptr;

  static BatchNormLayer create(ParameterStore& store, const std::string& prefix, Eigen::Index width);
  ad::Var forward(ad::Tape& tape, ad::Var x, ad::Mode mode, bool update_stats) const;
};

struct ForwardOptions {
  ad::Mode mode = ad::Mode::kTrain;
  bool update_stats = true;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual ad::Var forward(ad::Tape& tape, const Propagation& prop, const NodeInput& h,
                          const ForwardOptions& opts) const = 0;
  virtual Eigen::Index in_dim() const = 0;
  virtual Eigen::Index out_dim() const = 0;
};

// PReLU(Â·h·W), optionally batch-normed. With `activate` false the layer is
// linear (used for assignment logits).
class GcnLayer : public Layer {
 public:
  GcnLayer(ParameterStore& store, const std::string& prefix, Eigen::Index in_dim, Eigen::Index out_dim,
           Rng& rng, bool activate = true, bool batch_norm = true);

  ad::Var forward(ad::Tape& tape, const Propagation& prop, const NodeInput& h,
                  const ForwardOptions& opts) const override;
  Eigen::Index in_dim() const override { return weight_->value.rows(); }
  Eigen::Index out_dim() const override { return weight_->value.cols(); }

  Parameter& weight() const { return *weight_; }
  Parameter* prelu_slope() const { return slope_; }
  bool has_batch_norm() const { return bn_.has_value(); }

 private:
  Parameter* weight_;
  Parameter* slope_ = nullptr;
  std::optional<BatchNormLayer> bn_;
};

inline constexpr double kAttentionLeakySlope = 0.2;
inline constexpr double kPreluInit = 0.25;

// Additive attention: e_ij = LeakyReLU(a_srcᵀWh_i + a_dstᵀWh_j) over
// j ∈ N(i) ∪ {i}, normalised by a masked row softmax.
class GatLayer : public Layer {
 public:
  // `concat_heads` concatenates head outputs (out_dim = heads·head_dim);
  // otherwise heads are averaged (out_dim = head_dim).
  GatLayer(ParameterStore& store, const std::string& prefix, Eigen::Index in_dim,
           Eigen::Index head_dim, int heads, bool concat_heads, Rng& rng, bool batch_norm = true);

  ad::Var forward(ad::Tape& tape, const Propagation& prop, const NodeInput& h,
                  const ForwardOptions& opts) const override;
  // One n×n attention matrix per head.
  std::vector<ad::Var> attention(ad::Tape& tape, const Propagation& prop, const NodeInput& h) const;

  Eigen::Index in_dim() const override { return in_dim_; }
  Eigen::Index out_dim() const override { return concat_ ? head_dim_ * heads() : head_dim_; }
  int heads() const { return static_cast<int>(weights_.size()); }
  Parameter& weight(int head) const { return *weights_[static_cast<std::size_t>(head)]; }
  Parameter& attn(int head) const { return *attn_[static_cast<std::size_t>(head)]; }
  Parameter& prelu_slope() const { return *slope_; }

 private:
  struct HeadPass {
    ad::Var projected;
    ad::Var alpha;
  };
  HeadPass head_pass(ad::Tape& tape, const Propagation& prop, const NodeInput& h, int head) const;

  Eigen::Index in_dim_;
  Eigen::Index head_dim_;
  bool concat_;
  std::vector<Parameter*> weights_;
  std::vector<Parameter*> attn_;
  Parameter* slope_;
  std::optional<BatchNormLayer> bn_;
};

// Ordered layers; H^(0) is the input and the last output is returned.
class EncoderStack {
 public:
  void push(std::unique_ptr<Layer> layer);
  bool empty() const { return layers_.empty(); }
  std::size_t size() const { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }
  Eigen::Index out_dim(Eigen::Index input_dim) const {
    return layers_.empty() ? input_dim : layers_.back()->out_dim();
  }

  ad::Var encode(ad::Tape& tape, const Propagation& prop, const NodeInput& x,
                 const ForwardOptions& opts) const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace uhgr
