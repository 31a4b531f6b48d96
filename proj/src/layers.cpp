#include "uhgr/layers.hpp"

#include <cmath>

#include "uhgr/random.hpp"

namespace uhgr {

using ad::Tape;
using ad::Var;

SparseMatrix normalize_adjacency(const SparseMatrix& adjacency) {
  const Eigen::Index n = adjacency.rows();
  if (adjacency.cols() != n) throw ShapeError("normalize_adjacency: adjacency is not square");
  SparseMatrix transposed = adjacency.transpose();
  SparseMatrix diff = adjacency - transposed;
  for (Eigen::Index r = 0; r < diff.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(diff, r); it; ++it) {
      if (it.value() != 0.0) throw FormatError("normalize_adjacency: adjacency is not symmetric");
    }
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(adjacency.nonZeros() + n));
  Eigen::VectorXd degree = Eigen::VectorXd::Ones(n);
  for (Eigen::Index r = 0; r < adjacency.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(adjacency, r); it; ++it) {
      if (it.row() == it.col()) throw FormatError("normalize_adjacency: non-zero diagonal");
      degree(it.row()) += it.value();
    }
  }
  Eigen::VectorXd r = degree.cwiseSqrt().cwiseInverse();
  for (Eigen::Index i = 0; i < n; ++i) trips.emplace_back(i, i, r(i) * r(i));
  for (Eigen::Index row = 0; row < adjacency.outerSize(); ++row) {
    for (SparseMatrix::InnerIterator it(adjacency, row); it; ++it) {
      trips.emplace_back(it.row(), it.col(), it.value() * r(it.row()) * r(it.col()));
    }
  }
  SparseMatrix out(n, n);
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

Matrix normalize_adjacency(const Matrix& adjacency) {
  if (adjacency.rows() != adjacency.cols()) throw ShapeError("normalize_adjacency: not square");
  if ((adjacency - adjacency.transpose()).cwiseAbs().maxCoeff() != 0.0) {
    throw FormatError("normalize_adjacency: adjacency is not symmetric");
  }
  SparseMatrix s = adjacency.sparseView();
  return Matrix(normalize_adjacency(s));
}

// ---- inputs ---------------------------------------------------------------

Var NodeInput::project(Var w) const {
  if (sparse) return ad::spmm(sparse, w);
  return ad::matmul(dense, w);
}

Var NodeInput::materialize(Tape& tape) const {
  if (sparse) return tape.constant(Matrix(*sparse));
  return dense;
}

Propagation Propagation::from_adjacency(const SparseMatrix& adjacency) {
  Propagation p;
  p.size_ = adjacency.rows();
  p.sparse_ = std::make_shared<const SparseMatrix>(normalize_adjacency(adjacency));
  p.pattern_ = std::make_shared<const SparseMatrix>(adjacency);
  return p;
}

Propagation Propagation::from_weighted(Var weighted_adjacency) {
  Propagation p;
  p.size_ = weighted_adjacency.rows();
  p.dense_ = ad::normalize_with_self_loops(weighted_adjacency);
  return p;
}

Var Propagation::apply(Var h) const {
  if (sparse_) return ad::spmm(sparse_, h);
  return ad::matmul(dense_, h);
}

const Matrix& Propagation::attention_mask() const {
  if (!mask_) {
    Matrix mask;
    if (pattern_) {
      mask = Matrix(*pattern_);
    } else {
      mask = dense_.value();
    }
    mask = mask.unaryExpr([](double v) { return v != 0.0 ? 1.0 : 0.0; });
    mask.diagonal().setOnes();
    mask_ = std::make_shared<const Matrix>(std::move(mask));
  }
  return *mask_;
}

// ---- batch norm -----------------------------------------------------------

BatchNormLayer BatchNormLayer::create(ParameterStore& store, const std::string& prefix,
                                      Eigen::Index width) {
  BatchNormLayer bn;
  bn.gamma = &store.add(prefix + ".gamma", Matrix::Ones(1, width));
  bn.beta = &store.add(prefix + ".beta", Matrix::Zero(1, width));
  bn.running_mean = &store.add(prefix + ".running_mean", Matrix::Zero(1, width), false);
  bn.running_var = &store.add(prefix + ".running_var", Matrix::Ones(1, width), false);
  return bn;
}

Var BatchNormLayer::forward(Tape& tape, Var x, ad::Mode mode, bool update_stats) const {
  return ad::batch_norm(x, tape.param(*gamma), tape.param(*beta), running_mean->value,
                        running_var->value, mode, update_stats);
}

// ---- GCN ------------------------------------------------------------------

GcnLayer::GcnLayer(ParameterStore& store, const std::string& prefix, Eigen::Index in_dim,
                   Eigen::Index out_dim, Rng& rng, bool activate, bool batch_norm) {
  if (in_dim < 1 || out_dim < 1) throw ConfigError(prefix + ": layer dimensions must be positive");
  weight_ = &store.add(prefix + ".weight", glorot_uniform(in_dim, out_dim, rng));
  if (activate) slope_ = &store.add(prefix + ".prelu", Matrix::Constant(1, 1, kPreluInit));
  if (batch_norm) bn_ = BatchNormLayer::create(store, prefix + ".bn", out_dim);
}

Var GcnLayer::forward(Tape& tape, const Propagation& prop, const NodeInput& h,
                      const ForwardOptions& opts) const {
  if (h.cols() != in_dim()) {
    throw ShapeError("gcn: input width " + std::to_string(h.cols()) + " != " +
                     std::to_string(in_dim()));
  }
  if (h.rows() != prop.size()) throw ShapeError("gcn: node count does not match adjacency");
  Var out = prop.apply(h.project(tape.param(*weight_)));
  if (slope_ != nullptr) out = ad::prelu(out, tape.param(*slope_));
  if (bn_) out = bn_->forward(tape, out, opts.mode, opts.update_stats);
  return out;
}

// ---- GAT ------------------------------------------------------------------

GatLayer::GatLayer(ParameterStore& store, const std::string& prefix, Eigen::Index in_dim,
                   Eigen::Index head_dim, int heads, bool concat_heads, Rng& rng, bool batch_norm)
    : in_dim_(in_dim), head_dim_(head_dim), concat_(concat_heads) {
  if (heads < 1) throw ConfigError(prefix + ": heads must be at least 1");
  if (in_dim < 1 || head_dim < 1) throw ConfigError(prefix + ": layer dimensions must be positive");
  for (int k = 0; k < heads; ++k) {
    const std::string h = prefix + ".head" + std::to_string(k);
    weights_.push_back(&store.add(h + ".weight", glorot_uniform(in_dim, head_dim, rng)));
    attn_.push_back(&store.add(h + ".attn", glorot_uniform(2 * head_dim, 1, rng)));
  }
  slope_ = &store.add(prefix + ".prelu", Matrix::Constant(1, 1, kPreluInit));
  if (batch_norm) bn_ = BatchNormLayer::create(store, prefix + ".bn", out_dim());
}

GatLayer::HeadPass GatLayer::head_pass(Tape& tape, const Propagation& prop, const NodeInput& h,
                                       int head) const {
  if (h.cols() != in_dim_) {
    throw ShapeError("gat: input width " + std::to_string(h.cols()) + " != " + std::to_string(in_dim_));
  }
  if (h.rows() != prop.size()) throw ShapeError("gat: node count does not match adjacency");
  Var projected = h.project(tape.param(weight(head)));
  Var a = tape.param(attn(head));
  Var src = ad::matmul(projected, ad::slice_rows(a, 0, head_dim_));
  Var dst = ad::matmul(projected, ad::slice_rows(a, head_dim_, head_dim_));
  Var scores = ad::leaky_relu(ad::outer_sum(src, dst), kAttentionLeakySlope);
  Var alpha = ad::row_softmax(scores, &prop.attention_mask());
  return {projected, alpha};
}

std::vector<Var> GatLayer::attention(Tape& tape, const Propagation& prop, const NodeInput& h) const {
  std::vector<Var> out;
  for (int k = 0; k < heads(); ++k) out.push_back(head_pass(tape, prop, h, k).alpha);
  return out;
}

Var GatLayer::forward(Tape& tape, const Propagation& prop, const NodeInput& h,
                      const ForwardOptions& opts) const {
  Var slope = tape.param(*slope_);
  std::vector<Var> outs;
  for (int k = 0; k < heads(); ++k) {
    HeadPass pass = head_pass(tape, prop, h, k);
    outs.push_back(ad::prelu(ad::matmul(pass.alpha, pass.projected), slope));
  }
  Var out;
  if (outs.size() == 1) {
    out = outs.front();
  } else if (concat_) {
    out = ad::hconcat(outs);
  } else {
    out = outs.front();
    for (std::size_t k = 1; k < outs.size(); ++k) out = ad::add(out, outs[k]);
    out = ad::scale(out, 1.0 / static_cast<double>(outs.size()));
  }
  if (bn_) out = bn_->forward(tape, out, opts.mode, opts.update_stats);
  return out;
}

// ---- stack ----------------------------------------------------------------

void EncoderStack::push(std::unique_ptr<Layer> layer) {
  if (!layers_.empty() && layers_.back()->out_dim() != layer->in_dim()) {
    throw ConfigError("encoder stack: layer dimensions do not chain");
  }
  layers_.push_back(std::move(layer));
}

Var EncoderStack::encode(Tape& tape, const Propagation& prop, const NodeInput& x,
                         const ForwardOptions& opts) const {
  if (layers_.empty()) return x.materialize(tape);
  Var h = layers_.front()->forward(tape, prop, x, opts);
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    h = layers_[i]->forward(tape, prop, NodeInput::of(h), opts);
  }
  return h;
}

}  // namespace uhgr
