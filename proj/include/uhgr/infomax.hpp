#pragma once

// Local/global contrast: a bilinear discriminator scores (node embedding,
// graph summary) pairs, and a binary cross-entropy separates true pairs from
// pairs built with corrupted local features.

#include <cstdint>

#include "uhgr/diffpool.hpp"
#include "uhgr/graph.hpp"

namespace uhgr {

class Rng;

struct Discriminator {
  Parameter* weight = nullptr;  // f'×f'

  static Discriminator create(ParameterStore& store, const std::string& name, Eigen::Index dim,
                              Rng& rng);
  Eigen::Index dim() const { return weight->value.rows(); }

  // h_i ᵀ W s for every row of h; n×1.
  ad::Var logits(ad::Tape& tape, ad::Var h, ad::Var summary) const;
  // sigmoid(logits); entries in (0,1).
  ad::Var scores(ad::Tape& tape, ad::Var h, ad::Var summary) const;
};

// The graph summary: the single embedding row left after the final block.
ad::Var readout(const HierarchyVars& vars);
Matrix readout(const HierarchyTrace& trace);

// Same adjacency, feature rows permuted uniformly at random.
Graph corrupt_transductive(const Graph& graph, std::uint64_t seed);
// Permutation used by corrupt_transductive for `seed`.
std::vector<std::size_t> corruption_permutation(std::size_t n, std::uint64_t seed);

// Index of a uniformly chosen graph other than `index`.
std::size_t corrupt_inductive(std::size_t dataset_size, std::size_t index, Rng& rng);
const Graph& corrupt_inductive(const GraphDataset& dataset, std::size_t index, Rng& rng);

// -(Σ log p_i + Σ log(1 - q_j)) / (n + m) over clamped scores.
ad::Var infomax_loss(ad::Var pos_scores, ad::Var neg_scores);
double infomax_loss(const Matrix& pos_scores, const Matrix& neg_scores);

}  // namespace uhgr
