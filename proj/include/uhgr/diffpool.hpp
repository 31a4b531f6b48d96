#pragma once

// Differentiable hierarchical coarsening. Each block computes embeddings
// Z = GNN_embed(A, H) and soft assignments S = softmax(GNN_assign(A, H)), then
// pools to H' = SᵀZ and A' = SᵀAS. The last block always collapses to a single
// cluster, whose embedding row is the graph summary.

#include <memory>
#include <optional>
#include <vector>

#include "uhgr/layers.hpp"

namespace uhgr {

// Un-normalised adjacency of one hierarchy level: the constant binary input
// graph at level 0, a recorded weighted matrix afterwards.
struct LevelAdjacency {
  std::shared_ptr<const SparseMatrix> sparse;
  ad::Var dense;

  Eigen::Index size() const { return sparse ? sparse->rows() : dense.rows(); }
  // A · m
  ad::Var times(ad::Var m) const;
  // ‖A‖²_F as a recorded scalar.
  ad::Var squared_norm(ad::Tape& tape) const;
};

struct DiffPoolBlock {
  EncoderStack embed_gnn;   // empty: Z = H
  EncoderStack assign_gnn;  // emits max_clusters logits per node
  double ratio = 0.25;
  Eigen::Index max_clusters = 1;
  bool final_block = false;

  // ceil(ratio · n), clipped to [1, max_clusters]; 1 for the final block.
  Eigen::Index clusters_for(Eigen::Index n) const;
};

// S = row_softmax of the first `clusters` assignment logits. Requesting more
// clusters than nodes is allowed but reported on stderr.
ad::Var assignment_matrix(ad::Tape& tape, const DiffPoolBlock& block, const Propagation& prop,
                          ad::Var h, Eigen::Index clusters, const ForwardOptions& opts);

struct Pooled {
  ad::Var embeddings;  // SᵀZ
  ad::Var adjacency;   // SᵀAS
};

Pooled pool(ad::Var assignment, ad::Var z, const LevelAdjacency& adjacency);

struct HierarchyVars {
  ad::Var node_embeddings;             // level-0 H
  std::vector<ad::Var> level_inputs;   // H^(i) fed to block i
  std::vector<ad::Var> embeddings;     // Z^(i)
  std::vector<ad::Var> assignments;    // S^(i)
  std::vector<ad::Var> adjacencies;    // A^(i+1)
  std::vector<ad::Var> pooled;         // H^(i+1)
  std::optional<ad::Var> aux_loss;     // link-prediction + entropy terms

  ad::Var final_embeddings() const { return pooled.back(); }
};

struct HierarchyOptions {
  ForwardOptions forward;
  // Adds ‖A − SSᵀ‖²_F / n² and the mean assignment entropy per block.
  bool aux_losses = false;
};

// Runs every block in order starting from level-0 node embeddings `h`.
HierarchyVars hierarchy_forward(ad::Tape& tape, const std::vector<DiffPoolBlock>& blocks,
                                const Propagation& prop, const LevelAdjacency& adjacency,
                                ad::Var h, const HierarchyOptions& options = {});

// Plain-value copy of a hierarchy for export and inspection.
struct HierarchyTrace {
  struct Level {
    Matrix assignment;  // n_i × n_{i+1}, row-stochastic
    Matrix adjacency;   // A^(i+1)
    Matrix embeddings;  // H^(i+1)
  };
  Matrix node_embeddings;
  std::vector<Level> levels;

  std::vector<Eigen::Index> level_sizes() const;
};

HierarchyTrace to_trace(const HierarchyVars& vars);

}  // namespace uhgr
