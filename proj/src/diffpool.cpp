#include "uhgr/diffpool.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace uhgr {

using ad::Tape;
using ad::Var;

Var LevelAdjacency::times(Var m) const {
  if (sparse) return ad::spmm(sparse, m);
  return ad::matmul(dense, m);
}

Var LevelAdjacency::squared_norm(Tape& tape) const {
  if (sparse) return tape.constant(Matrix::Constant(1, 1, sparse->squaredNorm()));
  return ad::sum_squares(dense);
}

Eigen::Index DiffPoolBlock::clusters_for(Eigen::Index n) const {
  if (final_block) return 1;
  const auto want = static_cast<Eigen::Index>(std::ceil(ratio * static_cast<double>(n) - 1e-12));
  return std::clamp<Eigen::Index>(want, 1, max_clusters);
}

Var assignment_matrix(Tape& tape, const DiffPoolBlock& block, const Propagation& prop, Var h,
                      Eigen::Index clusters, const ForwardOptions& opts) {
  if (clusters < 1) throw ConfigError("assignment_matrix: need at least one cluster");
  if (h.rows() != prop.size()) throw ShapeError("assignment_matrix: node count mismatch");
  if (clusters > h.rows()) {
    std::cerr << "warning: " << clusters << " clusters requested for " << h.rows()
              << " nodes (over-parameterised assignment)\n";
  }
  Var logits = block.assign_gnn.encode(tape, prop, NodeInput::of(h), opts);
  if (logits.cols() < clusters) {
    throw ShapeError("assignment_matrix: assignment GNN emits " + std::to_string(logits.cols()) +
                     " logits, " + std::to_string(clusters) + " clusters requested");
  }
  if (logits.cols() != clusters) logits = ad::slice_cols(logits, 0, clusters);
  return ad::row_softmax(logits);
}

Pooled pool(Var assignment, Var z, const LevelAdjacency& adjacency) {
  const Eigen::Index n = assignment.rows();
  if (z.rows() != n || adjacency.size() != n) {
    throw ShapeError("pool: assignment has " + std::to_string(n) + " rows, embeddings " +
                     std::to_string(z.rows()) + ", adjacency " + std::to_string(adjacency.size()));
  }
  Pooled out;
  out.embeddings = ad::matmul_tn(assignment, z);
  out.adjacency = ad::matmul_tn(assignment, adjacency.times(assignment));
  return out;
}

HierarchyVars hierarchy_forward(Tape& tape, const std::vector<DiffPoolBlock>& blocks,
                                const Propagation& prop, const LevelAdjacency& adjacency, Var h,
                                const HierarchyOptions& options) {
  if (blocks.empty()) throw ConfigError("hierarchy_forward: no pooling blocks");
  if (!blocks.back().final_block) {
    throw ConfigError("hierarchy_forward: the last block must collapse to one cluster");
  }
  HierarchyVars vars;
  vars.node_embeddings = h;

  Propagation level_prop = prop;
  LevelAdjacency level_adj = adjacency;
  Var level_h = h;
  for (const DiffPoolBlock& block : blocks) {
    const Eigen::Index n = level_h.rows();
    const Eigen::Index clusters = block.clusters_for(n);
    Var z = block.embed_gnn.encode(tape, level_prop, NodeInput::of(level_h), options.forward);
    Var s = assignment_matrix(tape, block, level_prop, level_h, clusters, options.forward);
    Pooled next = pool(s, z, level_adj);

    if (options.aux_losses) {
      // ‖A − SSᵀ‖²_F = ‖A‖² − 2 tr(SᵀAS) + ‖SᵀS‖², avoiding the n×n product.
      Var link = ad::add(level_adj.squared_norm(tape),
                         ad::sub(ad::sum_squares(ad::matmul_tn(s, s)),
                                 ad::scale(ad::trace(next.adjacency), 2.0)));
      link = ad::scale(link, 1.0 / static_cast<double>(n * n));
      Var term = ad::add(link, ad::row_entropy_mean(s));
      vars.aux_loss = vars.aux_loss ? ad::add(*vars.aux_loss, term) : term;
    }

    vars.level_inputs.push_back(level_h);
    vars.embeddings.push_back(z);
    vars.assignments.push_back(s);
    vars.adjacencies.push_back(next.adjacency);
    vars.pooled.push_back(next.embeddings);

    level_h = next.embeddings;
    level_adj = LevelAdjacency{nullptr, next.adjacency};
    if (&block != &blocks.back()) level_prop = Propagation::from_weighted(next.adjacency);
  }
  return vars;
}

std::vector<Eigen::Index> HierarchyTrace::level_sizes() const {
  std::vector<Eigen::Index> sizes{node_embeddings.rows()};
  for (const Level& l : levels) sizes.push_back(l.embeddings.rows());
  return sizes;
}

HierarchyTrace to_trace(const HierarchyVars& vars) {
  HierarchyTrace trace;
  trace.node_embeddings = vars.node_embeddings.value();
  for (std::size_t i = 0; i < vars.assignments.size(); ++i) {
    trace.levels.push_back(
        {vars.assignments[i].value(), vars.adjacencies[i].value(), vars.pooled[i].value()});
  }
  return trace;
}

}  // namespace uhgr
