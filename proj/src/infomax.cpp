#include "uhgr/infomax.hpp"

#include <algorithm>
#include <cmath>

#include "uhgr/random.hpp"

namespace uhgr {

using ad::Tape;
using ad::Var;

Discriminator Discriminator::create(ParameterStore& store, const std::string& name,
                                    Eigen::Index dim, Rng& rng) {
  if (dim < 1) throw ConfigError("discriminator: dimension must be positive");
  Discriminator d;
  d.weight = &store.add(name, glorot_uniform(dim, dim, rng));
  return d;
}

Var Discriminator::logits(Tape& tape, Var h, Var summary) const {
  if (summary.rows() != 1) throw ShapeError("discriminator: summary must be a single row");
  if (h.cols() != dim() || summary.cols() != dim()) {
    throw ShapeError("discriminator: embedding width " + std::to_string(h.cols()) +
                     ", summary width " + std::to_string(summary.cols()) + ", weight " +
                     std::to_string(dim()));
  }
  return ad::matmul(h, ad::matmul_nt(tape.param(*weight), summary));
}

Var Discriminator::scores(Tape& tape, Var h, Var summary) const {
  return ad::sigmoid(logits(tape, h, summary));
}

Var readout(const HierarchyVars& vars) {
  if (vars.pooled.empty()) throw ShapeError("readout: empty hierarchy");
  Var s = vars.final_embeddings();
  if (s.rows() != 1) {
    throw ShapeError("readout: final level has " + std::to_string(s.rows()) + " clusters, expected 1");
  }
  return s;
}

Matrix readout(const HierarchyTrace& trace) {
  if (trace.levels.empty()) throw ShapeError("readout: empty hierarchy");
  const Matrix& s = trace.levels.back().embeddings;
  if (s.rows() != 1) {
    throw ShapeError("readout: final level has " + std::to_string(s.rows()) + " clusters, expected 1");
  }
  return s;
}

std::vector<std::size_t> corruption_permutation(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return rng.permutation(n);
}

Graph corrupt_transductive(const Graph& graph, std::uint64_t seed) {
  const auto perm = corruption_permutation(static_cast<std::size_t>(graph.num_nodes()), seed);
  Graph out;
  out.adjacency = graph.adjacency;
  out.features.resize(graph.features.rows(), graph.features.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) =
        graph.features.row(static_cast<Eigen::Index>(perm[i]));
  }
  out.node_labels = graph.node_labels;
  out.graph_label = graph.graph_label;
  return out;
}

std::size_t corrupt_inductive(std::size_t dataset_size, std::size_t index, Rng& rng) {
  if (dataset_size < 2) throw ConfigError("inductive corruption needs at least two graphs");
  if (index >= dataset_size) throw ShapeError("corrupt_inductive: index out of range");
  std::size_t j = static_cast<std::size_t>(rng.below(dataset_size - 1));
  return j >= index ? j + 1 : j;
}

const Graph& corrupt_inductive(const GraphDataset& dataset, std::size_t index, Rng& rng) {
  return dataset.graphs[corrupt_inductive(dataset.graphs.size(), index, rng)];
}

Var infomax_loss(Var pos_scores, Var neg_scores) { return ad::bce_scores(pos_scores, neg_scores); }

double infomax_loss(const Matrix& pos_scores, const Matrix& neg_scores) {
  const auto clamp = [](double p) { return std::clamp(p, ad::kScoreClamp, 1.0 - ad::kScoreClamp); };
  double total = 0.0;
  for (Eigen::Index i = 0; i < pos_scores.size(); ++i) total += std::log(clamp(pos_scores.data()[i]));
  for (Eigen::Index i = 0; i < neg_scores.size(); ++i) {
    total += std::log(1.0 - clamp(neg_scores.data()[i]));
  }
  if (pos_scores.size() == 0 || neg_scores.size() == 0) throw ShapeError("infomax_loss: no scores");
  const auto count = static_cast<double>(pos_scores.size() + neg_scores.size());
  return -total / count;
}

}  // namespace uhgr
