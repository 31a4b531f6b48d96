#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "uhgr/graph.hpp"
#include "uhgr/random.hpp"
#include "uhgr/tensor.hpp"

namespace testutil {

using uhgr::Graph;
using uhgr::Matrix;
using uhgr::SparseMatrix;

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, uhgr::Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

inline SparseMatrix to_sparse(const Matrix& dense) {
  SparseMatrix s = dense.sparseView();
  s.makeCompressed();
  return s;
}

// Erdos-Renyi graph with uniform features; never leaves a node isolated when
// `connect` is set (a spanning path is added).
inline Graph random_graph(std::size_t n, double p, Eigen::Index f, std::uint64_t seed,
                          bool connect = true) {
  uhgr::Rng rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng.uniform() < p || (connect && j == i + 1)) edges.emplace_back(i, j);
    }
  }
  Graph g;
  g.adjacency = uhgr::adjacency_from_edges(n, edges);
  g.features = random_matrix(static_cast<Eigen::Index>(n), f, rng, 0.0, 1.0);
  return g;
}

// Two triangles joined by a bridge: 0-1-2 and 3-4-5 with 2-3.
inline Graph toy6(std::uint64_t seed = 7) {
  uhgr::Rng rng(seed);
  Graph g;
  g.adjacency = uhgr::adjacency_from_edges(6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}, {2, 3}});
  g.features = random_matrix(6, 4, rng, 0.0, 1.0);
  g.node_labels = {0, 0, 0, 1, 1, 1};
  return g;
}

// Straight-from-the-definition D̂^{-1/2}(A+I)D̂^{-1/2}, entry by entry.
inline Matrix oracle_normalize(const Matrix& a) {
  const Eigen::Index n = a.rows();
  std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    deg[static_cast<std::size_t>(i)] = 1.0;
    for (Eigen::Index j = 0; j < n; ++j) deg[static_cast<std::size_t>(i)] += a(i, j);
  }
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double hat = a(i, j) + (i == j ? 1.0 : 0.0);
      out(i, j) = hat / std::sqrt(deg[static_cast<std::size_t>(i)] * deg[static_cast<std::size_t>(j)]);
    }
  }
  return out;
}

// Row i of P·M is row perm[i] of M.
inline Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(perm[i]));
  }
  return out;
}

// P A Pᵀ for the same convention.
inline Matrix permute_sym(const Matrix& a, const std::vector<std::size_t>& perm) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t j = 0; j < perm.size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          a(static_cast<Eigen::Index>(perm[i]), static_cast<Eigen::Index>(perm[j]));
    }
  }
  return out;
}

inline Graph permute_graph(const Graph& g, const std::vector<std::size_t>& perm) {
  Graph out;
  out.adjacency = to_sparse(permute_sym(Matrix(g.adjacency), perm));
  out.features = permute_rows(g.features, perm);
  for (std::size_t i = 0; i < perm.size() && !g.node_labels.empty(); ++i) {
    out.node_labels.push_back(g.node_labels[perm[i]]);
  }
  out.graph_label = g.graph_label;
  return out;
}

inline double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace testutil
