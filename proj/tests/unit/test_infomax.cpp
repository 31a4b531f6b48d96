#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "uhgr/infomax.hpp"
#include "uhgr/random.hpp"

using namespace uhgr;
using testutil::max_abs;

TEST_CASE("discriminator scores") {
  ParameterStore store;
  Rng rng(1);
  Discriminator d = Discriminator::create(store, "disc", 2, rng);
  CHECK(d.dim() == 2);
  ad::Tape tape;
  Matrix h(3, 2);
  h << 1, 1, -2, 0.5, 0, 3;
  Matrix s(1, 2);
  s << 1, 1;

  d.weight->value.setZero();
  Matrix zero = d.scores(tape, tape.constant(h), tape.constant(s)).value();
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(zero(i, 0) == doctest::Approx(0.5));

  d.weight->value.setIdentity();
  Matrix id = d.scores(tape, tape.constant(h), tape.constant(s)).value();
  CHECK(id(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));

  // General W against hᵀWs computed by hand.
  d.weight->value << 0.5, -1.0, 2.0, 0.25;
  Matrix logits = d.logits(tape, tape.constant(h), tape.constant(s)).value();
  for (Eigen::Index i = 0; i < 3; ++i) {
    double expect = 0.0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) expect += h(i, a) * d.weight->value(a, b) * s(0, b);
    CHECK(logits(i, 0) == doctest::Approx(expect));
  }

  CHECK_THROWS_AS(d.logits(tape, tape.constant(Matrix::Ones(3, 3)), tape.constant(s)), ShapeError);
  CHECK_THROWS_AS(d.logits(tape, tape.constant(h), tape.constant(Matrix::Ones(2, 2))), ShapeError);
}

TEST_CASE("infomax loss examples") {
  Matrix half = Matrix::Constant(2, 1, 0.5);
  CHECK(infomax_loss(half, half) == doctest::Approx(std::log(2.0)));
  CHECK(infomax_loss(Matrix::Ones(3, 1), Matrix::Zero(4, 1)) < 1e-11);
  // One true pair scored 0.9 and one corrupted pair scored 0.2.
  Matrix p(1, 1), q(1, 1);
  p << 0.9;
  q << 0.2;
  const double expect = -(std::log(0.9) + std::log(0.8)) / 2.0;
  CHECK(infomax_loss(p, q) == doctest::Approx(expect));
  ad::Tape tape;
  CHECK(infomax_loss(tape.constant(p), tape.constant(q)).scalar() == doctest::Approx(expect));
  // Saturated wrong scores stay finite.
  CHECK(std::isfinite(infomax_loss(Matrix::Zero(1, 1), Matrix::Ones(1, 1))));
  CHECK_THROWS(infomax_loss(Matrix(0, 1), Matrix(0, 1)));
}

TEST_CASE("transductive corruption shuffles features and keeps structure") {
  Graph g = testutil::random_graph(30, 0.15, 4, 3);
  g.node_labels.assign(30, 1);
  Graph c = corrupt_transductive(g, 17);
  CHECK(max_abs(Matrix(c.adjacency) - Matrix(g.adjacency)) == 0.0);
  CHECK(c.node_labels == g.node_labels);
  auto perm = corruption_permutation(30, 17);
  CHECK(max_abs(c.features - testutil::permute_rows(g.features, perm)) == 0.0);

  // Same multiset of rows.
  auto rows = [](const Matrix& m) {
    std::vector<std::vector<double>> out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).begin(), m.row(i).end());
    std::sort(out.begin(), out.end());
    return out;
  };
  CHECK(rows(c.features) == rows(g.features));
  CHECK(max_abs(c.features - g.features) > 0.0);
  CHECK(max_abs(corrupt_transductive(g, 17).features - c.features) == 0.0);
}

TEST_CASE("inductive corruption is uniform over the other graphs") {
  Rng rng(5);
  const std::size_t size = 10, index = 3, draws = 10000;
  std::vector<double> counts(size, 0.0);
  for (std::size_t t = 0; t < draws; ++t) counts[corrupt_inductive(size, index, rng)] += 1.0;
  CHECK(counts[index] == 0.0);
  const double expected = static_cast<double>(draws) / static_cast<double>(size - 1);
  double chi2 = 0.0;
  for (std::size_t j = 0; j < size; ++j) {
    if (j == index) continue;
    chi2 += (counts[j] - expected) * (counts[j] - expected) / expected;
  }
  // 8 degrees of freedom, 0.1% critical value.
  CHECK(chi2 < 26.12);

  for (int t = 0; t < 50; ++t) CHECK(corrupt_inductive(2, 0, rng) == 1);
  CHECK_THROWS_AS(corrupt_inductive(1, 0, rng), ConfigError);
  CHECK_THROWS(corrupt_inductive(4, 4, rng));

  GraphDataset ds;
  ds.graphs.push_back(testutil::random_graph(4, 0.5, 2, 1));
  ds.graphs.push_back(testutil::random_graph(6, 0.5, 2, 2));
  for (int t = 0; t < 20; ++t) CHECK(&corrupt_inductive(ds, 0, rng) == &ds.graphs[1]);
}

TEST_CASE("readout takes the final single-row level") {
  Graph g = testutil::random_graph(8, 0.3, 3, 4);
  ParameterStore store;
  Rng rng(6);
  std::vector<DiffPoolBlock> blocks(2);
  blocks[0].ratio = 0.5;
  blocks[0].max_clusters = 4;
  blocks[0].assign_gnn.push(std::make_unique<GcnLayer>(store, "a0", 3, 4, rng, false, false));
  blocks[1].final_block = true;
  blocks[1].assign_gnn.push(std::make_unique<GcnLayer>(store, "a1", 3, 1, rng, false, false));
  ad::Tape tape;
  auto prop = Propagation::from_adjacency(g.adjacency);
  LevelAdjacency adj{std::make_shared<const SparseMatrix>(g.adjacency), {}};
  HierarchyOptions opts;
  opts.forward = ForwardOptions{ad::Mode::kEval, false};
  HierarchyVars vars = hierarchy_forward(tape, blocks, prop, adj, tape.constant(g.features), opts);
  Matrix summary = readout(vars).value();
  // With empty embed stacks, H_final = S1ᵀ S0ᵀ X and S1 is a column of ones.
  Matrix s0 = vars.assignments[0].value();
  Matrix expected = (s0.transpose() * g.features).colwise().sum();
  CHECK(max_abs(summary - expected) < 1e-12);
  // Row-stochastic pooling preserves the feature column sums.
  CHECK(max_abs(summary - g.features.colwise().sum()) < 1e-12);
  CHECK(max_abs(readout(to_trace(vars)) - summary) == 0.0);

  HierarchyTrace bad;
  bad.levels.push_back({Matrix::Ones(3, 2), Matrix::Ones(2, 2), Matrix::Ones(2, 3)});
  CHECK_THROWS(readout(bad));
}
