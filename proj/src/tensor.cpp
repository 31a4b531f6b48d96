#include "uhgr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "uhgr/random.hpp"

namespace uhgr {

namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_of(a) + " and " +
                   shape_of(b));
}

void require_scalar(const Matrix& m, const char* op) {
  if (m.rows() != 1 || m.cols() != 1) {
    throw ShapeError(std::string(op) + ": expected a 1x1 scalar, got " + shape_of(m));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Matrix scalar_matrix(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

}  // namespace

void require_finite(const Matrix& m, const char* where) {
  if (!m.allFinite()) {
    throw NumericError(std::string(where) + ": non-finite value produced");
  }
}

Parameter::Parameter(std::string n, Matrix v, bool t)
    : name(std::move(n)), value(std::move(v)), trainable(t) {
  zero_grad();
}

Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
  return m;
}

namespace ad {

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  require_scalar(value(), "scalar");
  return value()(0, 0);
}

Var Tape::constant(Matrix value) {
  require_finite(value, "constant");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  require_finite(p.value, p.name.c_str());
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = p.trainable;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::vector<Var> inputs, BackwardFn backward, const char* op) {
  require_finite(value, op);
  Node n;
  n.value = std::move(value);
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw Error(std::string(op) + ": input recorded on another tape");
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.has_grad) return n.grad;
  return Matrix::Zero(n.value.rows(), n.value.cols());
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw Error("backward: loss recorded on another tape");
  require_scalar(loss.value(), "backward");
  if (backward_done_) throw Error("backward: tape already traversed");
  backward_done_ = true;

  accumulate(loss.id(), scalar_matrix(1.0));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.param != nullptr) {
      Parameter& p = *n.param;
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
      p.grad += n.grad;
    } else if (n.backward) {
      n.backward(*this, n.grad, n.value);
    }
    if (n.backward) {
      // Interior gradients are no longer needed once propagated.
      n.grad.resize(0, 0);
      n.has_grad = false;
    }
  }
}

// ---- products -------------------------------------------------------------

Var matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_fail("matmul", av, bv);
  Matrix out;
  out.noalias() = av * bv;
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& t, const Matrix& g, const Matrix&) {
        if (t.requires_grad(a.id())) t.accumulate(a.id(), g * b.value().transpose());
        if (t.requires_grad(b.id())) t.accumulate(b.id(), a.value().transpose() * g);
      },
      "matmul");
}

Var matmul_tn(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) shape_fail("matmul_tn", av, bv);
  Matrix out;
  out.noalias() = av.transpose() * bv;
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& t, const Matrix& g, const Matrix&) {
        if (t.requires_grad(a.id())) t.accumulate(a.id(), b.value() * g.transpose());
        if (t.requires_grad(b.id())) t.accumulate(b.id(), a.value() * g);
      },
      "matmul_tn");
}

Var matmul_nt(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) shape_fail("matmul_nt", av, bv);
  Matrix out;
  out.noalias() = av * bv.transpose();
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& t, const Matrix& g, const Matrix&) {
        if (t.requires_grad(a.id())) t.accumulate(a.id(), g * b.value());
        if (t.requires_grad(b.id())) t.accumulate(b.id(), g.transpose() * a.value());
      },
      "matmul_nt");
}

Var spmm(std::shared_ptr<const SparseMatrix> a, Var b) {
  const Matrix& bv = b.value();
  if (a->cols() != bv.rows()) {
    throw ShapeError("spmm: incompatible shapes " + std::to_string(a->rows()) + "x" +
                     std::to_string(a->cols()) + " and " + shape_of(bv));
  }
  Matrix out = (*a) * bv;
  return b.tape().record(
      std::move(out), {b},
      [a, b](Tape& t, const Matrix& g, const Matrix&) {
        Matrix gb = a->transpose() * g;
        t.accumulate(b.id(), gb);
      },
      "spmm");
}

Var transpose(Var a) {
  Matrix out = a.value().transpose();
  return a.tape().record(
      std::move(out), {a},
      [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a.id(), g.transpose()); },
      "transpose");
}

// ---- elementwise ----------------------------------------------------------

Var add(Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("add", a.value(), b.value());
  Matrix out = a.value() + b.value();
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& t, const Matrix& g, const Matrix&) {
        t.accumulate(a.id(), g);
        t.accumulate(b.id(), g);
      },
      "add");
}

Var sub(Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("sub", a.value(), b.value());
  Matrix out = a.value() - b.value();
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& t, const Matrix& g, const Matrix&) {
        t.accumulate(a.id(), g);
        if (t.requires_grad(b.id())) t.accumulate(b.id(), -g);
      },
      "sub");
}

Var scale(Var a, double factor) {
  Matrix out = a.value() * factor;
  return a.tape().record(
      std::move(out), {a},
      [a, factor](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a.id(), g * factor); },
      "scale");
}

Var add_scalar(Var a, double offset) {
  Matrix out = a.value().array() + offset;
  return a.tape().record(
      std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a.id(), g); },
      "add_scalar");
}

Var hadamard(Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("hadamard", a.value(), b.value());
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& t, const Matrix& g, const Matrix&) {
        if (t.requires_grad(a.id())) t.accumulate(a.id(), g.cwiseProduct(b.value()));
        if (t.requires_grad(b.id())) t.accumulate(b.id(), g.cwiseProduct(a.value()));
      },
      "hadamard");
}

Var row_softmax(Var m, const Matrix* mask) {
  const Matrix& x = m.value();
  if (mask != nullptr && (mask->rows() != x.rows() || mask->cols() != x.cols())) {
    shape_fail("row_softmax mask", x, *mask);
  }
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (mask == nullptr || (*mask)(i, j) != 0.0) row_max = std::max(row_max, x(i, j));
    }
    if (row_max == -std::numeric_limits<double>::infinity()) {
      throw NumericError("row_softmax: row " + std::to_string(i) + " is fully masked");
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (mask == nullptr || (*mask)(i, j) != 0.0) {
        out(i, j) = std::exp(x(i, j) - row_max);
        total += out(i, j);
      }
    }
    out.row(i) /= total;
  }
  return m.tape().record(
      std::move(out), {m},
      [m](Tape& t, const Matrix& g, const Matrix& y) {
        Eigen::VectorXd dots = (g.cwiseProduct(y)).rowwise().sum();
        Matrix gx = y.cwiseProduct(g - dots.replicate(1, g.cols()));
        t.accumulate(m.id(), gx);
      },
      "row_softmax");
}

Var prelu(Var m, Var slope) {
  require_scalar(slope.value(), "prelu slope");
  const double a = slope.scalar();
  const Matrix& x = m.value();
  Matrix out = x.unaryExpr([a](double v) { return v > 0.0 ? v : a * v; });
  return m.tape().record(
      std::move(out), {m, slope},
      [m, slope](Tape& t, const Matrix& g, const Matrix&) {
        const Matrix& xv = m.value();
        const double av = slope.scalar();
        if (t.requires_grad(m.id())) {
          Matrix gx = g.binaryExpr(xv, [av](double gi, double v) { return v > 0.0 ? gi : av * gi; });
          t.accumulate(m.id(), gx);
        }
        if (t.requires_grad(slope.id())) {
          double gs = 0.0;
          for (Eigen::Index i = 0; i < xv.size(); ++i) {
            if (xv.data()[i] <= 0.0) gs += g.data()[i] * xv.data()[i];
          }
          t.accumulate(slope.id(), scalar_matrix(gs));
        }
      },
      "prelu");
}

Var leaky_relu(Var m, double negative_slope) {
  Matrix out = m.value().unaryExpr(
      [negative_slope](double v) { return v > 0.0 ? v : negative_slope * v; });
  return m.tape().record(
      std::move(out), {m},
      [m, negative_slope](Tape& t, const Matrix& g, const Matrix&) {
        Matrix gx = g.binaryExpr(m.value(), [negative_slope](double gi, double v) {
          return v > 0.0 ? gi : negative_slope * gi;
        });
        t.accumulate(m.id(), gx);
      },
      "leaky_relu");
}

Var sigmoid(Var m) {
  Matrix out = m.value().unaryExpr([](double v) { return stable_sigmoid(v); });
  return m.tape().record(
      std::move(out), {m},
      [m](Tape& t, const Matrix& g, const Matrix& y) {
        t.accumulate(m.id(), g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
      },
      "sigmoid");
}

Var outer_sum(Var col_a, Var col_b) {
  if (col_a.cols() != 1 || col_b.cols() != 1) {
    shape_fail("outer_sum (expects column vectors)", col_a.value(), col_b.value());
  }
  const Eigen::Index n = col_a.rows();
  const Eigen::Index m = col_b.rows();
  Matrix out = col_a.value().replicate(1, m) + col_b.value().transpose().replicate(n, 1);
  return col_a.tape().record(
      std::move(out), {col_a, col_b},
      [col_a, col_b](Tape& t, const Matrix& g, const Matrix&) {
        if (t.requires_grad(col_a.id())) {
          Matrix ga = g.rowwise().sum();
          t.accumulate(col_a.id(), ga);
        }
        if (t.requires_grad(col_b.id())) {
          Matrix gb = g.colwise().sum().transpose();
          t.accumulate(col_b.id(), gb);
        }
      },
      "outer_sum");
}

Var hconcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("hconcat: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) shape_fail("hconcat", parts.front().value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return parts.front().tape().record(
      std::move(out), parts,
      [parts](Tape& t, const Matrix& g, const Matrix&) {
        Eigen::Index off = 0;
        for (const Var& p : parts) {
          if (t.requires_grad(p.id())) t.accumulate(p.id(), g.middleCols(off, p.cols()));
          off += p.cols();
        }
      },
      "hconcat");
}

// ---- reductions -----------------------------------------------------------

Var sum(Var m) {
  Matrix out = scalar_matrix(m.value().sum());
  return m.tape().record(
      std::move(out), {m},
      [m](Tape& t, const Matrix& g, const Matrix&) {
        t.accumulate(m.id(), Matrix::Constant(m.rows(), m.cols(), g(0, 0)));
      },
      "sum");
}

Var column_sum(Var m) {
  Matrix out = m.value().colwise().sum();
  return m.tape().record(
      std::move(out), {m},
      [m](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(m.id(), g.replicate(m.rows(), 1)); },
      "column_sum");
}

Var sum_squares(Var m) {
  Matrix out = scalar_matrix(m.value().squaredNorm());
  return m.tape().record(
      std::move(out), {m},
      [m](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(m.id(), m.value() * (2.0 * g(0, 0))); },
      "sum_squares");
}

Var trace(Var m) {
  if (m.rows() != m.cols()) shape_fail("trace", m.value(), m.value());
  Matrix out = scalar_matrix(m.value().trace());
  return m.tape().record(
      std::move(out), {m},
      [m](Tape& t, const Matrix& g, const Matrix&) {
        Matrix gm = Matrix::Identity(m.rows(), m.cols()) * g(0, 0);
        t.accumulate(m.id(), gm);
      },
      "trace");
}

Var sqrt(Var scalar) {
  require_scalar(scalar.value(), "sqrt");
  const double v = scalar.scalar();
  if (v < 0.0) throw NumericError("sqrt: negative argument");
  Matrix out = scalar_matrix(std::sqrt(v));
  return scalar.tape().record(
      std::move(out), {scalar},
      [scalar](Tape& t, const Matrix& g, const Matrix& y) {
        // d sqrt(x) = 1 / (2 sqrt(x)); zero at the origin keeps the gradient finite.
        const double d = y(0, 0) > 0.0 ? 0.5 / y(0, 0) : 0.0;
        t.accumulate(scalar.id(), scalar_matrix(g(0, 0) * d));
      },
      "sqrt");
}

Var normalize_with_self_loops(Var a) {
  const Matrix& av = a.value();
  if (av.rows() != av.cols()) shape_fail("normalize_with_self_loops", av, av);
  const Eigen::Index n = av.rows();
  Matrix hat = av + Matrix::Identity(n, n);
  Eigen::VectorXd degree = hat.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(degree(i) > 0.0)) throw NumericError("normalize_with_self_loops: non-positive degree");
  }
  Eigen::VectorXd r = degree.cwiseSqrt().cwiseInverse();
  Matrix out = r.asDiagonal() * hat * r.asDiagonal();
  return a.tape().record(
      std::move(out), {a},
      [a, r](Tape& t, const Matrix& g, const Matrix&) {
        const Eigen::Index n = r.size();
        Matrix hat = a.value() + Matrix::Identity(n, n);
        Matrix weighted = g.cwiseProduct(hat);
        // d loss / d r_k over both the row and the column occurrence of r_k.
        Eigen::VectorXd dr = weighted * r + weighted.transpose() * r;
        Eigen::VectorXd dd = dr.cwiseProduct(r.cwiseProduct(r).cwiseProduct(r)) * -0.5;
        Matrix ga = r.asDiagonal() * g * r.asDiagonal();
        ga.colwise() += dd;
        t.accumulate(a.id(), ga);
      },
      "normalize_with_self_loops");
}

namespace {
constexpr double kLogFloor = 1e-300;
}

Var row_entropy_mean(Var probs) {
  const Matrix& p = probs.value();
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double v = p.data()[i];
    if (v > 0.0) h -= v * std::log(v);
  }
  const double rows = static_cast<double>(std::max<Eigen::Index>(p.rows(), 1));
  Matrix out = scalar_matrix(h / rows);
  return probs.tape().record(
      std::move(out), {probs},
      [probs, rows](Tape& t, const Matrix& g, const Matrix&) {
        Matrix gp = probs.value().unaryExpr(
            [](double v) { return -(std::log(std::max(v, kLogFloor)) + 1.0); });
        t.accumulate(probs.id(), gp * (g(0, 0) / rows));
      },
      "row_entropy_mean");
}

Var bce_scores(Var pos, Var neg) {
  if (pos.value().size() == 0 || neg.value().size() == 0) {
    throw ShapeError("bce_scores: positives and negatives must be non-empty");
  }
  const double total = static_cast<double>(pos.value().size() + neg.value().size());
  auto clamp = [](double s) { return std::clamp(s, kScoreClamp, 1.0 - kScoreClamp); };
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pos.value().size(); ++i) acc += std::log(clamp(pos.value().data()[i]));
  for (Eigen::Index j = 0; j < neg.value().size(); ++j) {
    acc += std::log(1.0 - clamp(neg.value().data()[j]));
  }
  Matrix out = scalar_matrix(-acc / total);
  return pos.tape().record(
      std::move(out), {pos, neg},
      [pos, neg, total](Tape& t, const Matrix& g, const Matrix&) {
        const double k = g(0, 0) / total;
        auto inside = [](double s) { return s > kScoreClamp && s < 1.0 - kScoreClamp; };
        if (t.requires_grad(pos.id())) {
          Matrix gp = pos.value().unaryExpr([&](double s) { return inside(s) ? -k / s : 0.0; });
          t.accumulate(pos.id(), gp);
        }
        if (t.requires_grad(neg.id())) {
          Matrix gn = neg.value().unaryExpr([&](double s) { return inside(s) ? k / (1.0 - s) : 0.0; });
          t.accumulate(neg.id(), gn);
        }
      },
      "bce_scores");
}

Var bce_logits(Var pos, Var neg) {
  if (pos.value().size() == 0 || neg.value().size() == 0) {
    throw ShapeError("bce_logits: positives and negatives must be non-empty");
  }
  const double total = static_cast<double>(pos.value().size() + neg.value().size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pos.value().size(); ++i) acc += softplus(-pos.value().data()[i]);
  for (Eigen::Index j = 0; j < neg.value().size(); ++j) acc += softplus(neg.value().data()[j]);
  Matrix out = scalar_matrix(acc / total);
  return pos.tape().record(
      std::move(out), {pos, neg},
      [pos, neg, total](Tape& t, const Matrix& g, const Matrix&) {
        const double k = g(0, 0) / total;
        if (t.requires_grad(pos.id())) {
          t.accumulate(pos.id(), pos.value().unaryExpr([k](double x) { return k * (stable_sigmoid(x) - 1.0); }));
        }
        if (t.requires_grad(neg.id())) {
          t.accumulate(neg.id(), neg.value().unaryExpr([k](double x) { return k * stable_sigmoid(x); }));
        }
      },
      "bce_logits");
}

Var batch_norm(Var x, Var gamma, Var beta, Matrix& running_mean, Matrix& running_var, Mode mode,
               bool update_stats) {
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.rows();
  const Eigen::Index f = xv.cols();
  if (gamma.rows() != 1 || gamma.cols() != f || beta.rows() != 1 || beta.cols() != f) {
    shape_fail("batch_norm affine", xv, gamma.value());
  }
  if (running_mean.size() == 0) {
    running_mean = Matrix::Zero(1, f);
    running_var = Matrix::Ones(1, f);
  }
  if (running_mean.cols() != f) shape_fail("batch_norm stats", xv, running_mean);
  if (n == 0) throw ShapeError("batch_norm: empty batch");

  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd var;
  if (mode == Mode::kTrain) {
    mean = xv.colwise().mean();
    var = (xv.rowwise() - mean).array().square().colwise().mean();
    if (update_stats) {
      const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
      running_mean = (1.0 - kBatchNormMomentum) * running_mean + kBatchNormMomentum * Matrix(mean);
      running_var =
          (1.0 - kBatchNormMomentum) * running_var + (kBatchNormMomentum * unbias) * Matrix(var);
    }
  } else {
    mean = running_mean.row(0);
    var = running_var.row(0);
  }
  Eigen::RowVectorXd inv_std = (var.array() + kBatchNormEps).rsqrt();
  Matrix xhat = (xv.rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  const bool train = mode == Mode::kTrain;
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, train](Tape& t, const Matrix& g, const Matrix&) {
        if (t.requires_grad(gamma.id())) {
          Matrix gg = g.cwiseProduct(xhat).colwise().sum();
          t.accumulate(gamma.id(), gg);
        }
        if (t.requires_grad(beta.id())) {
          Matrix gb = g.colwise().sum();
          t.accumulate(beta.id(), gb);
        }
        if (!t.requires_grad(x.id())) return;
        Eigen::RowVectorXd scale_row = gamma.value().row(0).array() * inv_std.array();
        if (!train) {
          Matrix gx = g.array().rowwise() * scale_row.array();
          t.accumulate(x.id(), gx);
          return;
        }
        const double n = static_cast<double>(g.rows());
        Eigen::RowVectorXd g_sum = g.colwise().sum();
        Eigen::RowVectorXd gx_sum = g.cwiseProduct(xhat).colwise().sum();
        Matrix centered = (g * n).rowwise() - g_sum;
        centered -= Matrix(xhat.array().rowwise() * gx_sum.array());
        Matrix gx = (centered.array().rowwise() * scale_row.array()) / n;
        t.accumulate(x.id(), gx);
      },
      "batch_norm");
}

Var slice_rows(Var m, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > m.rows()) {
    throw ShapeError("slice_rows: range out of bounds for " + shape_of(m.value()));
  }
  Matrix out = m.value().middleRows(start, count);
  return m.tape().record(
      std::move(out), {m},
      [m, start, count](Tape& t, const Matrix& g, const Matrix&) {
        Matrix gm = Matrix::Zero(m.rows(), m.cols());
        gm.middleRows(start, count) = g;
        t.accumulate(m.id(), gm);
      },
      "slice_rows");
}

Var slice_cols(Var m, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > m.cols()) {
    throw ShapeError("slice_cols: range out of bounds for " + shape_of(m.value()));
  }
  Matrix out = m.value().middleCols(start, count);
  return m.tape().record(
      std::move(out), {m},
      [m, start, count](Tape& t, const Matrix& g, const Matrix&) {
        Matrix gm = Matrix::Zero(m.rows(), m.cols());
        gm.middleCols(start, count) = g;
        t.accumulate(m.id(), gm);
      },
      "slice_cols");
}

// ---- gradient check -------------------------------------------------------

GradCheckResult gradient_check(const LossBuilder& build, const std::vector<Parameter*>& params,
                               const GradCheckOptions& options) {
  auto evaluate = [&build]() {
    Tape tape;
    return build(tape).scalar();
  };

  for (Parameter* p : params) p->zero_grad();
  double reference = 0.0;
  {
    Tape tape;
    Var loss = build(tape);
    reference = loss.scalar();
    tape.backward(loss);
  }
  if (evaluate() != reference) {
    throw Error("gradient_check: loss builder is not deterministic");
  }

  GradCheckResult result;
  Rng rng(options.seed);
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    const Matrix analytic = p->grad;
    std::vector<Eigen::Index> entries(static_cast<std::size_t>(p->size()));
    for (Eigen::Index i = 0; i < p->size(); ++i) entries[static_cast<std::size_t>(i)] = i;
    if (options.max_entries_per_param > 0 && entries.size() > options.max_entries_per_param) {
      rng.shuffle(entries);
      entries.resize(options.max_entries_per_param);
    }
    for (Eigen::Index idx : entries) {
      double& slot = p->value.data()[idx];
      const double saved = slot;
      slot = saved + options.eps;
      const double plus = evaluate();
      slot = saved - options.eps;
      const double minus = evaluate();
      slot = saved;
      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double a = analytic.data()[idx];
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++result.entries_checked;
      if (result.worst_index < 0 || rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p->name;
        result.worst_index = idx;
      }
    }
  }
  return result;
}

}  // namespace ad
}  // namespace uhgr
