#include "segnn/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "segnn/errors.hpp"

namespace segnn {

namespace {

Tape& tape_of(Var v) {
  if (v.tape() == nullptr) throw AutodiffError("variable is not attached to a tape");
  return *v.tape();
}

Tape& common_tape(Var a, Var b) {
  Tape& t = tape_of(a);
  if (&t != b.tape()) throw AutodiffError("operands recorded on different tapes");
  return t;
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a) + " and " +
                     shape_string(b) + " differ");
  }
}

void require_targets(const char* op, const Matrix& pred, std::span<const double> targets) {
  if (pred.cols() != 1 || static_cast<std::size_t>(pred.rows()) != targets.size()) {
    throw ShapeError(std::string(op) + ": predictions " + shape_string(pred) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  if (targets.empty()) throw ShapeError(std::string(op) + ": no targets");
}

void require_segments(const Matrix& x, std::span<const std::uint32_t> segment,
                      std::size_t segments) {
  if (static_cast<std::size_t>(x.rows()) != segment.size()) {
    throw ShapeError("segment op: " + std::to_string(segment.size()) + " segment ids for " +
                     shape_string(x));
  }
  for (auto s : segment) {
    if (s >= segments) throw ShapeError("segment id out of range");
  }
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Parameter::Parameter(std::string n, Matrix init, bool is_trainable)
    : name(std::move(n)), value(std::move(init)), trainable(is_trainable) {
  grad = Matrix::Zero(value.rows(), value.cols());
}

const Matrix& Var::value() const { return tape_of(*this).value(*this); }
const Matrix& Var::grad() const { return tape_of(*this).grad(*this); }
bool Var::requires_grad() const { return tape_of(*this).requires_grad(*this); }

Var Tape::push(Node node) {
#ifndef NDEBUG
  if (!node.value.allFinite()) throw AutodiffError("non-finite value recorded on tape");
#endif
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.param = &p;
  return push(std::move(n));
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (Var p : parents) {
    if (p.tape_ != this) throw AutodiffError("parent recorded on a different tape");
    n.requires_grad = n.requires_grad || nodes_[p.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw AutodiffError("loss recorded on a different tape");
  if (backward_done_) {
    throw AutodiffError("backward called twice on the same tape without reset()");
  }
  Node& root = nodes_[loss.id_];
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    throw AutodiffError("backward needs a scalar loss, got " + shape_string(root.value));
  }
  if (!root.requires_grad) {
    throw AutodiffError("loss does not depend on any parameter (detached graph)");
  }
  backward_done_ = true;
  root.grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(n.grad);
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols()) {
        n.param->grad = n.grad;
      } else {
        n.param->grad += n.grad;
      }
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: " + shape_string(av) + " x " + shape_string(bv));
  }
  Matrix out = av * bv;
  return t.record(std::move(out), {a, b}, [&t, a, b](const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var spmm(const SparseMatrix& a, Var x) {
  Tape& t = tape_of(x);
  Matrix out = a.multiply(x.value());
  const SparseMatrix* ap = &a;
  return t.record(std::move(out), {x}, [&t, ap, x](const Matrix& g) {
    t.accumulate(x, ap->multiply_transposed(g));
  });
}

Var add(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape("add", a.value(), b.value());
  Matrix out = a.value() + b.value();
  return t.record(std::move(out), {a, b}, [&t, a, b](const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var add_bias_row(Var x, Var bias) {
  Tape& t = common_tape(x, bias);
  const Matrix& xv = x.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw ShapeError("add_bias_row: " + shape_string(xv) + " + bias " + shape_string(bv));
  }
  Matrix out = xv.rowwise() + bv.row(0);
  return t.record(std::move(out), {x, bias}, [&t, x, bias](const Matrix& g) {
    t.accumulate(x, g);
    if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape("hadamard", a.value(), b.value());
  Matrix out = a.value().cwiseProduct(b.value());
  return t.record(std::move(out), {a, b}, [&t, a, b](const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

Var scale(Var x, double factor) {
  Tape& t = tape_of(x);
  Matrix out = x.value() * factor;
  return t.record(std::move(out), {x}, [&t, x, factor](const Matrix& g) {
    t.accumulate(x, g * factor);
  });
}

Var relu(Var x) {
  Tape& t = tape_of(x);
  Matrix out = x.value().cwiseMax(0.0);
  return t.record(std::move(out), {x}, [&t, x](const Matrix& g) {
    const double* xv = t.value(x).data();
    Matrix dx(g.rows(), g.cols());
    const double* gv = g.data();
    double* d = dx.data();
    for (Eigen::Index i = 0; i < g.size(); ++i) d[i] = gv[i] * static_cast<double>(xv[i] > 0.0);
    t.accumulate(x, dx);
  });
}

Var prelu(Var x, Var slope) {
  Tape& t = common_tape(x, slope);
  if (slope.rows() != 1 || slope.cols() != 1) {
    throw ShapeError("prelu: slope must be 1x1, got " + shape_string(slope.value()));
  }
  const double a = slope.value()(0, 0);
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  {
    const double* src = xv.data();
    double* dst = out.data();
    for (Eigen::Index i = 0; i < xv.size(); ++i) {
      dst[i] = std::max(src[i], 0.0) + a * std::min(src[i], 0.0);
    }
  }
  return t.record(std::move(out), {x, slope}, [&t, x, slope](const Matrix& g) {
    const double* xv = t.value(x).data();
    const double* gv = g.data();
    const double a = t.value(slope)(0, 0);
    if (t.requires_grad(x)) {
      Matrix dx(g.rows(), g.cols());
      double* d = dx.data();
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        const double positive = static_cast<double>(xv[i] > 0.0);
        d[i] = gv[i] * (a + (1.0 - a) * positive);
      }
      t.accumulate(x, dx);
    }
    if (t.requires_grad(slope)) {
      double sum = 0.0;
      for (Eigen::Index i = 0; i < g.size(); ++i) sum += gv[i] * std::min(xv[i], 0.0);
      Matrix ds(1, 1);
      ds(0, 0) = sum;
      t.accumulate(slope, ds);
    }
  });
}

Var sigmoid(Var x) {
  Tape& t = tape_of(x);
  Matrix out = x.value().unaryExpr([](double z) { return stable_sigmoid(z); });
  return t.record(std::move(out), {x}, [&t, x](const Matrix& g) {
    const Matrix s = t.value(x).unaryExpr([](double z) { return stable_sigmoid(z); });
    t.accumulate(x, g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (p.tape() != &t) throw AutodiffError("operands recorded on different tapes");
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row counts " + shape_string(parts[0].value()) + " and " +
                       shape_string(p.value()));
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> starts;
  Eigen::Index at = 0;
  for (Var p : parts) {
    starts.push_back(at);
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [&t, owned, starts](const Matrix& g) {
    for (std::size_t i = 0; i < owned.size(); ++i) {
      if (t.requires_grad(owned[i])) {
        t.accumulate(owned[i], g.middleCols(starts[i], t.value(owned[i]).cols()));
      }
    }
  });
}

Var mean_rows(Var x) {
  Tape& t = tape_of(x);
  const Eigen::Index n = x.rows();
  if (n == 0) throw ShapeError("mean_rows: no rows");
  Matrix out = x.value().colwise().mean();
  return t.record(std::move(out), {x}, [&t, x, n](const Matrix& g) {
    t.accumulate(x, g.replicate(n, 1) / static_cast<double>(n));
  });
}

Var sum_rows(Var x) {
  Tape& t = tape_of(x);
  const Eigen::Index n = x.rows();
  Matrix out = x.value().colwise().sum();
  return t.record(std::move(out), {x}, [&t, x, n](const Matrix& g) {
    t.accumulate(x, g.replicate(n, 1));
  });
}

Var sum_all(Var x) {
  Tape& t = tape_of(x);
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return t.record(std::move(out), {x}, [&t, x](const Matrix& g) {
    t.accumulate(x, Matrix::Constant(t.value(x).rows(), t.value(x).cols(), g(0, 0)));
  });
}

Var squared_norm(Var x) {
  Tape& t = tape_of(x);
  Matrix out(1, 1);
  out(0, 0) = x.value().squaredNorm();
  return t.record(std::move(out), {x}, [&t, x](const Matrix& g) {
    t.accumulate(x, 2.0 * g(0, 0) * t.value(x));
  });
}

Var segment_sum(Var x, std::span<const std::uint32_t> segment, std::size_t segments) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  require_segments(xv, segment, segments);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(segments), xv.cols());
  for (std::size_t r = 0; r < segment.size(); ++r) {
    out.row(segment[r]) += xv.row(static_cast<Eigen::Index>(r));
  }
  std::vector<std::uint32_t> seg(segment.begin(), segment.end());
  return t.record(std::move(out), {x}, [&t, x, seg = std::move(seg)](const Matrix& g) {
    Matrix dx(static_cast<Eigen::Index>(seg.size()), g.cols());
    for (std::size_t r = 0; r < seg.size(); ++r) {
      dx.row(static_cast<Eigen::Index>(r)) = g.row(seg[r]);
    }
    t.accumulate(x, dx);
  });
}

Var segment_mean(Var x, std::span<const std::uint32_t> segment, std::size_t segments) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  require_segments(xv, segment, segments);
  std::vector<double> inv(segments, 0.0);
  for (auto s : segment) inv[s] += 1.0;
  for (auto& c : inv) c = c > 0 ? 1.0 / c : 0.0;
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(segments), xv.cols());
  for (std::size_t r = 0; r < segment.size(); ++r) {
    out.row(segment[r]) += xv.row(static_cast<Eigen::Index>(r)) * inv[segment[r]];
  }
  std::vector<std::uint32_t> seg(segment.begin(), segment.end());
  return t.record(std::move(out), {x},
                  [&t, x, seg = std::move(seg), inv = std::move(inv)](const Matrix& g) {
                    Matrix dx(static_cast<Eigen::Index>(seg.size()), g.cols());
                    for (std::size_t r = 0; r < seg.size(); ++r) {
                      dx.row(static_cast<Eigen::Index>(r)) = g.row(seg[r]) * inv[seg[r]];
                    }
                    t.accumulate(x, dx);
                  });
}

Var batch_norm(Var x, Var gamma, Var beta, double eps, Matrix* batch_mean, Matrix* batch_var) {
  Tape& t = common_tape(x, gamma);
  if (beta.tape() != &t) throw AutodiffError("operands recorded on different tapes");
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.rows();
  const Eigen::Index k = xv.cols();
  if (n == 0) throw ShapeError("batch_norm: no rows");
  if (gamma.rows() != 1 || gamma.cols() != k || beta.rows() != 1 || beta.cols() != k) {
    throw ShapeError("batch_norm: input " + shape_string(xv) + " with gamma " +
                     shape_string(gamma.value()) + " and beta " + shape_string(beta.value()));
  }
  // Row-major loops: every row is one contiguous pass over the k features.
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(k);
  for (Eigen::Index r = 0; r < n; ++r) mean += xv.row(r);
  mean /= static_cast<double>(n);
  Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(k);
  Matrix xhat(n, k);
  for (Eigen::Index r = 0; r < n; ++r) {
    xhat.row(r) = xv.row(r) - mean;
    var.array() += xhat.row(r).array().square();
  }
  var /= static_cast<double>(n);
  const Eigen::RowVectorXd inv_std = (var.array() + eps).rsqrt();
  const Eigen::RowVectorXd gv = gamma.value().row(0);
  const Eigen::RowVectorXd bv = beta.value().row(0);
  Matrix out(n, k);
  for (Eigen::Index r = 0; r < n; ++r) {
    xhat.row(r).array() *= inv_std.array();
    out.row(r).array() = xhat.row(r).array() * gv.array() + bv.array();
  }
  if (batch_mean) *batch_mean = mean;
  if (batch_var) *batch_var = var;
  return t.record(
      std::move(out), {x, gamma, beta},
      [&t, x, gamma, beta, xhat = std::move(xhat), inv_std](const Matrix& g) {
        const Eigen::Index rows = g.rows();
        const Eigen::Index cols = g.cols();
        Eigen::RowVectorXd sum_g = Eigen::RowVectorXd::Zero(cols);
        Eigen::RowVectorXd sum_gx = Eigen::RowVectorXd::Zero(cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
          sum_g += g.row(r);
          sum_gx.array() += g.row(r).array() * xhat.row(r).array();
        }
        if (t.requires_grad(beta)) t.accumulate(beta, sum_g);
        if (t.requires_grad(gamma)) t.accumulate(gamma, sum_gx);
        if (t.requires_grad(x)) {
          const double nn = static_cast<double>(rows);
          const Eigen::RowVectorXd scale_row = t.value(gamma).row(0).cwiseProduct(inv_std) / nn;
          const Eigen::RowVectorXd mean_g = sum_g;
          Matrix dx(rows, cols);
          for (Eigen::Index r = 0; r < rows; ++r) {
            dx.row(r).array() = scale_row.array() * (nn * g.row(r).array() - mean_g.array() -
                                                     xhat.row(r).array() * sum_gx.array());
          }
          t.accumulate(x, dx);
        }
      });
}

Var batch_norm_frozen(Var x, const Matrix& mean, const Matrix& var, Var gamma, Var beta,
                      double eps) {
  Tape& t = common_tape(x, gamma);
  const Matrix& xv = x.value();
  const Eigen::Index k = xv.cols();
  if (mean.rows() != 1 || mean.cols() != k || var.rows() != 1 || var.cols() != k ||
      gamma.rows() != 1 || gamma.cols() != k || beta.rows() != 1 || beta.cols() != k) {
    throw ShapeError("batch_norm_frozen: input " + shape_string(xv) + " with statistics " +
                     shape_string(mean) + "/" + shape_string(var));
  }
  const Eigen::RowVectorXd inv_std = (var.row(0).array() + eps).rsqrt();
  Matrix xhat = (xv.rowwise() - mean.row(0)).array().rowwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  return t.record(std::move(out), {x, gamma, beta},
                  [&t, x, gamma, beta, xhat = std::move(xhat), inv_std](const Matrix& g) {
                    if (t.requires_grad(beta)) t.accumulate(beta, g.colwise().sum());
                    if (t.requires_grad(gamma)) {
                      t.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
                    }
                    if (t.requires_grad(x)) {
                      Matrix dx = g.array().rowwise() *
                                  (t.value(gamma).row(0).array() * inv_std.array());
                      t.accumulate(x, dx);
                    }
                  });
}

Var bce_loss(Var logits, std::span<const double> targets) {
  Tape& t = tape_of(logits);
  const Matrix& z = logits.value();
  require_targets("bce_loss", z, targets);
  const auto n = static_cast<double>(targets.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double zi = z(i, 0);
    total += std::max(zi, 0.0) - zi * targets[static_cast<std::size_t>(i)] +
             std::log1p(std::exp(-std::abs(zi)));
  }
  Matrix out(1, 1);
  out(0, 0) = total / n;
  std::vector<double> y(targets.begin(), targets.end());
  return t.record(std::move(out), {logits}, [&t, logits, y = std::move(y), n](const Matrix& g) {
    const Matrix& z = t.value(logits);
    Matrix dz(z.rows(), 1);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      dz(i, 0) = g(0, 0) * (stable_sigmoid(z(i, 0)) - y[static_cast<std::size_t>(i)]) / n;
    }
    t.accumulate(logits, dz);
  });
}

Var row_cosine(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape("row_cosine", a.value(), b.value());
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Eigen::Index n = av.rows();
  Eigen::VectorXd na = av.rowwise().norm();
  Eigen::VectorXd nb = bv.rowwise().norm();
  Matrix out(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double denom = na(i) * nb(i);
    out(i, 0) = denom > 0.0 ? av.row(i).dot(bv.row(i)) / denom : 0.0;
  }
  Matrix cos = out;
  return t.record(std::move(out), {a, b},
                  [&t, a, b, na = std::move(na), nb = std::move(nb),
                   cos = std::move(cos)](const Matrix& g) {
                    const Matrix& av = t.value(a);
                    const Matrix& bv = t.value(b);
                    Matrix da = Matrix::Zero(av.rows(), av.cols());
                    Matrix db = Matrix::Zero(bv.rows(), bv.cols());
                    for (Eigen::Index i = 0; i < av.rows(); ++i) {
                      const double denom = na(i) * nb(i);
                      if (denom <= 0.0) continue;
                      const double gi = g(i, 0);
                      da.row(i) = gi * (bv.row(i) / denom - cos(i, 0) * av.row(i) / (na(i) * na(i)));
                      db.row(i) = gi * (av.row(i) / denom - cos(i, 0) * bv.row(i) / (nb(i) * nb(i)));
                    }
                    if (t.requires_grad(a)) t.accumulate(a, da);
                    if (t.requires_grad(b)) t.accumulate(b, db);
                  });
}

Var mse_loss(Var predictions, std::span<const double> targets) {
  Tape& t = tape_of(predictions);
  const Matrix& p = predictions.value();
  require_targets("mse_loss", p, targets);
  const auto n = static_cast<double>(targets.size());
  Eigen::Map<const Eigen::VectorXd> y(targets.data(), static_cast<Eigen::Index>(targets.size()));
  Matrix residual = p.col(0) - y;
  Matrix out(1, 1);
  out(0, 0) = residual.squaredNorm() / n;
  return t.record(std::move(out), {predictions},
                  [&t, predictions, residual = std::move(residual), n](const Matrix& g) {
                    t.accumulate(predictions, residual * (2.0 * g(0, 0) / n));
                  });
}

}  // namespace segnn
