#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "segnn/tensor.hpp"

namespace segnn {

// A trainable (or buffer) tensor that outlives any single tape. Gradients from
// Tape::backward are accumulated into `grad`.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Matrix init, bool is_trainable = true);
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  // Gradient after backward; an empty matrix if no gradient reached this value.
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records operations in execution order; backward walks the record in
// reverse exactly once. One tape per forward pass, confined to one thread.
class Tape {
 public:
  using BackwardFn = std::function<void(const Matrix& grad_out)>;

  Tape() = default;
  // Recorded backward rules refer to the tape by address.
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // A leaf that receives a gradient readable through Var::grad.
  Var leaf(Matrix value);
  // A leaf bound to a parameter. The parameter must outlive backward().
  Var parameter(Parameter& p);

  // Records an op. `backward` receives d(loss)/d(output) and calls accumulate
  // on the parents that require a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Matrix value, std::span<const Var> parents, BackwardFn backward);

  template <typename Expr>
  void accumulate(Var v, const Expr& contribution) {
    Node& node = nodes_[v.id_];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0) {
      node.grad.noalias() = contribution;
    } else {
      node.grad.noalias() += contribution;
    }
  }

  // Throws AutodiffError for a non-scalar loss, a loss that does not depend on
  // any gradient-requiring leaf, or a second call without reset().
  void backward(Var loss);
  void reset();

  std::size_t size() const { return nodes_.size(); }
  const Matrix& value(Var v) const { return nodes_[v.id_].value; }
  const Matrix& grad(Var v) const { return nodes_[v.id_].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };
  Var push(Node node);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Primitive set. Every op checks shapes and throws ShapeError naming both.
Var matmul(Var a, Var b);
// Sparse constant times dense value. `a` must outlive backward().
Var spmm(const SparseMatrix& a, Var x);
Var add(Var a, Var b);
// x (n x k) plus a bias row (1 x k) broadcast over rows.
Var add_bias_row(Var x, Var bias);
Var hadamard(Var a, Var b);
Var scale(Var x, double factor);
Var relu(Var x);
// slope is a 1x1 learnable scalar.
Var prelu(Var x, Var slope);
Var sigmoid(Var x);
Var concat_cols(std::span<const Var> parts);
Var mean_rows(Var x);  // 1 x k
Var sum_rows(Var x);   // 1 x k
Var sum_all(Var x);    // 1 x 1
Var squared_norm(Var x);  // 1 x 1, sum of squares
// Row i of the result sums (or averages) the rows of x whose segment id is i.
Var segment_sum(Var x, std::span<const std::uint32_t> segment, std::size_t segments);
Var segment_mean(Var x, std::span<const std::uint32_t> segment, std::size_t segments);

// Batch normalisation over rows with batch statistics (biased variance).
// When non-null, batch_mean / batch_var receive the statistics used.
Var batch_norm(Var x, Var gamma, Var beta, double eps, Matrix* batch_mean = nullptr,
               Matrix* batch_var = nullptr);
// Normalisation with fixed statistics (evaluation mode).
Var batch_norm_frozen(Var x, const Matrix& mean, const Matrix& var, Var gamma, Var beta,
                      double eps);

// Mean binary cross-entropy of logits (n x 1) against 0/1 targets, in the
// log-sum-exp stable form.
Var bce_loss(Var logits, std::span<const double> targets);
// Cosine similarity of corresponding rows, n x 1. Zero rows give 0.
Var row_cosine(Var a, Var b);
// Mean squared error of predictions (n x 1) against targets.
Var mse_loss(Var predictions, std::span<const double> targets);

}  // namespace segnn
