#pragma once

#include <Eigen/Dense>

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace bitag::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Named weight tensor. Gradients accumulate across backward passes until the
// optimizer (or the caller) clears them.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter(std::string param_name, Matrix init)
      : name(std::move(param_name)),
        value(std::move(init)),
        grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; invalidated by Tape::clear().
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  double scalar() const;  // value of a 1x1 node
  long rows() const { return value().rows(); }
  long cols() const { return value().cols(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int index) : tape_(tape), idx_(index) {}

  Tape* tape_ = nullptr;
  int idx_ = -1;
};

// Reverse-mode autodiff over dense matrices. Nodes are appended in creation
// order, which is a valid topological order for the backward sweep. One Tape
// holds the graph of one training step (or one inference pass); reuse via
// clear().
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // --- graph inputs -------------------------------------------------------
  Var constant(Matrix value);                 // no gradient flow
  Var leaf(Parameter& param);                 // backward adds into param.grad
  Var embedding_rows(Parameter& table, std::vector<int> ids);

  // --- linear algebra -----------------------------------------------------
  Var matmul(Var a, Var b);     // A * B
  Var matmul_nt(Var a, Var b);  // A * B^T
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double c);
  Var shift(Var a, double c);
  Var add_rowvec(Var m, Var row);       // m (n x d) + broadcast row (1 x d)
  Var broadcast_row(Var row, long n);   // 1 x d -> n x d
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, long start, long count);
  Var slice_rows(Var a, long start, long count);

  // --- reductions and pooling ---------------------------------------------
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var mean_rows_range(Var a, long start, long count);       // 1 x d
  Var masked_mean_rows(Var a, const std::vector<int>& mask);  // over mask==1
  Var mask_rows(Var a, const std::vector<int>& mask);         // zero mask==0
  Var stack_scalars(const std::vector<Var>& xs);              // n x 1
  Var logsumexp_col(Var a);                                   // n x 1 -> 1 x 1

  // --- nonlinearities -----------------------------------------------------
  Var sigmoid(Var a);
  Var gelu(Var a);
  Var softmax_rows(Var a);
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  Var hinge(Var a);  // max(0, a) elementwise
  Var dropout(Var a, double p, std::mt19937_64& rng);

  // --- losses ---------------------------------------------------------------
  // Cosine similarity of two 1 x d rows; throws on (near-)zero vectors.
  Var cosine_similarity(Var a, Var b);
  // Mean binary cross-entropy over all entries, probabilities clamped to
  // [eps, 1-eps]. Gradient passes through the clamp so saturated entries
  // still receive a bounded, correctly signed signal.
  Var bce_mean(Var probs, Matrix targets, double eps = 1e-7);

  // Seeds d(loss)/d(loss)=1 and sweeps the tape in reverse creation order.
  void backward(Var loss);

  void clear();
  int size() const { return static_cast<int>(nodes_.size()); }
  const Matrix& value(int index) const { return nodes_[index].value; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // empty until touched during backward
    std::function<void(Tape&, int)> back;  // null for constants
  };

  friend class Var;

  Var push(Matrix value, std::function<void(Tape&, int)> back);
  Matrix& grad_of(int index);  // allocates zeros on first touch
  int index_of(Var v) const;

  std::vector<Node> nodes_;
};

// Gaussian init, mean 0.
Matrix randn(long rows, long cols, double stddev, std::mt19937_64& rng);

// Adam with bias correction; step() applies parameter updates and clears
// gradients.
class Adam {
 public:
  explicit Adam(std::vector<Parameter*> params, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void step(double lr);
  long steps_taken() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace bitag::nn
