#include "bitag/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace bitag::nn {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

const Matrix& Var::value() const {
  require(tape_ != nullptr, "Var: unbound handle");
  return tape_->value(idx_);
}

double Var::scalar() const {
  const Matrix& v = value();
  require(v.rows() == 1 && v.cols() == 1, "Var::scalar: node is not 1x1");
  return v(0, 0);
}

Var Tape::push(Matrix value, std::function<void(Tape&, int)> back) {
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(back)});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad_of(int index) {
  Node& n = nodes_[index];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

int Tape::index_of(Var v) const {
  require(v.tape_ == this, "Tape: Var belongs to a different tape");
  require(v.idx_ >= 0 && v.idx_ < static_cast<int>(nodes_.size()),
          "Tape: Var index out of range");
  return v.idx_;
}

void Tape::clear() { nodes_.clear(); }

Var Tape::constant(Matrix value) { return push(std::move(value), nullptr); }

Var Tape::leaf(Parameter& param) {
  Parameter* p = &param;
  return push(param.value, [p](Tape& t, int self) {
    p->grad += t.nodes_[self].grad;
  });
}

Var Tape::embedding_rows(Parameter& table, std::vector<int> ids) {
  Parameter* p = &table;
  Matrix out(static_cast<long>(ids.size()), table.value.cols());
  for (size_t k = 0; k < ids.size(); ++k) {
    require(ids[k] >= 0 && ids[k] < table.value.rows(),
            "embedding_rows: id out of range");
    out.row(static_cast<long>(k)) = table.value.row(ids[k]);
  }
  return push(std::move(out), [p, ids = std::move(ids)](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    for (size_t k = 0; k < ids.size(); ++k)
      p->grad.row(ids[k]) += g.row(static_cast<long>(k));
  });
}

Var Tape::matmul(Var a, Var b) {
  int ia = index_of(a), ib = index_of(b);
  require(nodes_[ia].value.cols() == nodes_[ib].value.rows(),
          "matmul: inner dimensions differ");
  Matrix out = nodes_[ia].value * nodes_[ib].value;
  return push(std::move(out), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    t.grad_of(ia).noalias() += g * t.nodes_[ib].value.transpose();
    t.grad_of(ib).noalias() += t.nodes_[ia].value.transpose() * g;
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  int ia = index_of(a), ib = index_of(b);
  require(nodes_[ia].value.cols() == nodes_[ib].value.cols(),
          "matmul_nt: column counts differ");
  Matrix out = nodes_[ia].value * nodes_[ib].value.transpose();
  return push(std::move(out), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    t.grad_of(ia).noalias() += g * t.nodes_[ib].value;
    t.grad_of(ib).noalias() += g.transpose() * t.nodes_[ia].value;
  });
}

Var Tape::add(Var a, Var b) {
  int ia = index_of(a), ib = index_of(b);
  require(nodes_[ia].value.rows() == nodes_[ib].value.rows() &&
              nodes_[ia].value.cols() == nodes_[ib].value.cols(),
          "add: shapes differ");
  Matrix out = nodes_[ia].value + nodes_[ib].value;
  return push(std::move(out), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    t.grad_of(ia) += g;
    t.grad_of(ib) += g;
  });
}

Var Tape::sub(Var a, Var b) {
  int ia = index_of(a), ib = index_of(b);
  require(nodes_[ia].value.rows() == nodes_[ib].value.rows() &&
              nodes_[ia].value.cols() == nodes_[ib].value.cols(),
          "sub: shapes differ");
  Matrix out = nodes_[ia].value - nodes_[ib].value;
  return push(std::move(out), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    t.grad_of(ia) += g;
    t.grad_of(ib) -= g;
  });
}

Var Tape::hadamard(Var a, Var b) {
  int ia = index_of(a), ib = index_of(b);
  require(nodes_[ia].value.rows() == nodes_[ib].value.rows() &&
              nodes_[ia].value.cols() == nodes_[ib].value.cols(),
          "hadamard: shapes differ");
  Matrix out = nodes_[ia].value.cwiseProduct(nodes_[ib].value);
  return push(std::move(out), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    t.grad_of(ia) += g.cwiseProduct(t.nodes_[ib].value);
    t.grad_of(ib) += g.cwiseProduct(t.nodes_[ia].value);
  });
}

Var Tape::scale(Var a, double c) {
  int ia = index_of(a);
  Matrix out = c * nodes_[ia].value;
  return push(std::move(out), [ia, c](Tape& t, int self) {
    t.grad_of(ia) += c * t.nodes_[self].grad;
  });
}

Var Tape::shift(Var a, double c) {
  int ia = index_of(a);
  Matrix out = nodes_[ia].value.array() + c;
  return push(std::move(out), [ia](Tape& t, int self) {
    t.grad_of(ia) += t.nodes_[self].grad;
  });
}

Var Tape::add_rowvec(Var m, Var row) {
  int im = index_of(m), ir = index_of(row);
  require(nodes_[ir].value.rows() == 1, "add_rowvec: row operand not 1 x d");
  require(nodes_[im].value.cols() == nodes_[ir].value.cols(),
          "add_rowvec: widths differ");
  Matrix out = nodes_[im].value.rowwise() + nodes_[ir].value.row(0);
  return push(std::move(out), [im, ir](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    t.grad_of(im) += g;
    t.grad_of(ir) += g.colwise().sum();
  });
}

Var Tape::broadcast_row(Var row, long n) {
  int ir = index_of(row);
  require(nodes_[ir].value.rows() == 1, "broadcast_row: operand not 1 x d");
  require(n >= 1, "broadcast_row: n must be positive");
  Matrix out = nodes_[ir].value.replicate(n, 1);
  return push(std::move(out), [ir](Tape& t, int self) {
    t.grad_of(ir) += t.nodes_[self].grad.colwise().sum();
  });
}

Var Tape::concat_cols(Var a, Var b) {
  int ia = index_of(a), ib = index_of(b);
  require(nodes_[ia].value.rows() == nodes_[ib].value.rows(),
          "concat_cols: row counts differ");
  long ca = nodes_[ia].value.cols(), cb = nodes_[ib].value.cols();
  Matrix out(nodes_[ia].value.rows(), ca + cb);
  out.leftCols(ca) = nodes_[ia].value;
  out.rightCols(cb) = nodes_[ib].value;
  return push(std::move(out), [ia, ib, ca, cb](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    t.grad_of(ia) += g.leftCols(ca);
    t.grad_of(ib) += g.rightCols(cb);
  });
}

Var Tape::slice_cols(Var a, long start, long count) {
  int ia = index_of(a);
  require(start >= 0 && count >= 1 && start + count <= nodes_[ia].value.cols(),
          "slice_cols: range out of bounds");
  Matrix out = nodes_[ia].value.middleCols(start, count);
  return push(std::move(out), [ia, start, count](Tape& t, int self) {
    t.grad_of(ia).middleCols(start, count) += t.nodes_[self].grad;
  });
}

Var Tape::slice_rows(Var a, long start, long count) {
  int ia = index_of(a);
  require(start >= 0 && count >= 1 && start + count <= nodes_[ia].value.rows(),
          "slice_rows: range out of bounds");
  Matrix out = nodes_[ia].value.middleRows(start, count);
  return push(std::move(out), [ia, start, count](Tape& t, int self) {
    t.grad_of(ia).middleRows(start, count) += t.nodes_[self].grad;
  });
}

Var Tape::sum_all(Var a) {
  int ia = index_of(a);
  Matrix out(1, 1);
  out(0, 0) = nodes_[ia].value.sum();
  return push(std::move(out), [ia](Tape& t, int self) {
    t.grad_of(ia).array() += t.nodes_[self].grad(0, 0);
  });
}

Var Tape::mean_all(Var a) {
  int ia = index_of(a);
  double n = static_cast<double>(nodes_[ia].value.size());
  require(n > 0, "mean_all: empty operand");
  Matrix out(1, 1);
  out(0, 0) = nodes_[ia].value.sum() / n;
  return push(std::move(out), [ia, n](Tape& t, int self) {
    t.grad_of(ia).array() += t.nodes_[self].grad(0, 0) / n;
  });
}

Var Tape::mean_rows_range(Var a, long start, long count) {
  int ia = index_of(a);
  require(start >= 0 && count >= 1 && start + count <= nodes_[ia].value.rows(),
          "mean_rows_range: range out of bounds");
  Matrix out = nodes_[ia].value.middleRows(start, count).colwise().mean();
  return push(std::move(out), [ia, start, count](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;  // 1 x d
    t.grad_of(ia).middleRows(start, count).rowwise() +=
        (g.row(0) / static_cast<double>(count));
  });
}

Var Tape::masked_mean_rows(Var a, const std::vector<int>& mask) {
  int ia = index_of(a);
  require(static_cast<long>(mask.size()) == nodes_[ia].value.rows(),
          "masked_mean_rows: mask length mismatch");
  long cnt = 0;
  Matrix sum = Matrix::Zero(1, nodes_[ia].value.cols());
  for (size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      sum += nodes_[ia].value.row(static_cast<long>(i));
      ++cnt;
    }
  }
  require(cnt > 0, "masked_mean_rows: no unmasked rows");
  Matrix out = sum / static_cast<double>(cnt);
  return push(std::move(out), [ia, mask, cnt](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    Matrix& ga = t.grad_of(ia);
    for (size_t i = 0; i < mask.size(); ++i)
      if (mask[i])
        ga.row(static_cast<long>(i)) += g.row(0) / static_cast<double>(cnt);
  });
}

Var Tape::mask_rows(Var a, const std::vector<int>& mask) {
  int ia = index_of(a);
  require(static_cast<long>(mask.size()) == nodes_[ia].value.rows(),
          "mask_rows: mask length mismatch");
  Matrix out = nodes_[ia].value;
  for (size_t i = 0; i < mask.size(); ++i)
    if (!mask[i]) out.row(static_cast<long>(i)).setZero();
  return push(std::move(out), [ia, mask](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    Matrix& ga = t.grad_of(ia);
    for (size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) ga.row(static_cast<long>(i)) += g.row(static_cast<long>(i));
  });
}

Var Tape::stack_scalars(const std::vector<Var>& xs) {
  require(!xs.empty(), "stack_scalars: empty input");
  std::vector<int> idx;
  idx.reserve(xs.size());
  Matrix out(static_cast<long>(xs.size()), 1);
  for (size_t i = 0; i < xs.size(); ++i) {
    int ii = index_of(xs[i]);
    require(nodes_[ii].value.size() == 1, "stack_scalars: operand not 1x1");
    out(static_cast<long>(i), 0) = nodes_[ii].value(0, 0);
    idx.push_back(ii);
  }
  return push(std::move(out), [idx = std::move(idx)](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    for (size_t i = 0; i < idx.size(); ++i)
      t.grad_of(idx[i])(0, 0) += g(static_cast<long>(i), 0);
  });
}

Var Tape::logsumexp_col(Var a) {
  int ia = index_of(a);
  require(nodes_[ia].value.cols() == 1 && nodes_[ia].value.rows() >= 1,
          "logsumexp_col: operand must be n x 1");
  const Vector x = nodes_[ia].value.col(0);
  double m = x.maxCoeff();
  double s = (x.array() - m).exp().sum();
  Matrix out(1, 1);
  out(0, 0) = m + std::log(s);
  Vector soft = (x.array() - m).exp() / s;
  return push(std::move(out), [ia, soft = std::move(soft)](Tape& t, int self) {
    double g = t.nodes_[self].grad(0, 0);
    t.grad_of(ia).col(0) += g * soft;
  });
}

Var Tape::sigmoid(Var a) {
  int ia = index_of(a);
  Matrix out = 1.0 / (1.0 + (-nodes_[ia].value.array()).exp());
  return push(std::move(out), [ia](Tape& t, int self) {
    const Matrix& y = t.nodes_[self].value;
    t.grad_of(ia).array() +=
        t.nodes_[self].grad.array() * y.array() * (1.0 - y.array());
  });
}

Var Tape::gelu(Var a) {
  int ia = index_of(a);
  const Matrix& x = nodes_[ia].value;
  auto cdf = [](double v) { return 0.5 * (1.0 + std::erf(v * kInvSqrt2)); };
  Matrix out = x.array() * x.unaryExpr(cdf).array();
  return push(std::move(out), [ia, cdf](Tape& t, int self) {
    const Matrix& x = t.nodes_[ia].value;
    auto pdf = kInvSqrt2Pi * (-0.5 * x.array().square()).exp();
    t.grad_of(ia).array() +=
        t.nodes_[self].grad.array() *
        (x.unaryExpr(cdf).array() + x.array() * pdf);
  });
}

Var Tape::softmax_rows(Var a) {
  int ia = index_of(a);
  const Matrix& x = nodes_[ia].value;
  Matrix out(x.rows(), x.cols());
  for (long r = 0; r < x.rows(); ++r) {
    double m = x.row(r).maxCoeff();
    Eigen::ArrayXd e = (x.row(r).array() - m).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  return push(std::move(out), [ia](Tape& t, int self) {
    const Matrix& y = t.nodes_[self].value;
    const Matrix& g = t.nodes_[self].grad;
    Matrix& ga = t.grad_of(ia);
    for (long r = 0; r < y.rows(); ++r) {
      double dot = y.row(r).dot(g.row(r));
      ga.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
    }
  });
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  int ix = index_of(x), ig = index_of(gain), ib = index_of(bias);
  const Matrix& v = nodes_[ix].value;
  long d = v.cols();
  require(nodes_[ig].value.rows() == 1 && nodes_[ig].value.cols() == d,
          "layer_norm: gain must be 1 x d");
  require(nodes_[ib].value.rows() == 1 && nodes_[ib].value.cols() == d,
          "layer_norm: bias must be 1 x d");

  Matrix xhat(v.rows(), d);
  Vector inv_sigma(v.rows());
  for (long r = 0; r < v.rows(); ++r) {
    double mu = v.row(r).mean();
    double var = (v.row(r).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma(r) = is;
    xhat.row(r) = (v.row(r).array() - mu) * is;
  }
  Matrix out =
      (xhat.array().rowwise() * nodes_[ig].value.row(0).array()).rowwise() +
      nodes_[ib].value.row(0).array();
  return push(std::move(out), [ix, ig, ib, xhat = std::move(xhat),
                               inv_sigma = std::move(inv_sigma)](Tape& t,
                                                                 int self) {
    const Matrix& g = t.nodes_[self].grad;
    const Eigen::RowVectorXd gamma = t.nodes_[ig].value.row(0);
    long d = xhat.cols();

    t.grad_of(ig) += (g.array() * xhat.array()).colwise().sum().matrix();
    t.grad_of(ib) += g.colwise().sum();

    Matrix& gx = t.grad_of(ix);
    for (long r = 0; r < xhat.rows(); ++r) {
      Eigen::RowVectorXd dy = g.row(r).cwiseProduct(gamma);
      double mean_dy = dy.mean();
      double mean_dy_xhat = dy.cwiseProduct(xhat.row(r)).mean();
      gx.row(r).array() +=
          inv_sigma(r) * (dy.array() - mean_dy -
                          xhat.row(r).array() * mean_dy_xhat);
      (void)d;
    }
  });
}

Var Tape::hinge(Var a) {
  int ia = index_of(a);
  Matrix out = nodes_[ia].value.cwiseMax(0.0);
  return push(std::move(out), [ia](Tape& t, int self) {
    const Matrix& x = t.nodes_[ia].value;
    t.grad_of(ia).array() +=
        t.nodes_[self].grad.array() * (x.array() > 0.0).cast<double>();
  });
}

Var Tape::dropout(Var a, double p, std::mt19937_64& rng) {
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1)");
  if (p == 0.0) return a;
  int ia = index_of(a);
  const Matrix& x = nodes_[ia].value;
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(x.rows(), x.cols());
  double inv = 1.0 / (1.0 - p);
  for (long c = 0; c < x.cols(); ++c)
    for (long r = 0; r < x.rows(); ++r) mask(r, c) = keep(rng) ? inv : 0.0;
  Matrix out = x.cwiseProduct(mask);
  return push(std::move(out), [ia, mask = std::move(mask)](Tape& t, int self) {
    t.grad_of(ia) += t.nodes_[self].grad.cwiseProduct(mask);
  });
}

Var Tape::cosine_similarity(Var a, Var b) {
  int ia = index_of(a), ib = index_of(b);
  const Matrix& va = nodes_[ia].value;
  const Matrix& vb = nodes_[ib].value;
  require(va.rows() == 1 && vb.rows() == 1 && va.cols() == vb.cols(),
          "cosine_similarity: operands must be 1 x d of equal width");
  double na = va.row(0).norm(), nb = vb.row(0).norm();
  if (na < 1e-12 || nb < 1e-12)
    throw std::domain_error("cosine_similarity: zero vector");
  double c = va.row(0).dot(vb.row(0)) / (na * nb);
  Matrix out(1, 1);
  out(0, 0) = c;
  return push(std::move(out), [ia, ib, na, nb, c](Tape& t, int self) {
    double g = t.nodes_[self].grad(0, 0);
    const Matrix& va = t.nodes_[ia].value;
    const Matrix& vb = t.nodes_[ib].value;
    t.grad_of(ia).row(0) +=
        g * (vb.row(0) / (na * nb) - (c / (na * na)) * va.row(0));
    t.grad_of(ib).row(0) +=
        g * (va.row(0) / (na * nb) - (c / (nb * nb)) * vb.row(0));
  });
}

Var Tape::bce_mean(Var probs, Matrix targets, double eps) {
  int ip = index_of(probs);
  const Matrix& p = nodes_[ip].value;
  require(p.rows() == targets.rows() && p.cols() == targets.cols(),
          "bce_mean: probability/target shapes differ");
  require(p.size() > 0, "bce_mean: empty operands");
  Matrix clamped = p.array().min(1.0 - eps).max(eps);
  double n = static_cast<double>(p.size());
  double loss = -((targets.array() * clamped.array().log()) +
                  ((1.0 - targets.array()) * (1.0 - clamped.array()).log()))
                     .sum() /
                n;
  Matrix out(1, 1);
  out(0, 0) = loss;
  return push(std::move(out),
              [ip, clamped = std::move(clamped), targets = std::move(targets),
               n](Tape& t, int self) {
                double g = t.nodes_[self].grad(0, 0);
                t.grad_of(ip).array() +=
                    (g / n) * (clamped.array() - targets.array()) /
                    (clamped.array() * (1.0 - clamped.array()));
              });
}

void Tape::backward(Var loss) {
  int il = index_of(loss);
  require(nodes_[il].value.size() == 1, "backward: loss must be 1x1");
  grad_of(il)(0, 0) += 1.0;
  for (int i = il; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() != 0 && n.back) n.back(*this, i);
  }
}

Matrix randn(long rows, long cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (long c = 0; c < cols; ++c)
    for (long r = 0; r < rows; ++r) m(r, c) = dist(rng);
  return m;
}

Adam::Adam(std::vector<Parameter*> params, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i].array() + (1.0 - beta2_) * p.grad.array().square();
    Matrix mhat = m_[i] / bc1;
    Matrix vhat = v_[i] / bc2;
    p.value.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps_);
    p.zero_grad();
  }
}

}  // namespace bitag::nn
