#include "nsm/diff/tape.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "nsm/core/error.hpp"

namespace nsm::diff {

namespace {

enum class Broadcast { none, row, col, scalar };

Broadcast broadcast_kind(const Mat& a, const Mat& b, const char* what) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::none;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::col;
  std::ostringstream os;
  os << what << ": incompatible shapes " << a.rows() << "x" << a.cols() << " and " << b.rows() << "x" << b.cols();
  throw std::invalid_argument(os.str());
}

Mat expand(const Mat& b, Index rows, Index cols, Broadcast kind) {
  switch (kind) {
    case Broadcast::none:
      return b;
    case Broadcast::row:
      return b.replicate(rows, 1);
    case Broadcast::col:
      return b.replicate(1, cols);
    case Broadcast::scalar:
      return Mat::Constant(rows, cols, b(0, 0));
  }
  return b;
}

Mat reduce(const Mat& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::none:
      return g;
    case Broadcast::row:
      return g.colwise().sum();
    case Broadcast::col:
      return g.rowwise().sum();
    case Broadcast::scalar:
      return Mat::Constant(1, 1, g.sum());
  }
  return g;
}

inline double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
inline double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void accumulate(Mat& slot, const Mat& g) {
  if (slot.size() == 0)
    slot = g;
  else
    slot += g;
}

}  // namespace

std::string op_name(Op op) {
  switch (op) {
    case Op::param: return "param";
    case Op::constant: return "constant";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::mul: return "mul";
    case Op::tanh: return "tanh";
    case Op::softplus: return "softplus";
    case Op::square: return "square";
    case Op::sum: return "sum";
    case Op::logsumexp_rows: return "logsumexp_rows";
    case Op::log: return "log";
    case Op::reciprocal: return "reciprocal";
    case Op::affine: return "affine";
  }
  return "unknown";
}

const Mat& Var::value() const { return tape->value(*this); }

Tape::Tape(std::span<const double> params) : params_(params) { nodes_.reserve(256); }

Var Tape::param(std::size_t offset, Index rows, Index cols) {
  const std::size_t count = static_cast<std::size_t>(rows * cols);
  if (offset + count > params_.size()) throw std::out_of_range("tape param slice exceeds parameter vector");
  Node n;
  n.op = Op::param;
  n.value = Eigen::Map<const Mat>(params_.data() + offset, rows, cols);
  n.offset = offset;
  if (!n.value.allFinite()) throw NumericError("non-finite parameter at offset " + std::to_string(offset));
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant(Mat value) {
  Node n;
  n.op = Op::constant;
  n.value = std::move(value);
  if (!n.value.allFinite())
    throw NumericError("non-finite constant at node " + std::to_string(nodes_.size()));
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::scalar(double value) { return constant(Mat::Constant(1, 1, value)); }

Var Tape::push(Op op, Mat value, int a, int b, double c0, double c1, bool ta, bool tb) {
  if (!value.allFinite()) {
    std::ostringstream os;
    os << "non-finite value at node " << nodes_.size() << " (" << op_name(op) << ")";
    throw NumericError(os.str());
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.a = a;
  n.b = b;
  n.c0 = c0;
  n.c1 = c1;
  n.ta = ta;
  n.tb = tb;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

double Tape::backward(Var root, std::span<double> gradient) {
  if (root.tape != this) throw std::invalid_argument("root belongs to another tape");
  const Mat& rv = value(root);
  if (rv.rows() != 1 || rv.cols() != 1) throw std::invalid_argument("backward requires a 1x1 root");
  if (gradient.size() != params_.size()) throw std::invalid_argument("gradient size mismatch");
  std::fill(gradient.begin(), gradient.end(), 0.0);

  std::vector<Mat> adj(nodes_.size());
  adj[static_cast<std::size_t>(root.id)] = Mat::Ones(1, 1);

  for (int i = root.id; i >= 0; --i) {
    Mat& g = adj[static_cast<std::size_t>(i)];
    if (g.size() == 0) continue;
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    const auto ia = static_cast<std::size_t>(n.a);
    const auto ib = static_cast<std::size_t>(n.b);
    switch (n.op) {
      case Op::param: {
        Eigen::Map<Mat> slot(gradient.data() + n.offset, n.value.rows(), n.value.cols());
        slot += g;
        break;
      }
      case Op::constant:
        break;
      case Op::matmul: {
        const Mat& A = nodes_[ia].value;
        const Mat& B = nodes_[ib].value;
        // C = op(A) op(B)
        Mat gA, gB;
        if (!n.ta && !n.tb) {
          gA.noalias() = g * B.transpose();
          gB.noalias() = A.transpose() * g;
        } else if (!n.ta && n.tb) {
          gA.noalias() = g * B;
          gB.noalias() = g.transpose() * A;
        } else if (n.ta && !n.tb) {
          gA.noalias() = B * g.transpose();
          gB.noalias() = A * g;
        } else {
          gA.noalias() = B.transpose() * g.transpose();
          gB.noalias() = g.transpose() * A.transpose();
        }
        accumulate(adj[ia], gA);
        accumulate(adj[ib], gB);
        break;
      }
      case Op::add: {
        const Mat& B = nodes_[ib].value;
        const Broadcast k = broadcast_kind(n.value, B, "add");
        accumulate(adj[ia], g);
        accumulate(adj[ib], reduce(g, k));
        break;
      }
      case Op::mul: {
        const Mat& A = nodes_[ia].value;
        const Mat& B = nodes_[ib].value;
        const Broadcast k = broadcast_kind(A, B, "mul");
        accumulate(adj[ia], g.cwiseProduct(expand(B, A.rows(), A.cols(), k)));
        accumulate(adj[ib], reduce(g.cwiseProduct(A), k));
        break;
      }
      case Op::tanh:
        accumulate(adj[ia], g.cwiseProduct((1.0 - n.value.array().square()).matrix()));
        break;
      case Op::softplus:
        accumulate(adj[ia], g.cwiseProduct(nodes_[ia].value.unaryExpr([](double x) { return sigmoid_scalar(x); })));
        break;
      case Op::square:
        accumulate(adj[ia], 2.0 * g.cwiseProduct(nodes_[ia].value));
        break;
      case Op::log:
        accumulate(adj[ia], g.cwiseQuotient(nodes_[ia].value));
        break;
      case Op::reciprocal:
        accumulate(adj[ia], -g.cwiseProduct(n.value.cwiseProduct(n.value)));
        break;
      case Op::sum:
        accumulate(adj[ia], Mat::Constant(nodes_[ia].value.rows(), nodes_[ia].value.cols(), g(0, 0)));
        break;
      case Op::logsumexp_rows: {
        const Mat& A = nodes_[ia].value;
        Mat soft = (A.colwise() - n.value.col(0)).array().exp().matrix();
        accumulate(adj[ia], soft.array().colwise() * g.col(0).array());
        break;
      }
      case Op::affine:
        accumulate(adj[ia], n.c0 * g);
        break;
    }
  }
  return rv(0, 0);
}

Var matmul(Var a, Var b, bool transpose_a, bool transpose_b) {
  Tape* t = a.tape;
  const Mat& A = a.value();
  const Mat& B = b.value();
  const Index inner_a = transpose_a ? A.rows() : A.cols();
  const Index inner_b = transpose_b ? B.cols() : B.rows();
  if (inner_a != inner_b) {
    std::ostringstream os;
    os << "matmul: inner dimensions " << inner_a << " and " << inner_b << " differ";
    throw std::invalid_argument(os.str());
  }
  Mat out;
  if (!transpose_a && !transpose_b)
    out.noalias() = A * B;
  else if (!transpose_a && transpose_b)
    out.noalias() = A * B.transpose();
  else if (transpose_a && !transpose_b)
    out.noalias() = A.transpose() * B;
  else
    out.noalias() = A.transpose() * B.transpose();
  return t->push(Op::matmul, std::move(out), a.id, b.id, 0.0, 0.0, transpose_a, transpose_b);
}

Var add(Var a, Var b) {
  const Mat& A = a.value();
  const Mat& B = b.value();
  const Broadcast k = broadcast_kind(A, B, "add");
  Mat out = A + expand(B, A.rows(), A.cols(), k);
  return a.tape->push(Op::add, std::move(out), a.id, b.id);
}

Var mul(Var a, Var b) {
  const Mat& A = a.value();
  const Mat& B = b.value();
  const Broadcast k = broadcast_kind(A, B, "mul");
  Mat out = A.cwiseProduct(expand(B, A.rows(), A.cols(), k));
  return a.tape->push(Op::mul, std::move(out), a.id, b.id);
}

Var tanh(Var a) { return a.tape->push(Op::tanh, a.value().array().tanh().matrix(), a.id); }

Var softplus(Var a) {
  return a.tape->push(Op::softplus, a.value().unaryExpr([](double x) { return softplus_scalar(x); }), a.id);
}

Var square(Var a) { return a.tape->push(Op::square, a.value().array().square().matrix(), a.id); }

Var log(Var a) { return a.tape->push(Op::log, a.value().array().log().matrix(), a.id); }

Var reciprocal(Var a) { return a.tape->push(Op::reciprocal, a.value().array().inverse().matrix(), a.id); }

Var sum(Var a) { return a.tape->push(Op::sum, Mat::Constant(1, 1, a.value().sum()), a.id); }

Var logsumexp_rows(Var a) {
  const Mat& A = a.value();
  Mat out(A.rows(), 1);
  for (Index i = 0; i < A.rows(); ++i) {
    const double m = A.row(i).maxCoeff();
    out(i, 0) = m + std::log((A.row(i).array() - m).exp().sum());
  }
  return a.tape->push(Op::logsumexp_rows, std::move(out), a.id);
}

Var affine(Var a, double scale, double shift) {
  Mat out = (scale * a.value().array() + shift).matrix();
  return a.tape->push(Op::affine, std::move(out), a.id, -1, scale, shift);
}

}  // namespace nsm::diff
