#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nsm/core/types.hpp"

namespace nsm::diff {

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

enum class Op {
  param,
  constant,
  matmul,
  add,
  mul,
  tanh,
  softplus,
  square,
  sum,
  logsumexp_rows,
  log,
  reciprocal,
  affine,  // a * x + b with constant scalars
};

std::string op_name(Op op);

/// Single-use recording of a scalar objective over matrix-valued nodes.
///
/// Parameters are views into one flat vector; `backward` writes the gradient
/// of a 1x1 root with respect to that vector. Nodes are appended in
/// evaluation order, so the node list is topologically sorted by
/// construction. Every forward value is checked for finiteness.
class Tape {
 public:
  explicit Tape(std::span<const double> params);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf viewing params[offset, offset + rows*cols) as a column-major matrix.
  Var param(std::size_t offset, Index rows, Index cols);
  Var constant(Mat value);
  Var scalar(double value);

  /// Reverse pass from a 1x1 root. Returns the root value; the gradient is
  /// written (not accumulated) into `gradient`, which must match params.
  double backward(Var root, std::span<double> gradient);

  const Mat& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t param_count() const { return params_.size(); }

  // Node constructors; use the free functions below.
  Var push(Op op, Mat value, int a, int b = -1, double c0 = 0.0, double c1 = 0.0, bool ta = false, bool tb = false);

 private:
  struct Node {
    Op op;
    Mat value;
    int a = -1;
    int b = -1;
    double c0 = 0.0;  // affine scale
    double c1 = 0.0;  // affine shift
    std::size_t offset = 0;
    bool ta = false;
    bool tb = false;
  };

  std::span<const double> params_;
  std::vector<Node> nodes_;
};

/// a (optionally transposed) times b (optionally transposed).
Var matmul(Var a, Var b, bool transpose_a = false, bool transpose_b = false);
/// Elementwise sum; b may broadcast as 1xC (row), Rx1 (column) or 1x1.
Var add(Var a, Var b);
/// Elementwise product with the same broadcasting rules as add.
Var mul(Var a, Var b);
Var tanh(Var a);
Var softplus(Var a);
Var square(Var a);
Var log(Var a);
Var reciprocal(Var a);
/// Sum of all entries, 1x1.
Var sum(Var a);
/// Row-wise log-sum-exp, Rx1.
Var logsumexp_rows(Var a);
/// scale * a + shift.
Var affine(Var a, double scale, double shift = 0.0);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return add(a, affine(b, -1.0)); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return affine(a, s); }

struct ValueAndGradient {
  double value = 0.0;
  Vec gradient;
};

/// Record `objective(tape)` (which must return a 1x1 node) and differentiate.
template <class Objective>
ValueAndGradient grad(Objective&& objective, std::span<const double> params) {
  Tape tape(params);
  Var root = objective(tape);
  ValueAndGradient out;
  out.gradient.setZero(static_cast<Index>(params.size()));
  out.value = tape.backward(root, std::span<double>(out.gradient.data(), params.size()));
  return out;
}

}  // namespace nsm::diff
