#pragma once

// Define-by-run reverse-mode differentiation over dense row-major matrices.
// A Tape records primitives as they execute; backward() sweeps the records
// once in reverse. Node inputs always precede the node, so the record order
// is already a topological order.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace daepinn::ad {

using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape_string(const Tensor& t);
std::vector<std::size_t> shape_of(const Tensor& t);

class Tape;
struct Recorder;

/// Handle to a recorded node. Cheap to copy; valid while its Tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Convenience for 1x1 nodes.
  double scalar() const;

  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  MatMul,
  Affine,
  Sin,
  Cos,
  Square,
  Softplus,
  Sum,
  Mean,
  Scale,
  Shift,
  Gate,
  SliceCols,
  ConcatCols,
  Segment,
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that accumulates a gradient during backward().
  Var variable(Tensor value);
  /// Leaf excluded from differentiation.
  Var constant(Tensor value);
  Var constant(double value);

  const Tensor& value(Var v) const;

  /// Reverse sweep from a 1x1 node. Previous adjoints are discarded, so one
  /// tape can be swept repeatedly with different seeds.
  void backward(Var seed);

  /// Gradient of the last seed w.r.t. `v`, zeros if v did not influence it.
  Tensor grad(Var v) const;
  /// nullptr when the node received no adjoint.
  const Tensor* grad_ptr(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  /// Nodes visited by the most recent backward().
  std::size_t last_backward_visits() const { return visits_; }

  void reserve(std::size_t n) { nodes_.reserve(n); }

 private:
  struct Node {
    Op op = Op::Leaf;
    int in0 = -1;
    int in1 = -1;
    int in2 = -1;
    double k = 0.0;
    Eigen::Index p0 = 0;
    Eigen::Index p1 = 0;
    std::vector<int> many;
    Tensor value;
    bool needs_grad = false;
  };

  Var push(Node&& node);
  bool needs(int id) const { return id >= 0 && nodes_[static_cast<std::size_t>(id)].needs_grad; }
  void accumulate(int id, const Tensor& g);
  template <class Expr>
  void accumulate_expr(int id, const Expr& g);

  std::vector<Node> nodes_;
  std::vector<Tensor> adj_;
  std::size_t visits_ = 0;

  friend struct Recorder;
  friend Var add(Var, Var);
  friend Var sub(Var, Var);
  friend Var mul(Var, Var);
  friend Var div(Var, Var);
  friend Var matmul(Var, Var);
  friend Var affine(Var, Var, Var);
  friend Var sin(Var);
  friend Var cos(Var);
  friend Var square(Var);
  friend Var softplus(Var);
  friend Var sum(Var);
  friend Var mean(Var);
  friend Var scale(Var, double);
  friend Var shift(Var, double);
  friend Var gate(Var, Var, Var);
  friend Var slice_cols(Var, Eigen::Index, Eigen::Index);
  friend Var concat_cols(std::span<const Var>);
  friend Var segment(Var, Eigen::Index, Eigen::Index, Eigen::Index);
};

// Elementwise binary ops require identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Throws DivisionByZero if any denominator entry is exactly zero.
Var div(Var a, Var b);
Var matmul(Var a, Var b);
/// x W + b with b a 1 x out row broadcast over the rows of x W.
Var affine(Var x, Var w, Var b);
Var sin(Var x);
Var cos(Var x);
Var square(Var x);
/// ln(1 + e^x) in the form max(x, 0) + ln(1 + e^{-|x|}).
Var softplus(Var x);
Var sum(Var x);
Var mean(Var x);
Var scale(Var x, double c);
Var shift(Var x, double c);
/// (1 - z) .* u + z .* v.
Var gate(Var z, Var u, Var v);
Var slice_cols(Var x, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
/// rows x cols view of the contiguous row-major range starting at `offset`.
Var segment(Var x, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return scale(a, -1.0); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator+(Var a, double c) { return shift(a, c); }
inline Var operator+(double c, Var a) { return shift(a, c); }
inline Var operator-(Var a, double c) { return shift(a, -c); }
inline Var operator-(double c, Var a) { return shift(scale(a, -1.0), c); }

/// Max over coordinates of |autodiff - central difference| / (|central difference| + 1e-12).
using ScalarFunction = std::function<Var(Tape&, Var)>;
double grad_check(const ScalarFunction& fn, const Tensor& point, double step);

}  // namespace daepinn::ad
