#include "daepinn/autodiff.hpp"

#include <cmath>
#include <sstream>

#include "daepinn/errors.hpp"

namespace daepinn::ad {

std::string shape_string(const Tensor& t) {
  std::ostringstream s;
  s << "[" << t.rows() << "x" << t.cols() << "]";
  return s.str();
}

std::vector<std::size_t> shape_of(const Tensor& t) {
  return {static_cast<std::size_t>(t.rows()), static_cast<std::size_t>(t.cols())};
}

const Tensor& Var::value() const { return tape_->value(*this); }

double Var::scalar() const {
  const Tensor& v = value();
  if (v.size() != 1) throw InvalidArgument("scalar() on non-scalar node " + shape_string(v));
  return v(0, 0);
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(double value) {
  Tensor t(1, 1);
  t(0, 0) = value;
  return constant(std::move(t));
}

const Tensor& Tape::value(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].value; }

Var Tape::push(Node&& node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Tensor& g) {
  Tensor& slot = adj_[static_cast<std::size_t>(id)];
  if (slot.size() == 0) {
    slot = g;
  } else {
    slot += g;
  }
}

template <class Expr>
void Tape::accumulate_expr(int id, const Expr& g) {
  Tensor& slot = adj_[static_cast<std::size_t>(id)];
  if (slot.size() == 0) {
    slot = g;
  } else {
    slot += g;
  }
}

Tensor Tape::grad(Var v) const {
  const Tensor* g = grad_ptr(v);
  if (g) return *g;
  const Tensor& val = value(v);
  return Tensor::Zero(val.rows(), val.cols());
}

const Tensor* Tape::grad_ptr(Var v) const {
  const auto id = static_cast<std::size_t>(v.id());
  if (id >= adj_.size() || adj_[id].size() == 0) return nullptr;
  return &adj_[id];
}

void Tape::backward(Var seed) {
  if (seed.tape() != this) throw InvalidArgument("backward: seed belongs to another tape");
  const Tensor& sv = value(seed);
  if (sv.rows() != 1 || sv.cols() != 1) {
    throw InvalidArgument("backward: seed must be scalar, got " + shape_string(sv));
  }
  adj_.assign(nodes_.size(), Tensor());
  adj_[static_cast<std::size_t>(seed.id())] = Tensor::Ones(1, 1);
  visits_ = 0;

  for (int id = seed.id(); id >= 0; --id) {
    ++visits_;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.op == Op::Leaf || !n.needs_grad) continue;
    const Tensor& g = adj_[static_cast<std::size_t>(id)];
    if (g.size() == 0) continue;

    auto val = [&](int i) -> const Tensor& { return nodes_[static_cast<std::size_t>(i)].value; };

    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        if (needs(n.in0)) accumulate(n.in0, g);
        if (needs(n.in1)) accumulate(n.in1, g);
        break;
      case Op::Sub:
        if (needs(n.in0)) accumulate(n.in0, g);
        if (needs(n.in1)) accumulate_expr(n.in1, -g);
        break;
      case Op::Mul:
        if (needs(n.in0)) accumulate_expr(n.in0, g.cwiseProduct(val(n.in1)));
        if (needs(n.in1)) accumulate_expr(n.in1, g.cwiseProduct(val(n.in0)));
        break;
      case Op::Div: {
        const Tensor& a = val(n.in0);
        const Tensor& b = val(n.in1);
        if (needs(n.in0)) accumulate_expr(n.in0, g.cwiseQuotient(b));
        if (needs(n.in1)) {
          accumulate_expr(n.in1, -(g.array() * a.array() / (b.array() * b.array())).matrix());
        }
        break;
      }
      case Op::MatMul:
        if (needs(n.in0)) accumulate_expr(n.in0, g * val(n.in1).transpose());
        if (needs(n.in1)) accumulate_expr(n.in1, val(n.in0).transpose() * g);
        break;
      case Op::Affine:
        if (needs(n.in0)) accumulate_expr(n.in0, g * val(n.in1).transpose());
        if (needs(n.in1)) accumulate_expr(n.in1, val(n.in0).transpose() * g);
        if (needs(n.in2)) accumulate_expr(n.in2, g.colwise().sum());
        break;
      case Op::Sin:
        accumulate_expr(n.in0, (g.array() * val(n.in0).array().cos()).matrix());
        break;
      case Op::Cos:
        accumulate_expr(n.in0, (-g.array() * val(n.in0).array().sin()).matrix());
        break;
      case Op::Square:
        accumulate_expr(n.in0, (2.0 * g.array() * val(n.in0).array()).matrix());
        break;
      case Op::Softplus: {
        // d/dx softplus = logistic(x), evaluated without overflow.
        const auto x = val(n.in0).array();
        const auto e = (-x.abs()).exp();
        const auto s = (x >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
        accumulate_expr(n.in0, (g.array() * s).matrix());
        break;
      }
      case Op::Sum: {
        const Tensor& x = val(n.in0);
        accumulate_expr(n.in0, Tensor::Constant(x.rows(), x.cols(), g(0, 0)));
        break;
      }
      case Op::Mean: {
        const Tensor& x = val(n.in0);
        const double w = g(0, 0) / static_cast<double>(x.size());
        accumulate_expr(n.in0, Tensor::Constant(x.rows(), x.cols(), w));
        break;
      }
      case Op::Scale:
        accumulate_expr(n.in0, n.k * g);
        break;
      case Op::Shift:
        accumulate(n.in0, g);
        break;
      case Op::Gate: {
        const auto z = val(n.in0).array();
        const auto u = val(n.in1).array();
        const auto v = val(n.in2).array();
        if (needs(n.in0)) accumulate_expr(n.in0, (g.array() * (v - u)).matrix());
        if (needs(n.in1)) accumulate_expr(n.in1, (g.array() * (1.0 - z)).matrix());
        if (needs(n.in2)) accumulate_expr(n.in2, (g.array() * z).matrix());
        break;
      }
      case Op::SliceCols: {
        const Tensor& x = val(n.in0);
        Tensor& slot = adj_[static_cast<std::size_t>(n.in0)];
        if (slot.size() == 0) slot = Tensor::Zero(x.rows(), x.cols());
        slot.middleCols(n.p0, n.p1) += g;
        break;
      }
      case Op::ConcatCols: {
        Eigen::Index col = 0;
        for (int part : n.many) {
          const Eigen::Index w = val(part).cols();
          if (needs(part)) accumulate_expr(part, g.middleCols(col, w));
          col += w;
        }
        break;
      }
      case Op::Segment: {
        const Tensor& x = val(n.in0);
        Tensor& slot = adj_[static_cast<std::size_t>(n.in0)];
        if (slot.size() == 0) slot = Tensor::Zero(x.rows(), x.cols());
        Eigen::Map<Eigen::VectorXd> flat(slot.data(), slot.size());
        flat.segment(n.p0, g.size()) += Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
        break;
      }
    }
  }
}

namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw InvalidArgument(std::string(op) + ": operands live on different tapes");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                          shape_string(b));
  }
}

}  // namespace

// The node builders below live in the ad namespace and are friends of Tape.

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tape& t = *a.tape();
  Tape::Node n;
  n.op = Op::Add;
  n.in0 = a.id();
  n.in1 = b.id();
  n.value = a.value() + b.value();
  n.needs_grad = t.needs(a.id()) || t.needs(b.id());
  return t.push(std::move(n));
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "subtract");
  require_same_shape(a.value(), b.value(), "subtract");
  Tape& t = *a.tape();
  Tape::Node n;
  n.op = Op::Sub;
  n.in0 = a.id();
  n.in1 = b.id();
  n.value = a.value() - b.value();
  n.needs_grad = t.needs(a.id()) || t.needs(b.id());
  return t.push(std::move(n));
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "multiply");
  require_same_shape(a.value(), b.value(), "multiply");
  Tape& t = *a.tape();
  Tape::Node n;
  n.op = Op::Mul;
  n.in0 = a.id();
  n.in1 = b.id();
  n.value = a.value().cwiseProduct(b.value());
  n.needs_grad = t.needs(a.id()) || t.needs(b.id());
  return t.push(std::move(n));
}

Var div(Var a, Var b) {
  require_same_tape(a, b, "divide");
  require_same_shape(a.value(), b.value(), "divide");
  if ((b.value().array() == 0.0).any()) throw DivisionByZero("divide: zero denominator");
  Tape& t = *a.tape();
  Tape::Node n;
  n.op = Op::Div;
  n.in0 = a.id();
  n.in1 = b.id();
  n.value = a.value().cwiseQuotient(b.value());
  n.needs_grad = t.needs(a.id()) || t.needs(b.id());
  return t.push(std::move(n));
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) {
    throw InvalidArgument("matmul: shape mismatch " + shape_string(a.value()) + " vs " +
                          shape_string(b.value()));
  }
  Tape& t = *a.tape();
  Tape::Node n;
  n.op = Op::MatMul;
  n.in0 = a.id();
  n.in1 = b.id();
  n.value.noalias() = a.value() * b.value();
  n.needs_grad = t.needs(a.id()) || t.needs(b.id());
  return t.push(std::move(n));
}

Var affine(Var x, Var w, Var b) {
  require_same_tape(x, w, "affine");
  require_same_tape(x, b, "affine");
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw InvalidArgument("affine: shape mismatch " + shape_string(x.value()) + " x " +
                          shape_string(w.value()) + " + " + shape_string(b.value()));
  }
  Tape& t = *x.tape();
  Tape::Node n;
  n.op = Op::Affine;
  n.in0 = x.id();
  n.in1 = w.id();
  n.in2 = b.id();
  n.value.noalias() = x.value() * w.value();
  n.value.rowwise() += b.value().row(0);
  n.needs_grad = t.needs(x.id()) || t.needs(w.id()) || t.needs(b.id());
  return t.push(std::move(n));
}

struct Recorder {
  template <class F>
  static Var unary(Var x, Op op, F&& fn, double k);
};

template <class F>
Var Recorder::unary(Var x, Op op, F&& fn, double k) {
  Tape& t = *x.tape();
  Tape::Node n;
  n.op = op;
  n.in0 = x.id();
  n.k = k;
  n.value = fn(x.value());
  n.needs_grad = t.needs(x.id());
  return t.push(std::move(n));
}

namespace {

template <class F>
Var unary(Var x, Op op, F&& fn, double k = 0.0) {
  return Recorder::unary(x, op, std::forward<F>(fn), k);
}

}  // namespace

Var sin(Var x) {
  return unary(x, Op::Sin, [](const Tensor& v) -> Tensor { return v.array().sin().matrix(); });
}

Var cos(Var x) {
  return unary(x, Op::Cos, [](const Tensor& v) -> Tensor { return v.array().cos().matrix(); });
}

Var square(Var x) {
  return unary(x, Op::Square, [](const Tensor& v) -> Tensor { return v.array().square().matrix(); });
}

Var softplus(Var x) {
  return unary(x, Op::Softplus, [](const Tensor& v) -> Tensor {
    return (v.array().max(0.0) + (-v.array().abs()).exp().log1p()).matrix();
  });
}

Var sum(Var x) {
  return unary(x, Op::Sum, [](const Tensor& v) -> Tensor { return Tensor::Constant(1, 1, v.sum()); });
}

Var mean(Var x) {
  if (x.value().size() == 0) throw InvalidArgument("mean of empty tensor");
  return unary(x, Op::Mean, [](const Tensor& v) -> Tensor { return Tensor::Constant(1, 1, v.mean()); });
}

Var scale(Var x, double c) {
  return unary(x, Op::Scale, [c](const Tensor& v) -> Tensor { return c * v; }, c);
}

Var shift(Var x, double c) {
  return unary(
      x, Op::Shift, [c](const Tensor& v) -> Tensor { return (v.array() + c).matrix(); }, c);
}

Var gate(Var z, Var u, Var v) {
  require_same_tape(z, u, "gate");
  require_same_tape(z, v, "gate");
  require_same_shape(z.value(), u.value(), "gate");
  require_same_shape(z.value(), v.value(), "gate");
  Tape& t = *z.tape();
  Tape::Node n;
  n.op = Op::Gate;
  n.in0 = z.id();
  n.in1 = u.id();
  n.in2 = v.id();
  const auto za = z.value().array();
  n.value = ((1.0 - za) * u.value().array() + za * v.value().array()).matrix();
  n.needs_grad = t.needs(z.id()) || t.needs(u.id()) || t.needs(v.id());
  return t.push(std::move(n));
}

Var slice_cols(Var x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw InvalidArgument("slice_cols: range [" + std::to_string(start) + ", " +
                          std::to_string(start + count) + ") outside " + shape_string(x.value()));
  }
  Tape& t = *x.tape();
  Tape::Node n;
  n.op = Op::SliceCols;
  n.in0 = x.id();
  n.p0 = start;
  n.p1 = count;
  n.value = x.value().middleCols(start, count);
  n.needs_grad = t.needs(x.id());
  return t.push(std::move(n));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  Tape& t = *parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p, "concat_cols");
    if (p.rows() != rows) {
      throw InvalidArgument("concat_cols: shape mismatch " + shape_string(parts.front().value()) +
                            " vs " + shape_string(p.value()));
    }
    cols += p.cols();
  }
  Tape::Node n;
  n.op = Op::ConcatCols;
  n.value.resize(rows, cols);
  Eigen::Index col = 0;
  for (const Var& p : parts) {
    n.value.middleCols(col, p.cols()) = p.value();
    col += p.cols();
    n.many.push_back(p.id());
    n.needs_grad = n.needs_grad || t.needs(p.id());
  }
  return t.push(std::move(n));
}

Var segment(Var x, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
  if (offset < 0 || rows < 0 || cols < 0 || offset + rows * cols > x.value().size()) {
    throw InvalidArgument("segment: range outside " + shape_string(x.value()));
  }
  Tape& t = *x.tape();
  Tape::Node n;
  n.op = Op::Segment;
  n.in0 = x.id();
  n.p0 = offset;
  n.p1 = rows * cols;
  n.value = Eigen::Map<const Tensor>(x.value().data() + offset, rows, cols);
  n.needs_grad = t.needs(x.id());
  return t.push(std::move(n));
}

double grad_check(const ScalarFunction& fn, const Tensor& point, double step) {
  Tensor analytic;
  {
    Tape tape;
    Var x = tape.variable(point);
    Var out = fn(tape, x);
    tape.backward(out);
    analytic = tape.grad(x);
  }
  auto eval = [&](const Tensor& p) {
    Tape tape;
    Var x = tape.variable(p);
    return fn(tape, x).scalar();
  };
  double worst = 0.0;
  Tensor probe = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double orig = point.data()[i];
    probe.data()[i] = orig + step;
    const double up = eval(probe);
    probe.data()[i] = orig - step;
    const double down = eval(probe);
    probe.data()[i] = orig;
    const double fd = (up - down) / (2.0 * step);
    const double dev = std::fabs(analytic.data()[i] - fd) / (std::fabs(fd) + 1e-12);
    worst = std::max(worst, dev);
  }
  return worst;
}

}  // namespace daepinn::ad
