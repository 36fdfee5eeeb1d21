#include "saddle/autodiff.hpp"

#include "saddle/errors.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace saddle::ad {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

[[noreturn]] void shape_error(Op op, const Matrix& a, const Matrix& b, const char* what) {
  std::ostringstream os;
  os << op_name(op) << ": " << what << " " << shape_str(a) << " vs " << shape_str(b);
  throw ShapeError(os.str());
}

Graph& graph_of(const Var& a) {
  if (!a.valid()) throw std::invalid_argument("autodiff: use of an empty Var");
  return *a.graph();
}

Graph& graph_of(const Var& a, const Var& b) {
  Graph& g = graph_of(a);
  if (&graph_of(b) != &g) throw std::invalid_argument("autodiff: operands belong to different graphs");
  return g;
}

Index broadcast_dim(Index a, Index b, bool& ok) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  ok = false;
  return a;
}

std::pair<Index, Index> broadcast_shape(Op op, const Matrix& a, const Matrix& b) {
  bool ok = true;
  Index r = broadcast_dim(a.rows(), b.rows(), ok);
  Index c = broadcast_dim(a.cols(), b.cols(), ok);
  if (!ok) shape_error(op, a, b, "cannot broadcast");
  return {r, c};
}

Matrix expand(const Matrix& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

// Sums a broadcast gradient back down to the operand shape.
Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix r = g;
  if (rows == 1 && r.rows() != 1) r = r.colwise().sum().eval();
  if (cols == 1 && r.cols() != 1) r = r.rowwise().sum().eval();
  return r;
}

Var binary(Op op, const Var& a, const Var& b) {
  Graph& g = graph_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  auto [r, c] = broadcast_shape(op, av, bv);
  Matrix out;
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    switch (op) {
      case Op::Add: out = av + bv; break;
      case Op::Sub: out = av - bv; break;
      case Op::Mul: out = av.cwiseProduct(bv); break;
      case Op::Max: out = av.cwiseMax(bv); break;
      default: break;
    }
  } else {
    Matrix ae = expand(av, r, c);
    Matrix be = expand(bv, r, c);
    switch (op) {
      case Op::Add: out = ae + be; break;
      case Op::Sub: out = ae - be; break;
      case Op::Mul: out = ae.cwiseProduct(be); break;
      case Op::Max: out = ae.cwiseMax(be); break;
      default: break;
    }
  }
  return g.push(op, std::move(out), a.id(), b.id());
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Max: return "max";
    case Op::MatMul: return "matmul";
    case Op::Affine: return "affine";
    case Op::AffinePair: return "affine_pair";
    case Op::Relu: return "relu";
    case Op::Softplus: return "softplus";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Abs: return "abs";
    case Op::Square: return "square";
    case Op::Scale: return "scale";
    case Op::GroupMax: return "group_max";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::RowSum: return "row_sum";
    case Op::Cols: return "cols";
    case Op::Custom: return "custom";
  }
  return "?";
}

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

Parameter::Parameter(std::string n, Matrix init, bool nonneg)
    : name(std::move(n)), tensor{std::move(init), true}, nonnegative(nonneg) {}

void Parameter::clear_grad() {
  grad.resize(0, 0);
  has_grad = false;
}

const Matrix& Var::value() const { return graph_of(*this).value(*this); }

const Matrix& Graph::value(const Var& v) const {
  if (v.graph() != this || v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size()) {
    throw std::invalid_argument("autodiff: Var does not belong to this graph");
  }
  return nodes_[static_cast<std::size_t>(v.id())].value;
}

Var Graph::push(Op op, Matrix value, int a, int b, int c, int d, int e) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.in[0] = a;
  n.in[1] = b;
  n.in[2] = c;
  n.in[3] = d;
  n.in[4] = e;
  for (int in : n.in) {
    if (in >= 0) n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(in)].needs_grad;
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Graph::set_aux(const Var& v, double scalar, Index i0, Index i1) {
  Node& n = nodes_[static_cast<std::size_t>(v.id())];
  n.scalar = scalar;
  n.i0 = i0;
  n.i1 = i1;
}

void Graph::set_cache(const Var& v, Matrix cache) {
  nodes_[static_cast<std::size_t>(v.id())].cache = std::move(cache);
}

Var Graph::push_custom(const std::vector<Var>& inputs, Matrix value, CustomBackward backward) {
  std::vector<int> ids;
  ids.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.graph() != this) throw std::invalid_argument("custom: operand belongs to another graph");
    ids.push_back(v.id());
  }
  Var out = push(Op::Custom, std::move(value), -1);
  Node& n = nodes_.back();
  for (int id : ids) n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(id)].needs_grad;
  n.custom_in = std::move(ids);
  n.custom_backward = std::move(backward);
  return out;
}

void Graph::set_argmax(const Var& v, std::vector<Index> argmax) {
  nodes_[static_cast<std::size_t>(v.id())].argmax = std::move(argmax);
}

Var Graph::constant(Matrix value) { return push(Op::Leaf, std::move(value), -1); }

Var Graph::scalar(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

Var Graph::parameter(Parameter& p) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].param == &p) return Var(this, static_cast<int>(i));
  }
  Var v = push(Op::Leaf, p.value(), -1);
  Node& n = nodes_.back();
  n.param = &p;
  n.needs_grad = true;
  return v;
}

void Graph::accumulate(int id, Matrix g) {
  if (id < 0) return;
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = std::move(g);
  } else {
    n.grad += g;
  }
}

void Graph::accumulate_cols(int id, Index begin, const Matrix& g) {
  if (id < 0) return;
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  n.grad.middleCols(begin, g.cols()) += g;
}

void Graph::backward(const Var& loss) {
  if (loss.graph() != this) throw std::invalid_argument("backward: loss belongs to another graph");
  if (backward_done_) {
    throw std::logic_error("backward: graph already differentiated (gradient accumulation is not supported)");
  }
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward: loss must be a 1x1 scalar, got " + shape_str(lv));
  }
  for (const Node& n : nodes_) {
    if (n.param != nullptr && n.param->has_grad) {
      throw std::logic_error("backward: parameter '" + n.param->name +
                             "' already holds a gradient; run the optimizer or clear it first");
    }
  }
  backward_done_ = true;
  for (Node& n : nodes_) n.grad.resize(0, 0);
  accumulate(loss.id(), Matrix::Ones(1, 1));
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0 || n.op == Op::Leaf) continue;
    backprop_node(id);
  }
  for (Node& n : nodes_) {
    if (n.param == nullptr) continue;
    if (n.grad.size() == 0) {
      n.param->grad = Matrix::Zero(n.value.rows(), n.value.cols());
    } else {
      n.param->grad = std::move(n.grad);
    }
    n.param->has_grad = true;
  }
}

void Graph::backprop_node(int id) {
  // accumulate() never appends nodes, so references into nodes_ stay valid.
  // The node's own gradient is consumed here and may be moved to a parent.
  Node& n = nodes_[static_cast<std::size_t>(id)];
  Matrix g = std::move(n.grad);
  const int ia = n.in[0];
  const int ib = n.in[1];
  const int ic = n.in[2];
  auto val = [this](int i) -> const Matrix& { return nodes_[static_cast<std::size_t>(i)].value; };
  auto needs = [this](int i) { return i >= 0 && nodes_[static_cast<std::size_t>(i)].needs_grad; };

  switch (n.op) {
    case Op::Leaf: break;
    case Op::Add:
    case Op::Sub: {
      const bool sub = n.op == Op::Sub;
      if (needs(ib)) {
        Matrix gb = reduce_to(g, val(ib).rows(), val(ib).cols());
        if (sub) gb = -gb;
        accumulate(ib, std::move(gb));
      }
      if (needs(ia)) {
        const Index r = val(ia).rows(), c = val(ia).cols();
        if (g.rows() == r && g.cols() == c) {
          accumulate(ia, std::move(g));
        } else {
          accumulate(ia, reduce_to(g, r, c));
        }
      }
      break;
    }
    case Op::Mul: {
      const Index r = g.rows();
      const Index c = g.cols();
      if (needs(ia)) {
        accumulate(ia, reduce_to(g.cwiseProduct(expand(val(ib), r, c)), val(ia).rows(), val(ia).cols()));
      }
      if (needs(ib)) {
        accumulate(ib, reduce_to(g.cwiseProduct(expand(val(ia), r, c)), val(ib).rows(), val(ib).cols()));
      }
      break;
    }
    case Op::Max: {
      const Index r = g.rows();
      const Index c = g.cols();
      Matrix ae = expand(val(ia), r, c);
      Matrix be = expand(val(ib), r, c);
      // Ties route the gradient to the first operand.
      Matrix mask = (ae.array() >= be.array()).cast<double>().matrix();
      if (needs(ia)) accumulate(ia, reduce_to(g.cwiseProduct(mask), val(ia).rows(), val(ia).cols()));
      if (needs(ib)) {
        Matrix inv = (1.0 - mask.array()).matrix();
        accumulate(ib, reduce_to(g.cwiseProduct(inv), val(ib).rows(), val(ib).cols()));
      }
      break;
    }
    case Op::MatMul: {
      if (needs(ia)) {
        Matrix ga(g.rows(), val(ib).rows());
        ga.noalias() = g * val(ib).transpose();
        accumulate(ia, std::move(ga));
      }
      if (needs(ib)) {
        Matrix gb(val(ia).cols(), g.cols());
        gb.noalias() = val(ia).transpose() * g;
        accumulate(ib, std::move(gb));
      }
      break;
    }
    case Op::Affine: {
      if (needs(ia)) {
        Matrix gx(g.rows(), val(ib).cols());
        gx.noalias() = g * val(ib);
        accumulate(ia, std::move(gx));
      }
      if (needs(ib)) {
        Matrix gw(g.cols(), val(ia).cols());
        gw.noalias() = g.transpose() * val(ia);
        accumulate(ib, std::move(gw));
      }
      if (needs(ic)) accumulate(ic, g.colwise().sum());
      break;
    }
    case Op::AffinePair: {
      const int id_ = n.in[3];
      const int ie = n.in[4];
      if (needs(ia)) {
        Matrix gz(g.rows(), val(ib).cols());
        gz.noalias() = g * val(ib);
        accumulate(ia, std::move(gz));
      }
      if (needs(ib)) {
        Matrix gw(g.cols(), val(ia).cols());
        gw.noalias() = g.transpose() * val(ia);
        accumulate(ib, std::move(gw));
      }
      if (needs(ic)) {
        Matrix gx(g.rows(), val(id_).cols());
        gx.noalias() = g * val(id_);
        accumulate(ic, std::move(gx));
      }
      if (needs(id_)) {
        Matrix gw(g.cols(), val(ic).cols());
        gw.noalias() = g.transpose() * val(ic);
        accumulate(id_, std::move(gw));
      }
      if (needs(ie)) accumulate(ie, g.colwise().sum());
      break;
    }
    case Op::Relu: {
      g.array() = (val(ia).array() > 0.0).select(g.array(), 0.0);
      accumulate(ia, std::move(g));
      break;
    }
    case Op::Softplus: {
      // The forward pass cached the sigmoid of the input.
      g.array() *= n.cache.array();
      accumulate(ia, std::move(g));
      break;
    }
    case Op::Exp: g.array() *= n.value.array(); accumulate(ia, std::move(g)); break;
    case Op::Log: g.array() /= val(ia).array(); accumulate(ia, std::move(g)); break;
    case Op::Abs: {
      const auto& a = val(ia).array();
      Matrix s = ((a > 0.0).cast<double>() - (a < 0.0).cast<double>()).matrix();
      accumulate(ia, g.cwiseProduct(s));
      break;
    }
    case Op::Square: g.array() *= 2.0 * val(ia).array(); accumulate(ia, std::move(g)); break;
    case Op::Scale: g *= n.scalar; accumulate(ia, std::move(g)); break;
    case Op::GroupMax: {
      const Matrix& a = val(ia);
      Matrix ga = Matrix::Zero(a.rows(), a.cols());
      const Index groups = g.cols();
      for (Index r = 0; r < g.rows(); ++r) {
        for (Index k = 0; k < groups; ++k) {
          ga(r, n.argmax[static_cast<std::size_t>(r * groups + k)]) += g(r, k);
        }
      }
      accumulate(ia, ga);
      break;
    }
    case Op::Sum: accumulate(ia, Matrix::Constant(val(ia).rows(), val(ia).cols(), g(0, 0))); break;
    case Op::Mean: {
      const Matrix& a = val(ia);
      accumulate(ia, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / static_cast<double>(a.size())));
      break;
    }
    case Op::RowSum: accumulate(ia, g.replicate(1, val(ia).cols())); break;
    case Op::Cols: accumulate_cols(ia, n.i0, g); break;
    case Op::Custom: {
      std::vector<const Matrix*> inputs;
      inputs.reserve(n.custom_in.size());
      for (int i : n.custom_in) inputs.push_back(&val(i));
      std::vector<Matrix> grads = n.custom_backward(g, inputs);
      if (grads.size() != inputs.size()) throw std::logic_error("custom: backward returned wrong gradient count");
      for (std::size_t k = 0; k < grads.size(); ++k) {
        const int in = n.custom_in[k];
        if (!needs(in) || grads[k].size() == 0) continue;
        if (grads[k].rows() != val(in).rows() || grads[k].cols() != val(in).cols()) {
          throw std::logic_error("custom: gradient shape mismatch for input " + std::to_string(k));
        }
        accumulate(in, std::move(grads[k]));
      }
      break;
    }
  }
}

Var add(const Var& a, const Var& b) { return binary(Op::Add, a, b); }
Var sub(const Var& a, const Var& b) { return binary(Op::Sub, a, b); }
Var mul(const Var& a, const Var& b) { return binary(Op::Mul, a, b); }
Var max(const Var& a, const Var& b) { return binary(Op::Max, a, b); }

Var matmul(const Var& a, const Var& b) {
  Graph& g = graph_of(a, b);
  if (a.cols() != b.rows()) shape_error(Op::MatMul, a.value(), b.value(), "inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  return g.push(Op::MatMul, std::move(out), a.id(), b.id());
}

Var affine(const Var& x, const Var& w, const Var& b) {
  Graph& g = graph_of(x, w);
  graph_of(x, b);
  if (x.cols() != w.cols()) shape_error(Op::Affine, x.value(), w.value(), "input width differs from weight columns");
  if (b.rows() != 1 || b.cols() != w.rows()) shape_error(Op::Affine, w.value(), b.value(), "bias must be 1 x out");
  Matrix out(x.rows(), w.rows());
  out.noalias() = x.value() * w.value().transpose();
  out.rowwise() += b.value().row(0);
  return g.push(Op::Affine, std::move(out), x.id(), w.id(), b.id());
}

Var linear(const Var& x, const Var& w) {
  Graph& g = graph_of(x, w);
  if (x.cols() != w.cols()) shape_error(Op::Affine, x.value(), w.value(), "input width differs from weight columns");
  Matrix out(x.rows(), w.rows());
  out.noalias() = x.value() * w.value().transpose();
  return g.push(Op::Affine, std::move(out), x.id(), w.id());
}

Var affine_pair(const Var& z, const Var& wz, const Var& x, const Var& wx, const Var& b) {
  Graph& g = graph_of(z, wz);
  graph_of(z, x);
  graph_of(z, wx);
  graph_of(z, b);
  if (z.cols() != wz.cols()) shape_error(Op::AffinePair, z.value(), wz.value(), "input width differs from weight columns");
  if (x.cols() != wx.cols()) shape_error(Op::AffinePair, x.value(), wx.value(), "input width differs from weight columns");
  if (z.rows() != x.rows()) shape_error(Op::AffinePair, z.value(), x.value(), "batch sizes differ");
  if (wz.rows() != wx.rows()) shape_error(Op::AffinePair, wz.value(), wx.value(), "output widths differ");
  if (b.rows() != 1 || b.cols() != wz.rows()) shape_error(Op::AffinePair, wz.value(), b.value(), "bias must be 1 x out");
  Matrix out(z.rows(), wz.rows());
  out.noalias() = z.value() * wz.value().transpose();
  out.noalias() += x.value() * wx.value().transpose();
  out.rowwise() += b.value().row(0);
  return g.push(Op::AffinePair, std::move(out), z.id(), wz.id(), x.id(), wx.id(), b.id());
}

Var relu(const Var& a) {
  return graph_of(a).push(Op::Relu, a.value().cwiseMax(0.0), a.id());
}

Var softplus(const Var& a) {
  const auto& v = a.value().array();
  // log(1 + e^-|v|) through log rather than log1p: Eigen vectorizes log only,
  // and the absolute error stays at roundoff.
  Matrix e = (-v.abs()).exp().matrix();
  Matrix out = (v.max(0.0) + (1.0 + e.array()).log()).matrix();
  // sigmoid(v) = 1/(1+e) for v >= 0 and e/(1+e) otherwise, with e = exp(-|v|).
  e.array() = (v >= 0.0).select(1.0, e.array()) / (1.0 + e.array());
  Graph& g = graph_of(a);
  Var res = g.push(Op::Softplus, std::move(out), a.id());
  g.set_cache(res, std::move(e));
  return res;
}

Var exp(const Var& a) { return graph_of(a).push(Op::Exp, a.value().array().exp().matrix(), a.id()); }
Var log(const Var& a) { return graph_of(a).push(Op::Log, a.value().array().log().matrix(), a.id()); }
Var abs(const Var& a) { return graph_of(a).push(Op::Abs, a.value().cwiseAbs(), a.id()); }
Var square(const Var& a) { return graph_of(a).push(Op::Square, a.value().array().square().matrix(), a.id()); }

Var scale(const Var& a, double factor) {
  Graph& g = graph_of(a);
  Var out = g.push(Op::Scale, factor * a.value(), a.id());
  g.set_aux(out, factor);
  return out;
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var group_max(const Var& a, Index group) {
  Graph& g = graph_of(a);
  const Matrix& v = a.value();
  if (group <= 0 || v.cols() % group != 0) {
    throw ShapeError("group_max: group width " + std::to_string(group) + " does not divide " + shape_str(v));
  }
  const Index groups = v.cols() / group;
  Matrix out(v.rows(), groups);
  std::vector<Index> argmax(static_cast<std::size_t>(v.rows() * groups));
  for (Index r = 0; r < v.rows(); ++r) {
    for (Index k = 0; k < groups; ++k) {
      Index best = k * group;
      for (Index j = best + 1; j < (k + 1) * group; ++j) {
        if (v(r, j) > v(r, best)) best = j;
      }
      out(r, k) = v(r, best);
      argmax[static_cast<std::size_t>(r * groups + k)] = best;
    }
  }
  Var res = g.push(Op::GroupMax, std::move(out), a.id());
  g.set_argmax(res, std::move(argmax));
  return res;
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return graph_of(a).push(Op::Sum, std::move(out), a.id());
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw ShapeError("mean: empty operand");
  Matrix out(1, 1);
  out(0, 0) = a.value().mean();
  return graph_of(a).push(Op::Mean, std::move(out), a.id());
}

Var row_sum(const Var& a) {
  return graph_of(a).push(Op::RowSum, a.value().rowwise().sum(), a.id());
}

Var cols(const Var& a, Index begin, Index count) {
  Graph& g = graph_of(a);
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw ShapeError("cols: slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_str(a.value()));
  }
  Var out = g.push(Op::Cols, a.value().middleCols(begin, count), a.id());
  g.set_aux(out, 0.0, begin, count);
  return out;
}

}  // namespace saddle::ad
