#pragma once

// Reverse-mode automatic differentiation over dense float64 matrices.
//
// A Graph is a single-use tape: build the expression with the free functions
// below, call backward() once on a 1x1 loss, and gradients are written into
// the Parameter objects that were bound with Graph::parameter(). Values are
// rank <= 2 (scalars are 1x1, row vectors 1xn). Elementwise binary ops
// broadcast a 1xn row, an nx1 column or a 1x1 scalar against a matrix;
// nothing more general.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace saddle::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Tensor {
  Matrix values;
  bool requires_grad = false;

  std::vector<Index> shape() const { return {values.rows(), values.cols()}; }
  Index size() const { return values.size(); }
};

/// A trainable tensor. `grad` is valid only while `has_grad` is set; the
/// optimizer consumes and clears it.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix init, bool nonnegative = false);

  const Matrix& value() const { return tensor.values; }
  Matrix& value() { return tensor.values; }

  std::string name;
  Tensor tensor;
  Matrix grad;
  bool has_grad = false;
  /// Constrained to be elementwise >= 0 (enforced by projection).
  bool nonnegative = false;

  void clear_grad();
};

class Graph;

/// Backward rule of a custom node: given the output gradient and the input
/// values, returns one gradient per input (an empty matrix means zero).
using CustomBackward =
    std::function<std::vector<Matrix>(const Matrix& grad, const std::vector<const Matrix*>& inputs)>;

/// Handle to a node in a Graph. Cheap to copy; only valid while the graph lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Max,
  MatMul,
  Affine,
  AffinePair,
  Relu,
  Softplus,
  Exp,
  Log,
  Abs,
  Square,
  Scale,
  GroupMax,
  Sum,
  Mean,
  RowSum,
  Cols,
  Custom,
};

const char* op_name(Op op);

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  Var scalar(double value);
  /// Binds a parameter. Binding the same parameter twice returns the same node.
  Var parameter(Parameter& p);

  /// Reverse pass from a 1x1 loss. A graph supports exactly one backward
  /// call, and every reached parameter must not already hold a pending
  /// gradient (accumulation across passes is rejected).
  void backward(const Var& loss);

  const Matrix& value(const Var& v) const;
  std::size_t size() const { return nodes_.size(); }

  // Node construction, used by the op functions below.
  Var push(Op op, Matrix value, int a, int b = -1, int c = -1, int d = -1, int e = -1);
  /// Attaches a same-shape side matrix (e.g. a cached derivative) to a node.
  void set_cache(const Var& v, Matrix cache);
  void set_aux(const Var& v, double scalar, Index i0 = 0, Index i1 = 0);
  void set_argmax(const Var& v, std::vector<Index> argmax);
  /// Node with an arbitrary number of inputs and a user-supplied backward rule.
  Var push_custom(const std::vector<Var>& inputs, Matrix value, CustomBackward backward);

 private:
  struct Node {
    Op op = Op::Leaf;
    Matrix value;
    Matrix grad;
    Matrix cache;
    int in[5] = {-1, -1, -1, -1, -1};
    double scalar = 0.0;
    Index i0 = 0;
    Index i1 = 0;
    std::vector<Index> argmax;
    std::vector<int> custom_in;
    CustomBackward custom_backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  void backprop_node(int id);
  void accumulate(int id, Matrix g);
  void accumulate_cols(int id, Index begin, const Matrix& g);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Elementwise binary ops (with row/column/scalar broadcasting).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var max(const Var& a, const Var& b);

Var matmul(const Var& a, const Var& b);
/// x * W^T + b, with x: batch x in, W: out x in, b: 1 x out.
Var affine(const Var& x, const Var& w, const Var& b);
/// x * W^T (affine without bias).
Var linear(const Var& x, const Var& w);
/// z * Wz^T + x * Wx^T + b in one node (the ICNN hidden layer).
Var affine_pair(const Var& z, const Var& wz, const Var& x, const Var& wx, const Var& b);

Var relu(const Var& a);
/// log(1 + e^a), evaluated stably.
Var softplus(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var abs(const Var& a);
Var square(const Var& a);
Var scale(const Var& a, double factor);
Var neg(const Var& a);

/// Max over consecutive column groups of width `group`; cols must divide.
/// group == cols gives the row-wise max reduction.
Var group_max(const Var& a, Index group);
Var sum(const Var& a);
Var mean(const Var& a);
/// Sum across columns: (r x c) -> (r x 1).
Var row_sum(const Var& a);
/// Column slice [begin, begin + count).
Var cols(const Var& a, Index begin, Index count);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return neg(a); }

/// Stable scalar softplus and its derivative, shared with non-graph code.
double softplus(double t);
double sigmoid(double t);

}  // namespace saddle::ad
