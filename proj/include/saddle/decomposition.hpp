#pragma once

// Discrete saddle decomposition of a sampled 1D convex-concave function and
// its lift to a continuous piecewise-linear member of the saddle class.
//
// For A[i][j] = f(x_i, y_j) on a uniform (m+1)x(m+1) grid,
//
//   A[i][j] = E0(i) L0(j) + Em(i) Lm(j) + sum_{s=1}^{m-1} B_s(i) K_s(j),
//   L0(j) = 1 - j/m,  Lm(j) = j/m,  K_s(j) = min(j, s) - j s / m,
//
// with B_s(i) = -(A[i][s+1] + A[i][s-1] - 2 A[i][s]) >= 0. Convexity of E0,
// Em and of every column of B in i follows from convexity in x and the mixed
// condition D2x(-D2y A) >= 0.

#include "saddle/errors.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace saddle::decomp {

using GridMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double width() const { return hi - lo; }
};

struct GridSamples {
  int m = 0;
  GridMatrix A;  // (m+1) x (m+1), row i <-> x_i, column j <-> y_j
  Interval x;
  Interval y;

  double x_node(int i) const { return x.lo + i * x.width() / m; }
  double y_node(int j) const { return y.lo + j * y.width() / m; }
  /// Throws InputError unless the shape, intervals and entries are valid.
  void validate() const;
};

struct MongeReport {
  int m = 0;
  double convexity_margin = 0.0;  // min over i in 1..m-1, all j of D2x A
  double concavity_margin = 0.0;  // max over all i, j in 1..m-1 of D2y A
  double mixed_margin = 0.0;      // min over 1 <= r,s <= m-1 of D2x(-D2y A)
  double mixed_max = 0.0;         // max of the same quantity
  double tol = 0.0;
  bool convex_ok = true;
  bool concave_ok = true;
  bool mixed_ok = true;           // forward orientation: mixed_margin >= -tol
  bool reversed_mixed_ok = true;  // reversed orientation: mixed_max <= tol

  bool forward_pass() const { return convex_ok && concave_ok && mixed_ok; }
  bool reversed_pass() const { return convex_ok && concave_ok && reversed_mixed_ok; }
};

/// Raised when a grid fails the admissibility conditions; carries the report.
class AdmissibilityError : public std::runtime_error {
 public:
  AdmissibilityError(const std::string& what, MongeReport report)
      : std::runtime_error(what), report_(std::move(report)) {}
  const MongeReport& report() const { return report_; }

 private:
  MongeReport report_;
};

struct SaddleDecomposition {
  int m = 0;
  Eigen::VectorXd E0;  // m+1
  Eigen::VectorXd Em;  // m+1
  GridMatrix B;        // (m+1) x (m-1), B(i, s-1) = B_s(i)
  Interval x;
  Interval y;
};

/// Continuous piecewise-linear function given by values on m+1 uniform nodes
/// of [lo, hi]; outside the interval the first/last linear piece is extended.
struct PiecewiseLinear {
  Interval domain;
  std::vector<double> nodes;

  double operator()(double t) const;
  bool empty() const { return nodes.empty(); }
};

enum class Orientation { Forward, Reversed };

/// Sum of products of piecewise-linear factors plus marginals:
///   f_m(x,y) = sum_k x_factor_k(x) * y_factor_k(y) + x_marginal(x) + y_marginal(y).
/// Forward form: x factors convex >= 0, y factors concave >= 0, y_marginal = G
/// concave (affine), x_marginal = 0. Reversed form: x factors convex <= 0,
/// y factors convex >= 0, x_marginal = H convex, y_marginal = 0.
struct LiftedSaddleFunction {
  struct Term {
    PiecewiseLinear x_factor;
    PiecewiseLinear y_factor;
  };

  std::vector<Term> terms;
  PiecewiseLinear x_marginal;
  PiecewiseLinear y_marginal;
  double C0 = 0.0;
  double Cm = 0.0;
  Orientation orientation = Orientation::Forward;
  Interval x;
  Interval y;

  double operator()(double xv, double yv) const;
};

/// Default admissibility tolerance 1e-9 * (max|A| + 1).
double default_tolerance(const GridSamples& grid);

GridSamples sample_grid(const std::function<double(double, double)>& f, int m, Interval x, Interval y);

/// Grid margins; requires m >= 2. tol < 0 selects default_tolerance().
MongeReport check_monge(const GridSamples& grid, double tol = -1.0);

/// Discrete decomposition; throws AdmissibilityError when the forward
/// conditions fail. m = 1 has no interior nodes and is accepted as is.
SaddleDecomposition decompose_grid(const GridSamples& grid, double tol = -1.0);

/// The lemma's sum at node (i, j).
double reconstruct_grid(const SaddleDecomposition& dec, int i, int j);

/// Kernel K_s(j) = min(j, s) - j s / m.
double tent_kernel(int m, int s, int j);

LiftedSaddleFunction lift(const SaddleDecomposition& dec);

inline double evaluate_lifted(const LiftedSaddleFunction& f, double x, double y) { return f(x, y); }

/// Corollary form through F(y, x) = -f(x, y): requires convexity in x,
/// concavity in y and D2x(-D2y A) <= tol.
LiftedSaddleFunction decompose_reversed(const GridSamples& grid, double tol = -1.0);

/// The grid of F(y, x) = -f(x, y): entries -A^T with the intervals swapped.
GridSamples reversed_grid(const GridSamples& grid);

/// Standard bilinear interpolation of the grid values (independent of the
/// decomposition), with the same boundary-piece extension.
double bilinear_interpolant(const GridSamples& grid, double x, double y);

/// max |f_m - f| over an n x n probe grid of the lifted function's domain,
/// endpoints included.
double lifted_sup_error(const LiftedSaddleFunction& fm, const std::function<double(double, double)>& f, int n = 401);

/// Upper bound L * sqrt(2) * h with h the larger of the two grid spacings;
/// for the unit square this is L * sqrt(2) / m.
double sup_error_bound(double lipschitz, int m, Interval x, Interval y);

}  // namespace saddle::decomp
