#pragma once

// Saddle network: two convex nets u(x), v(y) with 2N+1 outputs each,
//
//   f(x,y) = sum_i ReLU(u1_i(x)) (Cv_i - v1_i(y))
//          + sum_i (u2_i(x) - Cu_i) ReLU(v2_i(y))
//          + H(x) + G(y) [+ x^T B y],
//
// with u = (u1, u2, H), v = (v1, v2, -G). f is convex in x and concave in y
// wherever v1 <= Cv and u2 <= Cu; those sign constraints are softly enforced
// by the penalty lambda * mean(sum ReLU(v1 - Cv) + sum ReLU(u2 - Cu)).

#include "saddle/box.hpp"
#include "saddle/convex_net.hpp"

#include <optional>
#include <span>

namespace saddle {

struct SaddleArchitecture {
  Primitive primitive = Primitive::Icnn;
  IcnnSpec icnn;
  MaxAffineSpec max_affine;
};

class SaddleNet {
 public:
  SaddleNet() = default;

  /// Fresh network: nets initialized from `rng`, shifts Cv = Cu = 1, B = 0.
  static SaddleNet create(Index dim, Index rank, const SaddleArchitecture& arch, bool bilinear,
                          double penalty_weight, Rng& rng);
  /// Assembles from explicit components. `u` and `v` must have 2*rank+1 outputs.
  static SaddleNet from_parts(Index rank, ConvexNet u, ConvexNet v, Matrix cv, Matrix cu, std::optional<Matrix> b,
                              double penalty_weight);

  Index rank() const { return rank_; }
  Index dim() const { return u_.input_dim(); }
  bool bilinear() const { return b_.has_value(); }
  double penalty_weight() const { return penalty_weight_; }
  void set_penalty_weight(double w);

  ConvexNet& u() { return u_; }
  ConvexNet& v() { return v_; }
  const ConvexNet& u() const { return u_; }
  const ConvexNet& v() const { return v_; }
  Parameter& cv() { return cv_; }
  Parameter& cu() { return cu_; }
  const Parameter& cv() const { return cv_; }
  const Parameter& cu() const { return cu_; }
  Parameter* b() { return b_ ? &*b_ : nullptr; }
  const Parameter* b() const { return b_ ? &*b_ : nullptr; }

  struct GraphOutput {
    ad::Var value;     // batch x 1
    ad::Var penalty;   // 1 x 1, already scaled by lambda
    ad::Var residual;  // 1 x 1, unscaled mean violation
  };
  /// Differentiable forward on a batch (rows of X paired with rows of Y).
  GraphOutput forward(ad::Graph& g, const ad::Var& x, const ad::Var& y);

  /// Plain evaluation, computed term by term from the channel outputs.
  Eigen::VectorXd evaluate(const Matrix& x, const Matrix& y) const;
  double evaluate(std::span<const double> x, std::span<const double> y) const;

  /// Unscaled mean over rows of sum_i ReLU(v1_i - Cv_i) + sum_i ReLU(u2_i - Cu_i).
  double constraint_residual(const Matrix& x, const Matrix& y) const;
  /// lambda * constraint_residual.
  double penalty(const Matrix& x, const Matrix& y) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  void project_nonnegative();

 private:
  void check_batch(const Matrix& x, const Matrix& y) const;

  Index rank_ = 0;
  ConvexNet u_;
  ConvexNet v_;
  Parameter cv_;
  Parameter cu_;
  std::optional<Parameter> b_;
  double penalty_weight_ = 0.0;
};

struct SaddleReport {
  double convexity_violation = 0.0;  // max over segments of f(mid,y) - mean of endpoints
  double concavity_violation = 0.0;  // max over segments of mean of endpoints - f(x,mid)
  double sign_residual = 0.0;        // max single-constraint violation over the sample
  double mean_residual = 0.0;        // constraint_residual over the sample
  double tol = 0.0;
  bool passed = true;
};

/// Draws `n_sample` points (x,y) from X x Y, measures the sign-constraint
/// residual there, and runs midpoint checks for x -> f(x,y) (fixed y taken
/// from the sample) and y -> f(x,y) (fixed x taken from the sample) over
/// n_segments random segments each.
SaddleReport verify_saddle(const SaddleNet& net, const Box& x_box, const Box& y_box, Index n_segments, double tol,
                           Index n_sample = 10000, std::uint64_t seed = 0);

}  // namespace saddle
