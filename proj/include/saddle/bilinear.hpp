#pragma once

// Rewrites x^T B y on a compact box X x Y as saddle-class product terms plus
// affine marginals. With beta_k = -min X_k and alpha_l = -min Y_l,
//
//   B_kl x_k y_l = B_kl (x_k + beta_k)(y_l + alpha_l)
//                - B_kl alpha_l x_k - B_kl beta_k y_l - B_kl alpha_l beta_k,
//
// where both shifted factors are nonnegative on the box.

#include "saddle/box.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace saddle {

enum class TermKind {
  ConvexPosConcavePos,  // B_kl > 0: (convex >= 0 in x) * (concave >= 0 in y)
  ConvexNegConvexPos,   // B_kl < 0: (convex <= 0 in x) * (convex >= 0 in y)
};

const char* to_string(TermKind k);

struct BilinearTerm {
  TermKind kind = TermKind::ConvexPosConcavePos;
  Eigen::Index x_index = 0;
  Eigen::Index y_index = 0;
  double weight = 0.0;   // B_kl, carried by the x factor
  double x_shift = 0.0;  // beta_k
  double y_shift = 0.0;  // alpha_l

  double x_factor(std::span<const double> x) const {
    return weight * (x[static_cast<std::size_t>(x_index)] + x_shift);
  }
  double y_factor(std::span<const double> y) const { return y[static_cast<std::size_t>(y_index)] + y_shift; }
};

/// Affine function c^T z + constant.
struct AffineMarginal {
  Eigen::VectorXd coef;
  double constant = 0.0;

  double operator()(std::span<const double> z) const;
};

struct BilinearDecomposition {
  std::vector<BilinearTerm> terms;
  AffineMarginal x_marginal;  // carries the constant -sum B_kl alpha_l beta_k
  AffineMarginal y_marginal;

  double operator()(std::span<const double> x, std::span<const double> y) const;
};

/// Throws InputError for an unbounded or invalid box and ShapeError when B
/// does not match the box dimensions. Zero entries of B produce no term.
BilinearDecomposition bilinear_to_saddle_terms(const Eigen::MatrixXd& B, const Box& x_box, const Box& y_box);

}  // namespace saddle
