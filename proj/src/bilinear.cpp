#include "saddle/bilinear.hpp"

#include "saddle/errors.hpp"

#include <cmath>

namespace saddle {

const char* to_string(TermKind k) {
  return k == TermKind::ConvexPosConcavePos ? "convex+ concave+" : "convex- convex+";
}

double AffineMarginal::operator()(std::span<const double> z) const {
  double s = constant;
  for (Eigen::Index k = 0; k < coef.size(); ++k) s += coef(k) * z[static_cast<std::size_t>(k)];
  return s;
}

double BilinearDecomposition::operator()(std::span<const double> x, std::span<const double> y) const {
  double s = 0.0;
  for (const BilinearTerm& t : terms) s += t.x_factor(x) * t.y_factor(y);
  return s + x_marginal(x) + y_marginal(y);
}

BilinearDecomposition bilinear_to_saddle_terms(const Eigen::MatrixXd& B, const Box& x_box, const Box& y_box) {
  if (!x_box.bounded() || !y_box.bounded()) throw InputError("bilinear_to_saddle_terms: boxes must be bounded");
  x_box.validate();
  y_box.validate();
  const auto dx = static_cast<Eigen::Index>(x_box.dim());
  const auto dy = static_cast<Eigen::Index>(y_box.dim());
  if (B.rows() != dx || B.cols() != dy) {
    throw ShapeError("bilinear_to_saddle_terms: B is " + std::to_string(B.rows()) + "x" + std::to_string(B.cols()) +
                     " but the boxes have dimensions " + std::to_string(dx) + " and " + std::to_string(dy));
  }
  BilinearDecomposition out;
  out.x_marginal.coef = Eigen::VectorXd::Zero(dx);
  out.y_marginal.coef = Eigen::VectorXd::Zero(dy);
  for (Eigen::Index k = 0; k < dx; ++k) {
    const double beta = -x_box.lo[static_cast<std::size_t>(k)];
    for (Eigen::Index l = 0; l < dy; ++l) {
      const double b = B(k, l);
      if (!std::isfinite(b)) throw InputError("bilinear_to_saddle_terms: non-finite entry in B");
      if (b == 0.0) continue;
      const double alpha = -y_box.lo[static_cast<std::size_t>(l)];
      BilinearTerm t;
      t.kind = b > 0.0 ? TermKind::ConvexPosConcavePos : TermKind::ConvexNegConvexPos;
      t.x_index = k;
      t.y_index = l;
      t.weight = b;
      t.x_shift = beta;
      t.y_shift = alpha;
      out.terms.push_back(t);
      out.x_marginal.coef(k) -= b * alpha;
      out.y_marginal.coef(l) -= b * beta;
      out.x_marginal.constant -= b * alpha * beta;
    }
  }
  return out;
}

}  // namespace saddle
