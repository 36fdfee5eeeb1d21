#include "saddle/saddle_net.hpp"

#include "saddle/errors.hpp"

#include <algorithm>
#include <cmath>

namespace saddle {

SaddleNet SaddleNet::create(Index dim, Index rank, const SaddleArchitecture& arch, bool bilinear,
                            double penalty_weight, Rng& rng) {
  if (rank <= 0) throw InputError("saddle net: rank N must be positive");
  const Index width = 2 * rank + 1;
  ConvexNet u, v;
  if (arch.primitive == Primitive::Icnn) {
    u = ConvexNet::icnn(dim, width, arch.icnn, rng, "u");
    v = ConvexNet::icnn(dim, width, arch.icnn, rng, "v");
  } else {
    u = ConvexNet::max_affine(dim, width, arch.max_affine, rng, "u");
    v = ConvexNet::max_affine(dim, width, arch.max_affine, rng, "v");
  }
  std::optional<Matrix> b;
  if (bilinear) b = Matrix::Zero(dim, dim);
  return from_parts(rank, std::move(u), std::move(v), Matrix::Ones(1, rank), Matrix::Ones(1, rank), std::move(b),
                    penalty_weight);
}

SaddleNet SaddleNet::from_parts(Index rank, ConvexNet u, ConvexNet v, Matrix cv, Matrix cu, std::optional<Matrix> b,
                                double penalty_weight) {
  if (rank <= 0) throw InputError("saddle net: rank N must be positive");
  if (u.output_dim() != 2 * rank + 1 || v.output_dim() != 2 * rank + 1) {
    throw ShapeError("saddle net: u and v must have 2N+1 = " + std::to_string(2 * rank + 1) + " outputs");
  }
  if (u.input_dim() != v.input_dim()) throw ShapeError("saddle net: u and v input dimensions differ");
  if (cv.rows() != 1 || cv.cols() != rank || cu.rows() != 1 || cu.cols() != rank) {
    throw ShapeError("saddle net: shifts must be 1 x N");
  }
  SaddleNet net;
  net.rank_ = rank;
  net.u_ = std::move(u);
  net.v_ = std::move(v);
  net.cv_ = Parameter("Cv", std::move(cv));
  net.cu_ = Parameter("Cu", std::move(cu));
  if (b) {
    if (b->rows() != net.dim() || b->cols() != net.dim()) throw ShapeError("saddle net: B must be d x d");
    net.b_ = Parameter("B", std::move(*b));
  }
  net.set_penalty_weight(penalty_weight);
  return net;
}

void SaddleNet::set_penalty_weight(double w) {
  if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("saddle net: penalty weight must be finite and >= 0");
  penalty_weight_ = w;
}

void SaddleNet::check_batch(const Matrix& x, const Matrix& y) const {
  if (x.cols() != dim() || y.cols() != dim()) {
    throw ShapeError("saddle net: inputs must have " + std::to_string(dim()) + " columns (got " +
                     std::to_string(x.cols()) + " and " + std::to_string(y.cols()) + ")");
  }
  if (x.rows() != y.rows()) throw ShapeError("saddle net: x and y batches differ in length");
}

namespace {

// Fused product-term block. Column 0 of the result is
//   sum_i ReLU(u1_i)(Cv_i - v1_i) + sum_i (u2_i - Cu_i) ReLU(v2_i) + H - Graw,
// column 1 the per-row violation sum_i ReLU(v1_i - Cv_i) + ReLU(u2_i - Cu_i).
// The ReLU derivative at 0 is taken as 0.
ad::Var saddle_block(ad::Graph& g, const ad::Var& U, const ad::Var& V, const ad::Var& Cv, const ad::Var& Cu,
                     Index n) {
  const Matrix& u = U.value();
  const Matrix& v = V.value();
  const Matrix& cv = Cv.value();
  const Matrix& cu = Cu.value();
  const Index rows = u.rows();
  Matrix out(rows, 2);
  for (Index r = 0; r < rows; ++r) {
    double f = 0.0, viol = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double u1 = u(r, i), v1 = v(r, i), u2 = u(r, n + i), v2 = v(r, n + i);
      f += std::max(u1, 0.0) * (cv(0, i) - v1) + (u2 - cu(0, i)) * std::max(v2, 0.0);
      viol += std::max(v1 - cv(0, i), 0.0) + std::max(u2 - cu(0, i), 0.0);
    }
    out(r, 0) = f + u(r, 2 * n) - v(r, 2 * n);
    out(r, 1) = viol;
  }
  auto backward = [n](const Matrix& grad, const std::vector<const Matrix*>& in) {
    const Matrix& u = *in[0];
    const Matrix& v = *in[1];
    const Matrix& cv = *in[2];
    const Matrix& cu = *in[3];
    const Index rows = u.rows();
    Matrix gu(rows, u.cols()), gv(rows, v.cols());
    Matrix gcv = Matrix::Zero(1, n), gcu = Matrix::Zero(1, n);
    for (Index r = 0; r < rows; ++r) {
      const double gf = grad(r, 0), gs = grad(r, 1);
      for (Index i = 0; i < n; ++i) {
        const double u1 = u(r, i), v1 = v(r, i), u2 = u(r, n + i), v2 = v(r, n + i);
        const double a = std::max(u1, 0.0);
        const double c = cv(0, i) - v1;
        const double rv2 = std::max(v2, 0.0);
        const double s1 = v1 > cv(0, i) ? gs : 0.0;
        const double s2 = u2 > cu(0, i) ? gs : 0.0;
        gu(r, i) = u1 > 0.0 ? gf * c : 0.0;
        gv(r, i) = -gf * a + s1;
        gcv(0, i) += gf * a - s1;
        gu(r, n + i) = gf * rv2 + s2;
        gv(r, n + i) = v2 > 0.0 ? gf * (u2 - cu(0, i)) : 0.0;
        gcu(0, i) -= gf * rv2 + s2;
      }
      gu(r, 2 * n) = gf;
      gv(r, 2 * n) = -gf;
    }
    return std::vector<Matrix>{std::move(gu), std::move(gv), std::move(gcv), std::move(gcu)};
  };
  return g.push_custom({U, V, Cv, Cu}, std::move(out), backward);
}

}  // namespace

SaddleNet::GraphOutput SaddleNet::forward(ad::Graph& g, const ad::Var& x, const ad::Var& y) {
  if (x.cols() != dim() || y.cols() != dim() || x.rows() != y.rows()) {
    check_batch(x.value(), y.value());
  }
  ad::Var U = u_.forward(g, x);
  ad::Var V = v_.forward(g, y);
  ad::Var block = saddle_block(g, U, V, g.parameter(cv_), g.parameter(cu_), rank_);
  ad::Var value = ad::cols(block, 0, 1);
  if (b_) value = value + ad::row_sum(ad::matmul(x, g.parameter(*b_)) * y);
  ad::Var residual = ad::mean(ad::cols(block, 1, 1));
  ad::Var pen = ad::scale(residual, penalty_weight_);
  return {value, pen, residual};
}

Eigen::VectorXd SaddleNet::evaluate(const Matrix& x, const Matrix& y) const {
  check_batch(x, y);
  const Matrix U = u_.evaluate(x);
  const Matrix V = v_.evaluate(y);
  const Index n = rank_;
  const auto& cv = cv_.value();
  const auto& cu = cu_.value();
  Eigen::VectorXd out(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    double f = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double e_plus = std::max(U(r, i), 0.0);       // convex >= 0 in x
      const double a_concave = cv(0, i) - V(r, i);        // concave >= 0 in y
      const double e_minus = U(r, n + i) - cu(0, i);      // convex <= 0 in x
      const double a_convex = std::max(V(r, n + i), 0.0); // convex >= 0 in y
      f += e_plus * a_concave + e_minus * a_convex;
    }
    f += U(r, 2 * n) - V(r, 2 * n);
    if (b_) {
      const auto& B = b_->value();
      for (Index k = 0; k < B.rows(); ++k) {
        for (Index l = 0; l < B.cols(); ++l) f += x(r, k) * B(k, l) * y(r, l);
      }
    }
    out(r) = f;
  }
  return out;
}

double SaddleNet::evaluate(std::span<const double> x, std::span<const double> y) const {
  Matrix X(1, dim()), Y(1, dim());
  if (static_cast<Index>(x.size()) != dim() || static_cast<Index>(y.size()) != dim()) {
    throw ShapeError("saddle net: point dimension mismatch");
  }
  for (Index k = 0; k < dim(); ++k) {
    X(0, k) = x[static_cast<std::size_t>(k)];
    Y(0, k) = y[static_cast<std::size_t>(k)];
  }
  return evaluate(X, Y)(0);
}

double SaddleNet::constraint_residual(const Matrix& x, const Matrix& y) const {
  check_batch(x, y);
  if (x.rows() == 0) return 0.0;
  const Matrix U = u_.evaluate(x);
  const Matrix V = v_.evaluate(y);
  const Index n = rank_;
  double total = 0.0;
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index i = 0; i < n; ++i) {
      total += std::max(V(r, i) - cv_.value()(0, i), 0.0);
      total += std::max(U(r, n + i) - cu_.value()(0, i), 0.0);
    }
  }
  return total / static_cast<double>(x.rows());
}

double SaddleNet::penalty(const Matrix& x, const Matrix& y) const {
  return penalty_weight_ * constraint_residual(x, y);
}

std::vector<Parameter*> SaddleNet::parameters() {
  std::vector<Parameter*> out = u_.parameters();
  for (Parameter* p : v_.parameters()) out.push_back(p);
  out.push_back(&cv_);
  out.push_back(&cu_);
  if (b_) out.push_back(&*b_);
  return out;
}

std::vector<const Parameter*> SaddleNet::parameters() const {
  auto ps = const_cast<SaddleNet*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

void SaddleNet::project_nonnegative() {
  u_.project_nonnegative();
  v_.project_nonnegative();
}

SaddleReport verify_saddle(const SaddleNet& net, const Box& x_box, const Box& y_box, Index n_segments, double tol,
                           Index n_sample, std::uint64_t seed) {
  x_box.validate();
  y_box.validate();
  const Index d = net.dim();
  if (static_cast<Index>(x_box.dim()) != d || static_cast<Index>(y_box.dim()) != d) {
    throw ShapeError("verify_saddle: box dimension mismatch");
  }
  if (n_sample <= 0) throw InputError("verify_saddle: sample size must be positive");
  Rng rng(derive_seed(seed, streams::kVerify));
  SaddleReport rep;
  rep.tol = tol;

  Matrix sx(n_sample, d), sy(n_sample, d);
  for (Index i = 0; i < n_sample; ++i) {
    x_box.sample_into(rng, sx, i);
    y_box.sample_into(rng, sy, i);
  }
  {
    const Matrix U = net.u().evaluate(sx);
    const Matrix V = net.v().evaluate(sy);
    const Index n = net.rank();
    for (Index r = 0; r < n_sample; ++r) {
      for (Index i = 0; i < n; ++i) {
        rep.sign_residual = std::max(rep.sign_residual, V(r, i) - net.cv().value()(0, i));
        rep.sign_residual = std::max(rep.sign_residual, U(r, n + i) - net.cu().value()(0, i));
      }
    }
    rep.mean_residual = net.constraint_residual(sx, sy);
  }

  constexpr Index kChunk = 4096;
  for (Index done = 0; done < n_segments; done += kChunk) {
    const Index n = std::min(kChunk, n_segments - done);
    Matrix a(n, d), b(n, d), fixed_y(n, d), fixed_x(n, d), c(n, d), e(n, d);
    for (Index i = 0; i < n; ++i) {
      const Index pick = static_cast<Index>(rng.next() % static_cast<std::uint64_t>(n_sample));
      fixed_y.row(i) = sy.row(pick);
      fixed_x.row(i) = sx.row(pick);
      x_box.sample_into(rng, a, i);
      x_box.sample_into(rng, b, i);
      y_box.sample_into(rng, c, i);
      y_box.sample_into(rng, e, i);
    }
    const Matrix mx = 0.5 * (a + b);
    const Matrix my = 0.5 * (c + e);
    const Eigen::VectorXd fa = net.evaluate(a, fixed_y), fb = net.evaluate(b, fixed_y), fm = net.evaluate(mx, fixed_y);
    const Eigen::VectorXd gc = net.evaluate(fixed_x, c), ge = net.evaluate(fixed_x, e), gm = net.evaluate(fixed_x, my);
    for (Index i = 0; i < n; ++i) {
      rep.convexity_violation = std::max(rep.convexity_violation, fm(i) - 0.5 * (fa(i) + fb(i)));
      rep.concavity_violation = std::max(rep.concavity_violation, 0.5 * (gc(i) + ge(i)) - gm(i));
    }
  }
  rep.passed = rep.convexity_violation <= tol && rep.concavity_violation <= tol && rep.sign_residual <= tol;
  return rep;
}

}  // namespace saddle
