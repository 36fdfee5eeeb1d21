#include "saddle/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace saddle::decomp {

namespace {

// Locates t in a uniform partition of `dom` into m cells: returns the cell
// index (clamped to the outer cells) and the local coordinate, which lies
// outside [0,1] only when t is outside the interval.
std::pair<int, double> locate(const Interval& dom, int m, double t) {
  const double s = (t - dom.lo) / dom.width() * m;
  int k = static_cast<int>(std::floor(s));
  k = std::clamp(k, 0, m - 1);
  return {k, s - k};
}

PiecewiseLinear make_pl(const Interval& dom, const Eigen::VectorXd& v) {
  return PiecewiseLinear{dom, std::vector<double>(v.data(), v.data() + v.size())};
}

PiecewiseLinear negated(PiecewiseLinear p) {
  for (double& v : p.nodes) v = -v;
  return p;
}

double second_diff(double prev, double mid, double next) { return next + prev - 2.0 * mid; }

}  // namespace

void GridSamples::validate() const {
  if (m < 1) throw InputError("grid: m must be >= 1 (got " + std::to_string(m) + ")");
  if (A.rows() != m + 1 || A.cols() != m + 1) {
    throw InputError("grid: expected " + std::to_string(m + 1) + "x" + std::to_string(m + 1) + " values, got " +
                     std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
  }
  if (!(x.hi > x.lo) || !(y.hi > y.lo) || !std::isfinite(x.lo) || !std::isfinite(x.hi) || !std::isfinite(y.lo) ||
      !std::isfinite(y.hi)) {
    throw InputError("grid: intervals must be finite and nondegenerate");
  }
  for (int i = 0; i <= m; ++i) {
    for (int j = 0; j <= m; ++j) {
      if (!std::isfinite(A(i, j))) {
        throw InputError("grid: non-finite entry at node (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  }
}

double PiecewiseLinear::operator()(double t) const {
  if (nodes.empty()) return 0.0;
  const int m = static_cast<int>(nodes.size()) - 1;
  if (m == 0) return nodes[0];
  auto [k, frac] = locate(domain, m, t);
  const std::size_t ku = static_cast<std::size_t>(k);
  return nodes[ku] + frac * (nodes[ku + 1] - nodes[ku]);
}

double LiftedSaddleFunction::operator()(double xv, double yv) const {
  double s = 0.0;
  for (const Term& t : terms) s += t.x_factor(xv) * t.y_factor(yv);
  return s + x_marginal(xv) + y_marginal(yv);
}

double default_tolerance(const GridSamples& grid) {
  return 1e-9 * (grid.A.cwiseAbs().maxCoeff() + 1.0);
}

GridSamples sample_grid(const std::function<double(double, double)>& f, int m, Interval x, Interval y) {
  if (m < 1) throw InputError("sample_grid: m must be >= 1");
  if (!(x.hi > x.lo) || !(y.hi > y.lo)) throw InputError("sample_grid: intervals must be nondegenerate");
  GridSamples g;
  g.m = m;
  g.x = x;
  g.y = y;
  g.A.resize(m + 1, m + 1);
  for (int i = 0; i <= m; ++i) {
    for (int j = 0; j <= m; ++j) {
      const double xi = g.x_node(i);
      const double yj = g.y_node(j);
      const double v = f(xi, yj);
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "sample_grid: non-finite value at node (" << i << ", " << j << ") = (" << xi << ", " << yj << ")";
        throw InputError(os.str());
      }
      g.A(i, j) = v;
    }
  }
  return g;
}

MongeReport check_monge(const GridSamples& grid, double tol) {
  grid.validate();
  const int m = grid.m;
  if (m < 2) throw InputError("check_monge: m must be >= 2 to have interior nodes");
  if (tol < 0) tol = default_tolerance(grid);
  const GridMatrix& A = grid.A;
  MongeReport r;
  r.m = m;
  r.tol = tol;
  r.convexity_margin = std::numeric_limits<double>::infinity();
  r.concavity_margin = -std::numeric_limits<double>::infinity();
  for (int i = 1; i < m; ++i) {
    for (int j = 0; j <= m; ++j) {
      r.convexity_margin = std::min(r.convexity_margin, second_diff(A(i - 1, j), A(i, j), A(i + 1, j)));
    }
  }
  for (int i = 0; i <= m; ++i) {
    for (int j = 1; j < m; ++j) {
      r.concavity_margin = std::max(r.concavity_margin, second_diff(A(i, j - 1), A(i, j), A(i, j + 1)));
    }
  }
  // Columns of B_{is} = -D2y A_{is}, then their second differences in i.
  GridMatrix Bm(m + 1, m - 1);
  for (int i = 0; i <= m; ++i) {
    for (int s = 1; s < m; ++s) Bm(i, s - 1) = -second_diff(A(i, s - 1), A(i, s), A(i, s + 1));
  }
  r.mixed_margin = std::numeric_limits<double>::infinity();
  r.mixed_max = -std::numeric_limits<double>::infinity();
  for (int rr = 1; rr < m; ++rr) {
    for (int s = 1; s < m; ++s) {
      const double v = second_diff(Bm(rr - 1, s - 1), Bm(rr, s - 1), Bm(rr + 1, s - 1));
      r.mixed_margin = std::min(r.mixed_margin, v);
      r.mixed_max = std::max(r.mixed_max, v);
    }
  }
  r.convex_ok = r.convexity_margin >= -tol;
  r.concave_ok = r.concavity_margin <= tol;
  r.mixed_ok = r.mixed_margin >= -tol;
  r.reversed_mixed_ok = r.mixed_max <= tol;
  return r;
}

namespace {

std::string failure_list(const MongeReport& r, bool reversed) {
  std::string s;
  auto add = [&s](const char* what) { s += s.empty() ? what : std::string(", ") + what; };
  if (!r.convex_ok) add("convexity in x");
  if (!r.concave_ok) add("concavity in y");
  if (reversed ? !r.reversed_mixed_ok : !r.mixed_ok) add(reversed ? "reversed mixed condition" : "mixed condition");
  return s;
}

}  // namespace

SaddleDecomposition decompose_grid(const GridSamples& grid, double tol) {
  grid.validate();
  const int m = grid.m;
  if (m >= 2) {
    MongeReport rep = check_monge(grid, tol);
    if (!rep.forward_pass()) {
      throw AdmissibilityError("decompose_grid: grid is not admissible (" + failure_list(rep, false) + ")", rep);
    }
  }
  const GridMatrix& A = grid.A;
  SaddleDecomposition d;
  d.m = m;
  d.x = grid.x;
  d.y = grid.y;
  d.E0 = A.col(0);
  d.Em = A.col(m);
  d.B.resize(m + 1, std::max(m - 1, 0));
  for (int i = 0; i <= m; ++i) {
    for (int s = 1; s < m; ++s) d.B(i, s - 1) = -second_diff(A(i, s - 1), A(i, s), A(i, s + 1));
  }
  return d;
}

double tent_kernel(int m, int s, int j) {
  return static_cast<double>(std::min(j, s)) - static_cast<double>(j) * s / m;
}

double reconstruct_grid(const SaddleDecomposition& dec, int i, int j) {
  const int m = dec.m;
  if (i < 0 || i > m || j < 0 || j > m) {
    throw InputError("reconstruct_grid: index (" + std::to_string(i) + ", " + std::to_string(j) +
                     ") outside 0.." + std::to_string(m));
  }
  const double l0 = 1.0 - static_cast<double>(j) / m;
  const double lm = static_cast<double>(j) / m;
  double v = dec.E0(i) * l0 + dec.Em(i) * lm;
  for (int s = 1; s < m; ++s) v += dec.B(i, s - 1) * tent_kernel(m, s, j);
  return v;
}

LiftedSaddleFunction lift(const SaddleDecomposition& dec) {
  const int m = dec.m;
  LiftedSaddleFunction f;
  f.orientation = Orientation::Forward;
  f.x = dec.x;
  f.y = dec.y;
  f.C0 = std::max(0.0, -dec.E0.minCoeff());
  f.Cm = std::max(0.0, -dec.Em.minCoeff());

  Eigen::VectorXd l0(m + 1), lm(m + 1), g(m + 1);
  for (int j = 0; j <= m; ++j) {
    l0(j) = 1.0 - static_cast<double>(j) / m;
    lm(j) = static_cast<double>(j) / m;
    g(j) = -f.C0 * l0(j) - f.Cm * lm(j);
  }
  f.terms.push_back({make_pl(dec.x, (dec.E0.array() + f.C0).matrix()), make_pl(dec.y, l0)});
  f.terms.push_back({make_pl(dec.x, (dec.Em.array() + f.Cm).matrix()), make_pl(dec.y, lm)});
  for (int s = 1; s < m; ++s) {
    Eigen::VectorXd k(m + 1);
    for (int j = 0; j <= m; ++j) k(j) = tent_kernel(m, s, j);
    f.terms.push_back({make_pl(dec.x, dec.B.col(s - 1)), make_pl(dec.y, k)});
  }
  f.y_marginal = make_pl(dec.y, g);
  return f;
}

GridSamples reversed_grid(const GridSamples& grid) {
  GridSamples r;
  r.m = grid.m;
  r.A = -grid.A.transpose();
  r.x = grid.y;
  r.y = grid.x;
  return r;
}

LiftedSaddleFunction decompose_reversed(const GridSamples& grid, double tol) {
  grid.validate();
  if (tol < 0) tol = default_tolerance(grid);
  if (grid.m >= 2) {
    MongeReport rep = check_monge(grid, tol);
    if (!rep.reversed_pass()) {
      throw AdmissibilityError("decompose_reversed: grid is not admissible (" + failure_list(rep, true) + ")", rep);
    }
  }
  const LiftedSaddleFunction F = lift(decompose_grid(reversed_grid(grid), tol));
  LiftedSaddleFunction f;
  f.orientation = Orientation::Reversed;
  f.x = grid.x;
  f.y = grid.y;
  f.C0 = F.C0;
  f.Cm = F.Cm;
  for (const auto& t : F.terms) f.terms.push_back({negated(t.y_factor), t.x_factor});
  f.x_marginal = negated(F.y_marginal);
  return f;
}

double bilinear_interpolant(const GridSamples& grid, double x, double y) {
  const int m = grid.m;
  auto [k, tx] = locate(grid.x, m, x);
  auto [l, ty] = locate(grid.y, m, y);
  const auto& A = grid.A;
  return (1 - tx) * (1 - ty) * A(k, l) + tx * (1 - ty) * A(k + 1, l) + (1 - tx) * ty * A(k, l + 1) +
         tx * ty * A(k + 1, l + 1);
}

double lifted_sup_error(const LiftedSaddleFunction& fm, const std::function<double(double, double)>& f, int n) {
  if (n < 2) throw InputError("lifted_sup_error: need at least 2 probe points per axis");
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const double xv = fm.x.lo + i * fm.x.width() / (n - 1);
    for (int j = 0; j < n; ++j) {
      const double yv = fm.y.lo + j * fm.y.width() / (n - 1);
      worst = std::max(worst, std::abs(fm(xv, yv) - f(xv, yv)));
    }
  }
  return worst;
}

double sup_error_bound(double lipschitz, int m, Interval x, Interval y) {
  const double h = std::max(x.width(), y.width()) / m;
  return lipschitz * std::sqrt(2.0) * h;
}

}  // namespace saddle::decomp
