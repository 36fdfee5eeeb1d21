#include "saddle/decomposition.hpp"
#include "saddle/grid_io.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include <cmath>
#include <sstream>

using namespace saddle;
using namespace saddle::decomp;

namespace {

const Interval kUnit{0.0, 1.0};
const Interval kSym{-1.0, 1.0};

double saddle1(double x, double y) { return x * x - y * y + x * y; }

double max_nodal_error(const GridSamples& g, const LiftedSaddleFunction& f) {
  double e = 0.0;
  for (int i = 0; i <= g.m; ++i)
    for (int j = 0; j <= g.m; ++j) e = std::max(e, std::abs(f(g.x_node(i), g.y_node(j)) - g.A(i, j)));
  return e;
}

double second_difference_min(const std::vector<double>& v) {
  double m = INFINITY;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) m = std::min(m, v[i + 1] + v[i - 1] - 2 * v[i]);
  return m;
}

}  // namespace

TEST_CASE("sample_grid examples") {
  const GridSamples z = sample_grid([](double, double) { return 0.0; }, 2, kUnit, kUnit);
  CHECK(z.A.rows() == 3);
  CHECK(z.A.cols() == 3);
  CHECK(z.A.cwiseAbs().maxCoeff() == 0.0);

  const GridSamples x = sample_grid([](double xv, double) { return xv; }, 2, kUnit, kUnit);
  for (int j = 0; j <= 2; ++j) {
    CHECK(x.A(0, j) == 0.0);
    CHECK(x.A(1, j) == 0.5);
    CHECK(x.A(2, j) == 1.0);
  }
  const GridSamples s = sample_grid(saddle1, 2, kUnit, kUnit);
  CHECK(s.A(1, 1) == doctest::Approx(0.25).epsilon(1e-15));

  try {
    (void)sample_grid([](double xv, double yv) { return xv == 0.5 && yv == 1.0 ? NAN : 0.0; }, 2, kUnit, kUnit);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("(1, 2)") != std::string::npos);
  }
  CHECK_THROWS_AS((void)sample_grid(saddle1, 0, kUnit, kUnit), InputError);
  CHECK_THROWS_AS((void)sample_grid(saddle1, 2, Interval{1.0, 1.0}, kUnit), InputError);
}

TEST_CASE("check_monge examples") {
  for (int m : {2, 3, 8, 17, 32}) {
    const MongeReport r = check_monge(sample_grid(saddle1, m, kSym, kSym));
    CAPTURE(m);
    CHECK(r.forward_pass());
    CHECK(std::abs(r.mixed_margin) <= 1e-13);
  }
  CHECK(check_monge(sample_grid(saddle1, 32, kSym, kSym)).mixed_margin == 0.0);

  const MongeReport bad = check_monge(sample_grid([](double x, double y) { return x * x * y * y; }, 8, kSym, kSym));
  CHECK(bad.convex_ok);
  CHECK_FALSE(bad.concave_ok);
  CHECK_FALSE(bad.forward_pass());

  const MongeReport zero = check_monge(sample_grid([](double, double) { return 0.0; }, 4, kUnit, kUnit));
  CHECK(zero.convexity_margin == 0.0);
  CHECK(zero.concavity_margin == 0.0);
  CHECK(zero.mixed_margin == 0.0);
  CHECK(zero.forward_pass());
  CHECK(zero.reversed_pass());

  CHECK_THROWS_AS((void)check_monge(sample_grid(saddle1, 1, kUnit, kUnit)), InputError);
}

TEST_CASE("decompose_grid examples") {
  const SaddleDecomposition z = decompose_grid(sample_grid([](double, double) { return 0.0; }, 4, kUnit, kUnit));
  CHECK(z.E0.cwiseAbs().maxCoeff() == 0.0);
  CHECK(z.Em.cwiseAbs().maxCoeff() == 0.0);
  CHECK(z.B.cwiseAbs().maxCoeff() == 0.0);
  CHECK(reconstruct_grid(z, 2, 3) == 0.0);

  // -y^2, m = 2: D2y A(i,1) = -1 + 0 - 2(-0.25) = -0.5, so B_1(i) = 0.5; E0 = 0, Em = -1.
  const GridSamples ny = sample_grid([](double, double y) { return -y * y; }, 2, kUnit, kUnit);
  const SaddleDecomposition d = decompose_grid(ny);
  REQUIRE(d.B.cols() == 1);
  for (int i = 0; i <= 2; ++i) {
    CHECK(d.B(i, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(d.E0(i) == 0.0);
    CHECK(d.Em(i) == -1.0);
    CHECK(reconstruct_grid(d, i, 1) == doctest::Approx(-0.25).epsilon(1e-15));
  }

  const SaddleDecomposition xd = decompose_grid(sample_grid([](double x, double) { return x; }, 2, kUnit, kUnit));
  for (int i = 0; i <= 2; ++i) {
    CHECK(xd.E0(i) == doctest::Approx(0.5 * i));
    CHECK(xd.Em(i) == doctest::Approx(0.5 * i));
  }
  CHECK(xd.B.cwiseAbs().maxCoeff() <= 1e-15);

  CHECK_THROWS_AS((void)reconstruct_grid(d, 3, 0), InputError);
  CHECK_THROWS_AS((void)reconstruct_grid(d, 0, -1), InputError);
}

TEST_CASE("inadmissible grids carry the report") {
  const GridSamples g = sample_grid([](double x, double y) { return x * x * y * y; }, 8, kSym, kSym);
  try {
    (void)decompose_grid(g);
    FAIL("expected AdmissibilityError");
  } catch (const AdmissibilityError& e) {
    CHECK_FALSE(e.report().concave_ok);
    CHECK(std::string(e.what()).find("concavity") != std::string::npos);
  }
}

TEST_CASE("tent kernel second differences are minus the indicator") {
  for (int m = 2; m <= 64; ++m) {
    for (int s = 1; s < m; ++s) {
      CHECK(tent_kernel(m, s, 0) == 0.0);
      CHECK(std::abs(tent_kernel(m, s, m)) <= 1e-12);
      for (int j = 1; j < m; ++j) {
        const double d2 = tent_kernel(m, s, j + 1) + tent_kernel(m, s, j - 1) - 2 * tent_kernel(m, s, j);
        if (std::abs(d2 - (j == s ? -1.0 : 0.0)) > 1e-12) {
          CAPTURE(m);
          CAPTURE(s);
          CAPTURE(j);
          FAIL("second difference of K_s");
        }
      }
    }
  }
}

TEST_CASE("decomposition factors are nonnegative and discretely convex") {
  auto f = [](double x, double y) { return std::exp(x) * (2.0 - y * y) + x * y - std::log1p(y * y + 1.0); };
  // exp(x)(2 - y^2): convex in x, concave in y, mixed D2x(-D2y) = 2 exp(x) > 0.
  const GridSamples g = sample_grid(f, 24, kSym, kSym);
  REQUIRE(check_monge(g).forward_pass());
  const SaddleDecomposition d = decompose_grid(g);
  CHECK(d.B.minCoeff() >= -1e-12);
  const double scale = std::max(1.0, g.A.cwiseAbs().maxCoeff());
  CHECK(second_difference_min({d.E0.data(), d.E0.data() + d.E0.size()}) >= -1e-12 * scale);
  CHECK(second_difference_min({d.Em.data(), d.Em.data() + d.Em.size()}) >= -1e-12 * scale);
  for (Eigen::Index s = 0; s < d.B.cols(); ++s) {
    std::vector<double> col(static_cast<std::size_t>(d.B.rows()));
    for (Eigen::Index i = 0; i < d.B.rows(); ++i) col[static_cast<std::size_t>(i)] = d.B(i, s);
    CHECK(second_difference_min(col) >= -1e-12 * scale);
  }
  double worst = 0.0;
  for (int i = 0; i <= g.m; ++i)
    for (int j = 0; j <= g.m; ++j) worst = std::max(worst, std::abs(reconstruct_grid(d, i, j) - g.A(i, j)));
  CHECK(worst / scale <= 1e-12);

  const LiftedSaddleFunction fm = lift(d);
  CHECK(fm.C0 >= 0.0);
  CHECK(fm.Cm >= 0.0);
  for (const auto& t : fm.terms) {
    CHECK(*std::min_element(t.x_factor.nodes.begin(), t.x_factor.nodes.end()) >= -1e-12 * scale);
    CHECK(*std::min_element(t.y_factor.nodes.begin(), t.y_factor.nodes.end()) >= -1e-12);
    CHECK(second_difference_min(t.x_factor.nodes) >= -1e-12 * scale);
    std::vector<double> neg(t.y_factor.nodes);
    for (double& v : neg) v = -v;
    CHECK(second_difference_min(neg) >= -1e-12);
  }
  CHECK(max_nodal_error(g, fm) / scale <= 1e-12);
}

TEST_CASE("lift examples") {
  const LiftedSaddleFunction z = lift(decompose_grid(sample_grid([](double, double) { return 0.0; }, 3, kUnit, kUnit)));
  CHECK(z.C0 == 0.0);
  CHECK(z.Cm == 0.0);
  Rng rng(1);
  for (int k = 0; k < 50; ++k) {
    const double x = rng.uniform(), y = rng.uniform();
    CHECK(z(x, y) == 0.0);
    CHECK(z.y_marginal(y) == 0.0);
  }

  const LiftedSaddleFunction ny = lift(decompose_grid(sample_grid([](double, double y) { return -y * y; }, 2, kUnit, kUnit)));
  for (int k = 0; k < 50; ++k) CHECK(ny(rng.uniform(), 0.5) == doctest::Approx(-0.25).epsilon(1e-15));
  CHECK(ny.Cm == 1.0);

  const LiftedSaddleFunction lx = lift(decompose_grid(sample_grid([](double x, double) { return x; }, 2, kUnit, kUnit)));
  CHECK(lx.C0 == 0.0);
  for (int k = 0; k < 50; ++k) {
    const double x = rng.uniform(), y = rng.uniform();
    CHECK(lx(x, y) == doctest::Approx(x).epsilon(1e-14));
  }
}

TEST_CASE("lifted function is the bilinear interpolant of the nodes") {
  const GridSamples xy = sample_grid([](double x, double y) { return x * y; }, 1, kUnit, kUnit);
  CHECK(bilinear_interpolant(xy, 0.5, 0.5) == 0.25);

  const GridSamples g = sample_grid(saddle1, 8, Interval{-2.0, 1.0}, Interval{0.5, 3.0});
  const LiftedSaddleFunction fm = lift(decompose_grid(g));
  CHECK(max_nodal_error(g, fm) <= 1e-12);
  Rng rng(2);
  for (int k = 0; k < 2000; ++k) {
    const double x = rng.uniform(-2.0, 1.0), y = rng.uniform(0.5, 3.0);
    CHECK(fm(x, y) == doctest::Approx(bilinear_interpolant(g, x, y)).epsilon(1e-12));
  }
  // Outside the domain the outer linear pieces are extended.
  PiecewiseLinear p{kUnit, {0.0, 1.0, 3.0}};
  CHECK(p(1.5) == doctest::Approx(5.0));
  CHECK(p(-0.5) == doctest::Approx(-1.0));
  CHECK(PiecewiseLinear{kUnit, {}}(0.3) == 0.0);
}

TEST_CASE("sup error of the lift on the unit square") {
  const double L = std::sqrt(10.0);  // max |grad f| of x^2 - y^2 + xy on [0,1]^2, at (1,1)
  double prev = INFINITY;
  for (int m : {4, 8, 16, 32}) {
    const LiftedSaddleFunction fm = lift(decompose_grid(sample_grid(saddle1, m, kUnit, kUnit)));
    const double err = lifted_sup_error(fm, saddle1, 401);
    CAPTURE(m);
    CHECK(err <= L * std::sqrt(2.0) / m);
    CHECK(sup_error_bound(L, m, kUnit, kUnit) == doctest::Approx(L * std::sqrt(2.0) / m));
    CHECK(err <= prev);
    prev = err;
  }
}

TEST_CASE("reversed form reconstructs f = (x^2 - 2) y^2") {
  auto f = [](double x, double y) { return (x * x - 2.0) * y * y; };
  const GridSamples g = sample_grid(f, 16, kUnit, kUnit);
  const MongeReport r = check_monge(g);
  CHECK(r.convex_ok);
  CHECK(r.concave_ok);
  CHECK(r.mixed_max < 0.0);
  CHECK_FALSE(r.forward_pass());
  CHECK(r.reversed_pass());
  CHECK_THROWS_AS((void)decompose_grid(g), AdmissibilityError);

  const LiftedSaddleFunction fr = decompose_reversed(g);
  CHECK(fr.orientation == Orientation::Reversed);
  CHECK(max_nodal_error(g, fr) / std::max(1.0, g.A.cwiseAbs().maxCoeff()) <= 1e-10);
  CHECK(fr.y_marginal.empty());
  for (const auto& t : fr.terms) {
    // x factors convex and <= 0 (negated concave >= 0), y factors convex and >= 0.
    CHECK(*std::max_element(t.x_factor.nodes.begin(), t.x_factor.nodes.end()) <= 1e-12);
    CHECK(second_difference_min(t.x_factor.nodes) >= -1e-12);
    CHECK(*std::min_element(t.y_factor.nodes.begin(), t.y_factor.nodes.end()) >= -1e-12);
    CHECK(second_difference_min(t.y_factor.nodes) >= -1e-12);
  }
  CHECK(second_difference_min(fr.x_marginal.nodes) >= -1e-12);

  // Definitional cross-check: f(x, y) = -F(y, x) with F the forward lift of -A^T.
  const LiftedSaddleFunction F = lift(decompose_grid(reversed_grid(g)));
  Rng rng(4);
  for (int k = 0; k < 500; ++k) {
    const double x = rng.uniform(), y = rng.uniform();
    CHECK(std::abs(fr(x, y) + F(y, x)) <= 1e-12);
  }
}

TEST_CASE("reversed check rejects a forward-only grid") {
  const GridSamples g = sample_grid([](double x, double y) { return x * x * (2.0 - y * y); }, 8, kSym, kSym);
  CHECK(check_monge(g).forward_pass());
  CHECK_FALSE(check_monge(g).reversed_pass());
  CHECK_THROWS_AS((void)decompose_reversed(g), AdmissibilityError);
  const LiftedSaddleFunction z = decompose_reversed(sample_grid([](double, double) { return 0.0; }, 4, kUnit, kUnit));
  CHECK(z(0.3, 0.7) == 0.0);
}

TEST_CASE("grid CSV round trip and diagnostics") {
  const GridSamples g = sample_grid(saddle1, 5, Interval{-1.0, 2.0}, Interval{0.25, 0.75});
  std::stringstream ss;
  write_grid_csv(ss, g);
  const GridSamples back = read_grid_csv(ss);
  CHECK(back.m == 5);
  CHECK(back.x.lo == -1.0);
  CHECK(back.y.hi == 0.75);
  CHECK((back.A - g.A).cwiseAbs().maxCoeff() == 0.0);

  std::istringstream no_header("# comment\n1,0,1,0,1\n0,1\n\n2,3\n");
  const GridSamples small = read_grid_csv(no_header);
  CHECK(small.A(1, 0) == 2.0);

  auto error_of = [](const std::string& text) {
    std::istringstream is(text);
    try {
      (void)read_grid_csv(is, "g.csv");
    } catch (const InputError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(error_of("m,x_lo,x_hi,y_lo,y_hi\n1,0,1,0,1\n0,1\n2,abc\n").find("g.csv:4:") == 0);
  CHECK(error_of("1,0,1,0,1\n0,1\n2\n").find("g.csv:3:") == 0);
  CHECK(error_of("1,0,1,0,1\n0,1\n").find("g.csv") == 0);
  CHECK(error_of("1,0,1,0\n0,1\n2,3\n").find("g.csv:1:") == 0);
  CHECK(error_of("1,1,0,0,1\n0,1\n2,3\n") != "no error");
  CHECK(error_of("").find("empty") != std::string::npos);
  CHECK_THROWS_AS((void)read_grid_csv_file("/nonexistent/grid.csv"), InputError);
}

TEST_CASE("decomposition JSON fields") {
  const GridSamples g = sample_grid([](double, double y) { return -y * y; }, 2, kUnit, kUnit);
  const SaddleDecomposition d = decompose_grid(g);
  const nlohmann::json j = to_json(d, lift(d));
  CHECK(j["m"] == 2);
  CHECK(j["E0"].size() == 3);
  CHECK(j["B"].size() == 3);
  CHECK(j["B_shape"][1] == 1);
  CHECK(j["Cm"].get<double>() == 1.0);
  CHECK(j["domain"]["x"][1].get<double>() == 1.0);
  const nlohmann::json r = to_json(check_monge(sample_grid(saddle1, 4, kUnit, kUnit)));
  CHECK(r.contains("mixed_margin"));
  CHECK(r["forward_pass"] == true);
}
