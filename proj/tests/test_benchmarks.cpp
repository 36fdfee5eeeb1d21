#include "saddle/benchmarks.hpp"
#include "saddle/errors.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include <cmath>

using namespace saddle;

namespace {

double at(const BenchmarkCase& c, double x, double y) {
  return c(std::span<const double>(&x, 1), std::span<const double>(&y, 1));
}

BatchModel offset_model(const BenchmarkCase& c, double offset) {
  return [&c, offset](const Matrix& X, const Matrix& Y) {
    Eigen::VectorXd v = c.evaluate(X, Y);
    return Eigen::VectorXd((v.array() + offset).matrix());
  };
}

const BatchModel kZero = [](const Matrix& X, const Matrix&) { return Eigen::VectorXd::Zero(X.rows()); };

}  // namespace

TEST_CASE("1D case values") {
  CHECK(at(make_case("1d/1"), 0.5, 0.5) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(at(make_case("1d/4"), -1.0, 1.0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(at(make_case("1d/6"), 0.1, 0.0) == doctest::Approx(0.01 / 0.6).epsilon(1e-12));
  CHECK(huber(0.1, 0.3) == doctest::Approx(0.016667).epsilon(1e-4));
  CHECK(huber(1.0, 0.3) == doctest::Approx(1.0 - 0.15));
}

TEST_CASE("catalog shape and errors") {
  CHECK(suite_size(Suite::D1) == 9);
  CHECK(suite_size(Suite::D5) == 8);
  CHECK(make_case(Suite::D1, 3).x_box.lo[0] == -3.0);
  CHECK(make_case(Suite::D5, 5).x_box.lo[4] == 0.1);
  CHECK(make_case(Suite::D5, 5).y_box.hi[0] == 0.9);
  CHECK(make_case("5d/2").dim == 5);
  CHECK(make_case("1d/7").interaction.R == 24);
  CHECK(make_case("1d/7").interaction.k == 6.0);
  CHECK(make_case("1d/8").interaction.R == 16);
  CHECK(make_case("1d/8").interaction.k == 2.0);
  CHECK(make_case("1d/9").interaction.R == 24);
  CHECK(make_case("5d/6").interaction.R == 4);
  try {
    (void)make_case(Suite::D1, 10);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("1..9") != std::string::npos);
  }
  CHECK_THROWS_AS((void)make_case("2d/1"), InputError);
  CHECK_THROWS_AS((void)make_case("1d/x"), InputError);
  CHECK_THROWS_AS((void)make_case("1d"), InputError);
  const nlohmann::json cat = catalog_json();
  REQUIRE(cat.size() == 17);
  CHECK(cat[0]["id"] == "1d/1");
  CHECK(cat[16]["id"] == "5d/8");
}

TEST_CASE("frozen parameter patterns") {
  const InteractionParams& p = make_case("1d/7").interaction;
  CHECK(p.u(0, 0) == doctest::Approx(0.9 * std::sin(2.3)));
  CHECK(p.v(2, 0) == doctest::Approx(0.9 * std::cos(1.7 * 3)));
  CHECK(p.b(1) == doctest::Approx(0.3 * std::sin(0.9 * 2)));
  CHECK(p.t(4) == doctest::Approx(0.3 * std::cos(1.3 * 5)));
  CHECK(p.C(0) == doctest::Approx(ad::softplus(6.0 * (std::abs(p.v(0, 0)) + std::abs(p.t(0)))) + 1e-2));
  const InteractionParams& q = make_case("5d/6").interaction;
  CHECK(q.u(1, 2) == doctest::Approx(0.9 / std::sqrt(5.0) * std::sin(2.3 * 2 + 1.1 * 3)));
  CHECK(q.v(3, 4) == doctest::Approx(0.9 / std::sqrt(5.0) * std::cos(1.7 * 4 + 0.7 * 5)));
  const BenchmarkCase c = make_case("5d/1");
  REQUIRE(c.B.has_value());
  CHECK((*c.B)(0, 0) == doctest::Approx(0.5 * std::sin(1.0 + 2.0) / 5.0));
  CHECK((*c.B)(2, 4) == doctest::Approx(0.5 * std::sin(3.0 + 10.0) / 5.0));
}

TEST_CASE("concave interaction factors stay above eps/2") {
  for (const char* id : {"1d/7", "1d/8", "1d/9", "5d/6", "5d/7", "5d/8"}) {
    CAPTURE(id);
    const BenchmarkCase c = make_case(id);
    const InteractionParams& p = c.interaction;
    Rng rng(9);
    double lo = INFINITY;
    std::vector<double> y(static_cast<std::size_t>(c.dim));
    for (int s = 0; s < 20000; ++s) {
      for (std::size_t k = 0; k < y.size(); ++k) y[k] = rng.uniform(c.y_box.lo[k], c.y_box.hi[k]);
      // Include the corners, where |v . y| peaks.
      if (s < 2) std::fill(y.begin(), y.end(), s == 0 ? c.y_box.lo[0] : c.y_box.hi[0]);
      for (int r = 0; r < p.R; ++r) lo = std::min(lo, p.y_factor(r, y));
    }
    CHECK(lo >= p.eps / 2);
  }
}

TEST_CASE("log barrier case") {
  const BenchmarkCase c = make_case("5d/5");
  Rng rng(3);
  Matrix X(1000, 5), Y(1000, 5);
  for (Eigen::Index i = 0; i < 1000; ++i) {
    c.x_box.sample_into(rng, X, i);
    c.y_box.sample_into(rng, Y, i);
  }
  CHECK(c.evaluate(X, Y).allFinite());
  std::vector<double> x(5, 0.5), y(5, 0.5);
  const double mid = c(x, y);
  x[0] = 1e-12;
  CHECK(c(x, y) > mid + 20.0);
  x[0] = 0.5;
  y[0] = 1e-12;
  CHECK(c(x, y) < mid - 20.0);
}

TEST_CASE("grid MSE examples") {
  const BenchmarkCase c = make_case("1d/1");
  const MseProtocol p = MseProtocol::for_case(c);
  CHECK(p.mode == MseMode::Grid);
  CHECK(eval_mse(offset_model(c, 0.0), c, p) == 0.0);
  CHECK(eval_mse(offset_model(c, 0.1), c, p) == doctest::Approx(0.01).epsilon(1e-12));

  // f^2 = x^4 + y^4 - x^2 y^2 + 2 x^3 y - 2 x y^3; the odd moments of the symmetric grid vanish,
  // so the grid mean of f^2 is 2 M4 - M2^2 with Mk the mean of t^k over the 200 nodes.
  long double m2 = 0, m4 = 0;
  for (int i = 0; i < 200; ++i) {
    const long double t = -1.0L + 2.0L * i / 199.0L;
    m2 += t * t;
    m4 += t * t * t * t;
  }
  m2 /= 200;
  m4 /= 200;
  const double expected = static_cast<double>(2 * m4 - m2 * m2);
  CHECK(eval_mse(kZero, c, p) == doctest::Approx(expected).epsilon(1e-12));

  const BatchModel nan_model = [](const Matrix& X, const Matrix&) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(X.rows());
    v(X.rows() / 2) = NAN;
    return v;
  };
  CHECK_THROWS_AS((void)eval_mse(nan_model, c, p), NumericalError);
  MseProtocol bad = p;
  bad.mode = MseMode::Grid;
  CHECK_THROWS_AS((void)eval_mse(kZero, make_case("5d/1"), bad), InputError);
}

TEST_CASE("Monte-Carlo MSE is seeded and its variance shrinks with the sample size") {
  const BenchmarkCase c = make_case("5d/1");
  MseProtocol p = MseProtocol::for_case(c, 10000, 5);
  CHECK(p.mode == MseMode::MonteCarlo);
  CHECK(eval_mse(kZero, c, p) == eval_mse(kZero, c, p));
  CHECK(eval_mse(offset_model(c, 0.0), c, p) == 0.0);
  auto variance = [&](long n) {
    std::vector<double> v;
    for (std::uint64_t s = 0; s < 24; ++s) v.push_back(eval_mse(kZero, c, MseProtocol::for_case(c, n, 100 + s)));
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double q = 0;
    for (double x : v) q += (x - m) * (x - m);
    return q / static_cast<double>(v.size() - 1);
  };
  const double ratio = variance(10000) / variance(100000);
  CHECK(ratio > 4.0);
  CHECK(ratio < 25.0);
}

TEST_CASE("every case is convex-concave on sampled segments") {
  for (Suite s : {Suite::D1, Suite::D5}) {
    for (const auto& c : make_suite(s)) {
      CAPTURE(c.id());
      const CaseAdmissibility a = verify_case_admissibility(c, 10000, 1e-9, 1);
      CHECK(a.convexity_margin >= -1e-9);
      CHECK(a.concavity_margin >= -1e-9);
      CHECK(a.passed);
      CHECK(a.monge.has_value() == (c.dim == 1));
    }
  }
}

TEST_CASE("Monge orientation of the 1D cases") {
  const CaseAdmissibility a1 = verify_case_admissibility(make_case("1d/1"));
  REQUIRE(a1.monge.has_value());
  CHECK(a1.monge->mixed_margin == 0.0);
  CHECK(a1.monge->forward_pass());
  for (int i = 1; i <= 9; ++i) {
    const BenchmarkCase c = make_case(Suite::D1, i);
    CAPTURE(c.id());
    const decomp::MongeReport r = decomp::check_monge(sample_case_grid(c, 32));
    CHECK(r.forward_pass());
    if (c.orientation == MongeOrientation::Both) CHECK(r.reversed_pass());
    if (i >= 7) {
      CHECK(c.orientation == MongeOrientation::Forward);
      CHECK(r.mixed_margin >= 0.0);
    }
  }
}

TEST_CASE("case JSON carries its parameters") {
  const nlohmann::json j = make_case("1d/8").to_json();
  CHECK(j["id"] == "1d/8");
  CHECK(j["dimension"] == 1);
  CHECK(j["monge_orientation"] == "forward");
  CHECK_FALSE(j["parameters"].empty());
}
