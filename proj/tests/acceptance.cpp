// Acceptance checks. Prints one PASS/FAIL line per criterion with the measured
// value and the pinned tolerance; exits nonzero if any criterion fails.
// Usage: acceptance [criterion numbers...]   (default: all)

#include "saddle/benchmarks.hpp"
#include "saddle/bilinear.hpp"
#include "saddle/decomposition.hpp"
#include "saddle/saddle_net.hpp"
#include "saddle/trainer.hpp"

#include "test_util.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>
#include <vector>

using namespace saddle;
using namespace saddle::decomp;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::function<double(double, double)> scalar_fn(const BenchmarkCase& c) {
  return [&c](double x, double y) { return c(std::span<const double>(&x, 1), std::span<const double>(&y, 1)); };
}

// 1. decompose_grid + reconstruct_grid reproduce every node, cases 1..9, m in {8,16,32}.
Outcome round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int i = 1; i <= 9; ++i) {
    const BenchmarkCase c = make_case(Suite::D1, i);
    for (int m : {8, 16, 32}) {
      const GridSamples g = sample_case_grid(c, m);
      const SaddleDecomposition d = decompose_grid(g);
      const double scale = std::max(1.0, g.A.cwiseAbs().maxCoeff());
      for (int a = 0; a <= m; ++a)
        for (int b = 0; b <= m; ++b) worst = std::max(worst, std::abs(reconstruct_grid(d, a, b) - g.A(a, b)) / scale);
    }
  }
  const double t = elapsed(t0);
  return {worst <= 1e-10 && t < 1.0,
          fmt("max relative nodal error %.3e (tol 1e-10), %.3f s (limit 1 s)", worst, t)};
}

// Max Euclidean gradient norm of the smooth cases, from their analytic gradients on a dense grid.
double lipschitz(int index) {
  const BenchmarkCase c = make_case(Suite::D1, index);
  const double lo = c.x_box.lo[0], hi = c.x_box.hi[0];
  const int n = 2001;
  double best = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = lo + (hi - lo) * i / (n - 1);
    for (int j = 0; j < n; ++j) {
      const double y = lo + (hi - lo) * j / (n - 1);
      double gx = 0, gy = 0;
      if (index == 1) {
        gx = 2 * x + y;
        gy = x - 2 * y;
      } else if (index == 2) {
        gx = std::exp(x) + y;
        gy = x - std::exp(y);
      } else {
        gx = ad::sigmoid(x) + y;
        gy = x - ad::sigmoid(y);
      }
      best = std::max(best, std::hypot(gx, gy));
    }
  }
  return best;
}

// 2. Sup error of the lift on a 401x401 probe within L*sqrt(2)*h, non-increasing in m.
Outcome sup_error() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  double worst_ratio = 0.0;
  std::string per;
  for (int i = 1; i <= 3; ++i) {
    const BenchmarkCase c = make_case(Suite::D1, i);
    const double L = lipschitz(i);
    double prev = INFINITY;
    for (int m : {4, 8, 16, 32}) {
      const GridSamples g = sample_case_grid(c, m);
      const LiftedSaddleFunction fm = lift(decompose_grid(g));
      const double err = lifted_sup_error(fm, scalar_fn(c), 401);
      const double bound = sup_error_bound(L, m, g.x, g.y);
      ok = ok && err <= bound && err <= prev;
      worst_ratio = std::max(worst_ratio, err / bound);
      prev = err;
      if (m == 32) per += fmt(" case %.0f: %.2e at m=32 (bound %.2e);", i, err, bound);
    }
  }
  const double t = elapsed(t0);
  return {ok && t < 5.0, fmt("max err/bound %.3f (<= 1), monotone in m, %.2f s (limit 5 s);", worst_ratio, t) + per};
}

// 3. Every lifted function passes midpoint convexity in x and concavity in y.
Outcome lifted_membership() {
  double worst = 0.0;
  int count = 0;
  for (int i = 1; i <= 9; ++i) {
    const BenchmarkCase c = make_case(Suite::D1, i);
    for (int m : {4, 8, 16, 32}) {
      const GridSamples g = sample_case_grid(c, m);
      std::vector<LiftedSaddleFunction> fs{lift(decompose_grid(g))};
      if (c.orientation == MongeOrientation::Both) fs.push_back(decompose_reversed(g));
      for (const auto& f : fs) {
        ++count;
        Rng rng(derive_seed(static_cast<std::uint64_t>(100 * i + m), streams::kVerify));
        for (int s = 0; s < 10000; ++s) {
          const double a = rng.uniform(g.x.lo, g.x.hi), b = rng.uniform(g.x.lo, g.x.hi);
          const double y = rng.uniform(g.y.lo, g.y.hi);
          worst = std::max(worst, f(0.5 * (a + b), y) - 0.5 * (f(a, y) + f(b, y)));
          const double p = rng.uniform(g.y.lo, g.y.hi), q = rng.uniform(g.y.lo, g.y.hi);
          const double x = rng.uniform(g.x.lo, g.x.hi);
          worst = std::max(worst, 0.5 * (f(x, p) + f(x, q)) - f(x, 0.5 * (p + q)));
        }
      }
    }
  }
  return {worst <= 1e-9, fmt("%.0f lifted functions x 10^4 segments each way, max violation %.3e (tol 1e-9)", count, worst)};
}

// 4. decompose_reversed equals the sign/transpose-mapped forward pipeline.
Outcome duality() {
  std::vector<GridSamples> grids;
  for (int i = 1; i <= 6; ++i) {
    for (int m : {8, 16, 32}) grids.push_back(sample_case_grid(make_case(Suite::D1, i), m));
  }
  for (int m : {8, 16, 32})
    grids.push_back(sample_grid([](double x, double y) { return (x * x - 2.0) * y * y; }, m, {0.0, 1.0}, {0.0, 1.0}));
  double worst = 0.0;
  for (const auto& g : grids) {
    const LiftedSaddleFunction fr = decompose_reversed(g);
    const LiftedSaddleFunction F = lift(decompose_grid(reversed_grid(g)));
    Rng rng(7);
    for (int k = 0; k < 2000; ++k) {
      const double x = rng.uniform(g.x.lo, g.x.hi), y = rng.uniform(g.y.lo, g.y.hi);
      worst = std::max(worst, std::abs(fr(x, y) + F(y, x)));
    }
    for (int i = 0; i <= g.m; ++i)
      for (int j = 0; j <= g.m; ++j) worst = std::max(worst, std::abs(fr(g.x_node(i), g.y_node(j)) + F(g.y_node(j), g.x_node(i))));
  }
  return {worst <= 1e-12, fmt("%.0f reversed-admissible grids, max |f_rev(x,y) + F(y,x)| %.3e (tol 1e-12)",
                              static_cast<double>(grids.size()), worst)};
}

// 5. Reverse pass vs central differences on the full SaddleNet loss at 20 random parameter points.
Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    Rng rng(derive_seed(500 + static_cast<std::uint64_t>(k), streams::kInit));
    SaddleArchitecture arch;
    arch.icnn.hidden = {8, 8, 8};
    const Index d = k % 2 == 0 ? 1 : 3;
    SaddleNet net = SaddleNet::create(d, 3, arch, k % 4 < 2, 10.0, rng);
    for (ad::Parameter* p : net.parameters())
      p->value() = testutil::random_matrix(rng, p->value().rows(), p->value().cols());
    net.project_nonnegative();
    // Shifts in a range where part of the constraints are violated.
    net.cv().value() = testutil::random_matrix(rng, 1, 3, -0.5, 1.0);
    net.cu().value() = testutil::random_matrix(rng, 1, 3, -0.5, 1.0);
    const Matrix x = testutil::random_matrix(rng, 16, d), y = testutil::random_matrix(rng, 16, d);
    const Matrix t = testutil::random_matrix(rng, 16, 1);
    auto build = [&](ad::Graph& g, const std::vector<ad::Var>&) {
      auto o = net.forward(g, g.constant(x), g.constant(y));
      return ad::mean(ad::square(o.value - g.constant(t))) + o.penalty;
    };
    worst = std::max(worst, testutil::gradient_error(net.parameters(), build, 1e-5));
  }
  const double t = elapsed(t0);
  return {worst < 1e-4 && t < 10.0, fmt("max relative error %.3e (tol 1e-4), %.2f s (limit 10 s)", worst, t)};
}

// 7. x^T B y rebuilt from saddle-class terms for random 5x5 B at 100 random points.
Outcome bilinear() {
  Rng rng(77);
  const Eigen::MatrixXd B = testutil::random_matrix(rng, 5, 5, -2.0, 2.0);
  const Box X{{-1.0, -2.0, 0.0, 0.5, -3.0}, {1.0, 0.0, 2.0, 1.5, 3.0}};
  const Box Y = Box::cube(5, -1.0, 1.0);
  const BilinearDecomposition dec = bilinear_to_saddle_terms(B, X, Y);
  double worst = 0.0;
  Matrix x(1, 5), y(1, 5);
  for (int k = 0; k < 100; ++k) {
    X.sample_into(rng, x, 0);
    Y.sample_into(rng, y, 0);
    const double direct = (x * B * y.transpose())(0, 0);
    worst = std::max(worst, std::abs(dec({x.data(), 5}, {y.data(), 5}) - direct));
  }
  return {worst <= 1e-12, fmt("max |terms - x^T B y| %.3e over 100 points (tol 1e-12)", worst)};
}

struct TrainedNet {
  std::string label;
  SaddleNet net;
  Box x_box, y_box;
};

std::vector<TrainedNet> g_trained;

// 8. Desk-scale training on 1D case 1.
Outcome desk_training() {
  const BenchmarkCase c = make_case("1d/1");
  TrainConfig cfg = TrainConfig::desk(Suite::D1);
  cfg.N = 20;
  cfg.penalty_weight = 10.0;
  std::vector<double> mse, pen;
  double wall = 0.0;
  for (std::uint64_t s = 0; s < 3; ++s) {
    TrainOutcome o = train_one(c, cfg, s);
    std::printf("  criterion 8 seed %llu: mse %.3e, penalty residual %.3e, %.0f s%s\n",
                static_cast<unsigned long long>(s), o.result.mse, o.result.penalty_residual, o.result.wall_s,
                o.result.failed ? " (failed)" : "");
    std::fflush(stdout);
    if (o.result.failed) return {false, "run failed: " + o.result.failure};
    mse.push_back(o.result.mse);
    pen.push_back(o.result.penalty_residual);
    wall += o.result.wall_s;
    g_trained.push_back({"1d/1 N=20 seed " + std::to_string(s), std::move(o.net), c.x_box, c.y_box});
  }
  const double m = mean_std(mse).first, p = mean_std(pen).first;
  return {m < 1e-3 && p < 1e-8,
          fmt("mean MSE %.3e (< 1e-3), mean penalty residual %.3e (< 1e-8), %.0f s total", m, p, wall)};
}

// 9. N-sweep direction at desk scale.
Outcome sweep_direction() {
  const BenchmarkCase c = make_case("1d/1");
  const TrainConfig cfg = TrainConfig::desk(Suite::D1);
  const SweepResult s = run_sweep(c, {1, 16}, cfg);
  for (const auto& e : s.entries) {
    std::printf("  criterion 9 N=%ld: mean mse %.3e, std %.3e%s\n", static_cast<long>(e.N), e.mean_mse, e.std_mse,
                e.failed ? " (failed runs)" : "");
  }
  std::fflush(stdout);
  if (s.entries.size() != 2 || s.entries[0].failed || s.entries[1].failed) return {false, "sweep runs failed"};
  const double m1 = s.entries[0].mean_mse, m16 = s.entries[1].mean_mse;
  return {m16 < m1, fmt("mean MSE N=1 %.3e, N=16 %.3e (require N=16 < N=1)", m1, m16)};
}

// 10. 5D smoke run.
Outcome smoke_5d() {
  const BenchmarkCase c = make_case("5d/1");
  TrainConfig cfg = TrainConfig::desk(Suite::D5);
  cfg.N = 20;
  cfg.penalty_weight = 100.0;
  cfg.iterations = 50000;
  TrainOutcome o = train_one(c, cfg, 0);
  if (o.result.failed) return {false, "run failed: " + o.result.failure};
  const double mse = o.result.mse, pen = o.result.penalty_residual, wall = o.result.wall_s;
  g_trained.push_back({"5d/1 N=20 seed 0", std::move(o.net), c.x_box, c.y_box});
  return {mse < 5e-2 && pen < 1e-8,
          fmt("MSE %.3e (< 5e-2, Monte Carlo 1e5), penalty residual %.3e (< 1e-8), %.0f s", mse, pen, wall)};
}

// 6. Nets with zero sign residual on a 10^4 sample pass verify_saddle.
Outcome structural() {
  // Short runs over other cases and primitives, in addition to the desk-scale nets above.
  struct Extra {
    const char* id;
    Primitive prim;
    bool bilinear;
  };
  for (const Extra& e : {Extra{"1d/4", Primitive::Icnn, false}, Extra{"1d/7", Primitive::MaxAffine, false},
                         Extra{"1d/2", Primitive::Icnn, true}, Extra{"5d/4", Primitive::MaxAffine, true}}) {
    const BenchmarkCase c = make_case(e.id);
    TrainConfig cfg = TrainConfig::full_scale(c.suite);
    cfg.iterations = 2000;
    cfg.batch_size = 512;
    cfg.N = 4;
    cfg.arch.primitive = e.prim;
    cfg.arch.icnn.hidden = {16, 16};
    cfg.bilinear = e.bilinear;
    TrainOutcome o = train_one(c, cfg, 1);
    if (!o.result.failed) g_trained.push_back({std::string(e.id) + " short", std::move(o.net), c.x_box, c.y_box});
  }
  int eligible = 0, passed = 0;
  double worst = 0.0;
  for (const auto& t : g_trained) {
    const SaddleReport r = verify_saddle(t.net, t.x_box, t.y_box, 10000, 1e-9, 10000, 6);
    std::printf("  criterion 6 %s: sample residual %.3e, convexity %.3e, concavity %.3e, sign %.3e\n", t.label.c_str(),
                r.mean_residual, r.convexity_violation, r.concavity_violation, r.sign_residual);
    if (r.mean_residual < 1e-8) {
      ++eligible;
      if (r.passed) ++passed;
      worst = std::max({worst, r.convexity_violation, r.concavity_violation, r.sign_residual});
    }
  }
  std::fflush(stdout);
  return {eligible > 0 && passed == eligible,
          fmt("%.0f of %.0f nets with sample residual < 1e-8 pass; max violation %.3e (tol 1e-9); %.0f nets checked",
              passed, eligible, worst, static_cast<double>(g_trained.size()))};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<std::pair<int, std::pair<const char*, Outcome (*)()>>> all{
      {1, {"decomposition round-trip", round_trip}},
      {2, {"lifted sup-error bound", sup_error}},
      {3, {"lifted saddle-class membership", lifted_membership}},
      {4, {"reversed-form duality", duality}},
      {5, {"gradient correctness", gradients}},
      {7, {"bilinear absorption", bilinear}},
      {8, {"desk-scale training, 1d/1", desk_training}},
      {9, {"N-sweep direction, 1d/1", sweep_direction}},
      {10, {"5d smoke run, 5d/1", smoke_5d}},
      {6, {"structural guarantee", structural}},
  };
  int failures = 0;
  for (const auto& [id, entry] : all) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = entry.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, entry.first, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
