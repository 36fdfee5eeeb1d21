#pragma once

// Benchmark catalog: nine 1D cases on [-1,1]^2 (case 3 on [-3,3]^2) and eight
// 5D cases on [-1,1]^5 x [-1,1]^5 (case 5 on [0.1,0.9]^5 x [0.1,0.9]^5), plus
// the grid / Monte-Carlo MSE protocols.

#include "saddle/autodiff.hpp"
#include "saddle/box.hpp"
#include "saddle/decomposition.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace saddle {

using ad::Matrix;

enum class Suite { D1, D5 };
const char* to_string(Suite s);
Suite parse_suite(const std::string& s);

/// Admissible Monge orientation of a 1D case: Both when the mixed condition
/// holds with equality (separable plus bilinear cases).
enum class MongeOrientation { Forward, Reversed, Both, Unchecked };
const char* to_string(MongeOrientation o);

enum class InteractionKind { None, Softplus, Exp, Quadratic };

/// Coupling sum_r phi(s_r(x)) (C_r - phi(w_r(y))) with
///   s_r(x) = k (u_r . x) + b_r,  w_r(y) = k (v_r . y) + t_r        (offsets unscaled)
///   s_r(x) = k (u_r . x + b_r),  w_r(y) = k (v_r . y + t_r)        (scale_offsets)
/// and phi = softplus, exp or square.
struct InteractionParams {
  InteractionKind kind = InteractionKind::None;
  int R = 0;
  double k = 1.0;
  bool scale_offsets = false;
  Matrix u;  // R x d
  Matrix v;  // R x d
  Eigen::VectorXd b;
  Eigen::VectorXd t;
  Eigen::VectorXd C;
  double eps = 1e-2;

  /// Convex nonnegative x factor and concave nonnegative y factor of term r.
  double x_factor(int r, std::span<const double> x) const;
  double y_factor(int r, std::span<const double> y) const;
  double operator()(std::span<const double> x, std::span<const double> y) const;
};

struct BenchmarkCase {
  Suite suite = Suite::D1;
  int index = 1;
  std::string name;
  Eigen::Index dim = 1;
  Box x_box;
  Box y_box;
  MongeOrientation orientation = MongeOrientation::Unchecked;
  bool kinked = false;
  std::vector<double> kinks;          // coordinate values where a kink sits
  std::optional<Matrix> B;            // bilinear coupling (5D suite)
  std::optional<Matrix> A, C;         // log-sum-exp maps (5D case 3)
  InteractionParams interaction;
  std::function<double(std::span<const double>, std::span<const double>)> f;

  std::string id() const;  // e.g. "1d/7"
  double operator()(std::span<const double> x, std::span<const double> y) const { return f(x, y); }
  /// Row-wise evaluation of paired batches.
  Eigen::VectorXd evaluate(const Matrix& X, const Matrix& Y) const;
  nlohmann::json to_json() const;
};

int suite_size(Suite s);
/// Throws InputError naming the valid range for an unknown index.
BenchmarkCase make_case(Suite suite, int index);
/// Parses ids like "1d/3" or "5D/1".
BenchmarkCase make_case(const std::string& id);
std::vector<BenchmarkCase> make_suite(Suite suite);
/// Full catalog (both suites) as a JSON array.
nlohmann::json catalog_json();

/// Huber function with threshold delta.
double huber(double x, double delta);

enum class MseMode { Grid, MonteCarlo };

struct MseProtocol {
  MseMode mode = MseMode::Grid;
  int grid_points = 200;       // per axis, endpoints included (1D only)
  long samples = 500000;       // Monte-Carlo sample count
  std::uint64_t seed = 0;

  /// Grid 200x200 for 1D cases, Monte Carlo with `mc_samples` for 5D cases.
  static MseProtocol for_case(const BenchmarkCase& c, long mc_samples = 500000, std::uint64_t seed = 0);
};

using BatchModel = std::function<Eigen::VectorXd(const Matrix& X, const Matrix& Y)>;

/// Mean squared error of `model` against the case. Samples are processed in
/// fixed chunks of 8192 with compensated summation per chunk and a fixed
/// merge order, so the value depends only on the protocol. Throws
/// NumericalError when the model returns a non-finite value.
double eval_mse(const BatchModel& model, const BenchmarkCase& c, const MseProtocol& p);

struct CaseAdmissibility {
  double convexity_margin = 0.0;  // min over segments of mean(endpoints) - midpoint, in x
  double concavity_margin = 0.0;  // min over segments of midpoint - mean(endpoints), in y
  std::optional<decomp::MongeReport> monge;  // 1D cases, grid at m = 32
  double tol = 1e-9;
  bool passed = true;
};

/// Midpoint checks over n_segments random segments (probe points falling on
/// a kink coordinate are redrawn), plus a Monge check for 1D cases.
CaseAdmissibility verify_case_admissibility(const BenchmarkCase& c, Eigen::Index n_segments = 10000,
                                            double tol = 1e-9, std::uint64_t seed = 0, int monge_m = 32);

/// Samples a 1D case on the (m+1)x(m+1) grid of its domain.
decomp::GridSamples sample_case_grid(const BenchmarkCase& c, int m);

}  // namespace saddle
