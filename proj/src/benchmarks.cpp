#include "saddle/benchmarks.hpp"

#include "saddle/autodiff.hpp"
#include "saddle/errors.hpp"
#include "saddle/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

namespace saddle {

namespace {

constexpr double kEps = 1e-2;
constexpr double kHuberDelta = 0.3;
constexpr Eigen::Index kChunk = 8192;

double sp(double t) { return ad::softplus(t); }

double phi(InteractionKind kind, double s) {
  switch (kind) {
    case InteractionKind::Softplus: return sp(s);
    case InteractionKind::Exp: return std::exp(s);
    case InteractionKind::Quadratic: return s * s;
    case InteractionKind::None: break;
  }
  return 0.0;
}

double dot(const Matrix& m, int r, std::span<const double> z) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < m.cols(); ++k) s += m(r, k) * z[static_cast<std::size_t>(k)];
  return s;
}

double sq_norm(std::span<const double> z) {
  double s = 0.0;
  for (double v : z) s += v * v;
  return s;
}

double bilinear(const Matrix& B, std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < B.rows(); ++k) {
    double row = 0.0;
    for (Eigen::Index l = 0; l < B.cols(); ++l) row += B(k, l) * y[static_cast<std::size_t>(l)];
    s += x[static_cast<std::size_t>(k)] * row;
  }
  return s;
}

double log_sum_exp(const Matrix& A, std::span<const double> z) {
  std::vector<double> a(static_cast<std::size_t>(A.rows()));
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < A.rows(); ++k) {
    a[static_cast<std::size_t>(k)] = dot(A, static_cast<int>(k), z);
    mx = std::max(mx, a[static_cast<std::size_t>(k)]);
  }
  double s = 0.0;
  for (double v : a) s += std::exp(v - mx);
  return mx + std::log(s);
}

// Frozen interaction parameters, indices r = 1..R and k = 1..d.
InteractionParams make_interaction(InteractionKind kind, int R, double k, bool scale_offsets, Eigen::Index d) {
  InteractionParams p;
  p.kind = kind;
  p.R = R;
  p.k = k;
  p.scale_offsets = scale_offsets;
  p.eps = kEps;
  p.u.resize(R, d);
  p.v.resize(R, d);
  p.b.resize(R);
  p.t.resize(R);
  p.C.resize(R);
  const double amp = 0.9 / std::sqrt(static_cast<double>(d));
  for (int ri = 0; ri < R; ++ri) {
    const double r = ri + 1;
    for (Eigen::Index ki = 0; ki < d; ++ki) {
      const double kk = static_cast<double>(ki + 1);
      if (d == 1) {
        p.u(ri, ki) = 0.9 * std::sin(2.3 * r);
        p.v(ri, ki) = 0.9 * std::cos(1.7 * r);
      } else {
        p.u(ri, ki) = amp * std::sin(2.3 * r + 1.1 * kk);
        p.v(ri, ki) = amp * std::cos(1.7 * r + 0.7 * kk);
      }
    }
    p.b(ri) = 0.3 * std::sin(0.9 * r);
    p.t(ri) = 0.3 * std::cos(1.3 * r);
    // Bound on |w_r(y)| over [-1,1]^d, then C_r = phi(bound) + eps.
    const double l1 = p.v.row(ri).cwiseAbs().sum() + std::abs(p.t(ri));
    double bound = 0.0;
    switch (kind) {
      case InteractionKind::Softplus: bound = sp(k * l1); break;
      case InteractionKind::Exp: bound = std::exp(k * l1); break;
      case InteractionKind::Quadratic: bound = (k * l1) * (k * l1); break;
      case InteractionKind::None: break;
    }
    p.C(ri) = bound + kEps;
  }
  return p;
}

Matrix frozen_b(Eigen::Index d) {
  Matrix B(d, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    for (Eigen::Index l = 0; l < d; ++l) {
      B(k, l) = 0.5 * std::sin(static_cast<double>(k + 1) + 2.0 * static_cast<double>(l + 1)) / static_cast<double>(d);
    }
  }
  return B;
}

Matrix frozen_lse(Eigen::Index rows, Eigen::Index d, double a, double c, bool cosine) {
  Matrix M(rows, d);
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (Eigen::Index k = 0; k < rows; ++k) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double arg = a * static_cast<double>(k + 1) + c * static_cast<double>(i + 1);
      M(k, i) = s * (cosine ? std::cos(arg) : std::sin(arg));
    }
  }
  return M;
}

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(m.row(i).data(), m.row(i).data() + m.cols());
    rows.push_back(r);
  }
  return rows;
}

std::vector<double> vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

const char* kind_name(InteractionKind k) {
  switch (k) {
    case InteractionKind::Softplus: return "softplus";
    case InteractionKind::Exp: return "exp";
    case InteractionKind::Quadratic: return "quadratic";
    case InteractionKind::None: break;
  }
  return "none";
}

BenchmarkCase make_1d(int index) {
  BenchmarkCase c;
  c.suite = Suite::D1;
  c.index = index;
  c.dim = 1;
  c.x_box = Box::cube(1, -1.0, 1.0);
  c.y_box = Box::cube(1, -1.0, 1.0);
  c.orientation = MongeOrientation::Both;
  using S = std::span<const double>;
  switch (index) {
    case 1:
      c.name = "smooth saddle with bilinear coupling";
      c.f = [](S x, S y) { return x[0] * x[0] - y[0] * y[0] + x[0] * y[0]; };
      break;
    case 2:
      c.name = "steep smooth curvature";
      c.f = [](S x, S y) { return std::exp(x[0]) - std::exp(y[0]) + x[0] * y[0]; };
      break;
    case 3:
      c.name = "softplus multi-regime transition";
      c.x_box = Box::cube(1, -3.0, 3.0);
      c.y_box = Box::cube(1, -3.0, 3.0);
      c.f = [](S x, S y) { return sp(x[0]) - sp(y[0]) + x[0] * y[0]; };
      break;
    case 4:
      c.name = "absolute-value corners";
      c.kinked = true;
      c.kinks = {0.0};
      c.f = [](S x, S y) { return std::abs(x[0]) - std::abs(y[0]) + x[0] * y[0]; };
      break;
    case 5:
      c.name = "max of |x| and x^2 with l1 kink in y";
      c.kinked = true;
      c.kinks = {-1.0, 0.0, 1.0};
      c.f = [](S x, S y) { return std::max(std::abs(x[0]), x[0] * x[0]) + x[0] * y[0] - std::abs(y[0]); };
      break;
    case 6:
      c.name = "Huber in x with kink in y";
      c.kinked = true;
      c.kinks = {0.0};
      c.f = [](S x, S y) { return huber(x[0], kHuberDelta) + x[0] * y[0] - std::abs(y[0]); };
      break;
    case 7:
    case 8:
    case 9: {
      c.orientation = MongeOrientation::Forward;
      if (index == 7) {
        c.name = "softplus coupling, R=24, k=6";
        c.interaction = make_interaction(InteractionKind::Softplus, 24, 6.0, false, 1);
      } else if (index == 8) {
        c.name = "exponential coupling, R=16, k=2";
        c.interaction = make_interaction(InteractionKind::Exp, 16, 2.0, true, 1);
      } else {
        c.name = "quadratic coupling, R=24";
        c.interaction = make_interaction(InteractionKind::Quadratic, 24, 1.0, false, 1);
      }
      const InteractionParams ip = c.interaction;
      c.f = [ip](S x, S y) { return x[0] * x[0] - y[0] * y[0] + x[0] * y[0] + ip(x, y); };
      break;
    }
    default:
      throw InputError("unknown 1d case " + std::to_string(index) + " (valid: 1..9)");
  }
  return c;
}

BenchmarkCase make_5d(int index) {
  constexpr Eigen::Index d = 5;
  BenchmarkCase c;
  c.suite = Suite::D5;
  c.index = index;
  c.dim = d;
  c.x_box = Box::cube(d, -1.0, 1.0);
  c.y_box = Box::cube(d, -1.0, 1.0);
  c.orientation = MongeOrientation::Unchecked;
  c.B = frozen_b(d);
  const Matrix B = *c.B;
  using S = std::span<const double>;
  switch (index) {
    case 1:
      c.name = "quadratic saddle with bilinear coupling";
      c.f = [B](S x, S y) { return sq_norm(x) - sq_norm(y) + bilinear(B, x, y); };
      break;
    case 2:
      c.name = "coordinate exponentials with bilinear coupling";
      c.f = [B](S x, S y) {
        double s = bilinear(B, x, y);
        for (std::size_t i = 0; i < x.size(); ++i) s += std::exp(x[i]) - std::exp(y[i]);
        return s;
      };
      break;
    case 3: {
      c.name = "log-sum-exp saddle, 8 x 5 maps";
      c.A = frozen_lse(8, d, 1.3, 0.7, false);
      c.C = frozen_lse(8, d, 0.9, 1.9, true);
      const Matrix A = *c.A, C = *c.C;
      c.f = [A, C, B](S x, S y) { return log_sum_exp(A, x) - log_sum_exp(C, y) + bilinear(B, x, y); };
      break;
    }
    case 4:
      c.name = "Huber in x with l1 in y";
      c.kinked = true;
      c.kinks = {0.0};
      c.f = [B](S x, S y) {
        double s = bilinear(B, x, y);
        for (std::size_t i = 0; i < x.size(); ++i) s += huber(x[i], kHuberDelta) - std::abs(y[i]);
        return s;
      };
      break;
    case 5:
      c.name = "log barrier on [0.1,0.9]^5";
      c.x_box = Box::cube(d, 0.1, 0.9);
      c.y_box = Box::cube(d, 0.1, 0.9);
      c.f = [B](S x, S y) {
        double s = bilinear(B, x, y);
        for (std::size_t i = 0; i < x.size(); ++i) s += -std::log(x[i]) + std::log(y[i]);
        return s;
      };
      break;
    case 6:
    case 7:
    case 8: {
      const InteractionKind kind = index == 6 ? InteractionKind::Softplus
                                   : index == 7 ? InteractionKind::Exp
                                                : InteractionKind::Quadratic;
      c.name = std::string(kind_name(kind)) + " coupling, R=4";
      c.interaction = make_interaction(kind, 4, 1.0, false, d);
      const InteractionParams ip = c.interaction;
      c.f = [B, ip](S x, S y) { return sq_norm(x) - sq_norm(y) + bilinear(B, x, y) + ip(x, y); };
      break;
    }
    default:
      throw InputError("unknown 5d case " + std::to_string(index) + " (valid: 1..8)");
  }
  return c;
}

struct Neumaier {
  double sum = 0.0;
  double comp = 0.0;
  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + comp; }
};

double chunk_sse(const BatchModel& model, const BenchmarkCase& c, const Matrix& X, const Matrix& Y) {
  const Eigen::VectorXd pred = model(X, Y);
  if (pred.size() != X.rows()) throw ShapeError("eval_mse: model returned " + std::to_string(pred.size()) + " values");
  const Eigen::VectorXd target = c.evaluate(X, Y);
  Neumaier acc;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    if (!std::isfinite(pred(i))) throw NumericalError("eval_mse: model produced a non-finite value");
    const double e = pred(i) - target(i);
    acc.add(e * e);
  }
  return acc.value();
}

bool near_kink(const BenchmarkCase& c, const Matrix& m, Eigen::Index row) {
  for (Eigen::Index k = 0; k < m.cols(); ++k) {
    for (double kink : c.kinks) {
      if (std::abs(m(row, k) - kink) < 1e-12) return true;
    }
  }
  return false;
}

void draw(const BenchmarkCase& c, const Box& box, Rng& rng, Matrix& m, Eigen::Index row) {
  do {
    box.sample_into(rng, m, row);
  } while (c.kinked && near_kink(c, m, row));
}

}  // namespace

const char* to_string(Suite s) { return s == Suite::D1 ? "1d" : "5d"; }

Suite parse_suite(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (l == "1d" || l == "1") return Suite::D1;
  if (l == "5d" || l == "5") return Suite::D5;
  throw InputError("unknown suite '" + s + "' (expected 1d|5d)");
}

const char* to_string(MongeOrientation o) {
  switch (o) {
    case MongeOrientation::Forward: return "forward";
    case MongeOrientation::Reversed: return "reversed";
    case MongeOrientation::Both: return "both";
    case MongeOrientation::Unchecked: return "unchecked";
  }
  return "?";
}

double huber(double x, double delta) {
  const double a = std::abs(x);
  return a <= delta ? x * x / (2.0 * delta) : a - delta / 2.0;
}

double InteractionParams::x_factor(int r, std::span<const double> x) const {
  const double s = scale_offsets ? k * (dot(u, r, x) + b(r)) : k * dot(u, r, x) + b(r);
  return phi(kind, s);
}

double InteractionParams::y_factor(int r, std::span<const double> y) const {
  const double w = scale_offsets ? k * (dot(v, r, y) + t(r)) : k * dot(v, r, y) + t(r);
  return C(r) - phi(kind, w);
}

double InteractionParams::operator()(std::span<const double> x, std::span<const double> y) const {
  double s = 0.0;
  for (int r = 0; r < R; ++r) s += x_factor(r, x) * y_factor(r, y);
  return s;
}

std::string BenchmarkCase::id() const { return std::string(to_string(suite)) + "/" + std::to_string(index); }

Eigen::VectorXd BenchmarkCase::evaluate(const Matrix& X, const Matrix& Y) const {
  if (X.cols() != dim || Y.cols() != dim || X.rows() != Y.rows()) {
    throw ShapeError("benchmark " + id() + ": batches must be n x " + std::to_string(dim));
  }
  Eigen::VectorXd out(X.rows());
  const auto d = static_cast<std::size_t>(dim);
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    out(r) = f(std::span<const double>(X.row(r).data(), d), std::span<const double>(Y.row(r).data(), d));
  }
  return out;
}

nlohmann::json BenchmarkCase::to_json() const {
  nlohmann::json j = {{"id", id()},
                      {"suite", to_string(suite)},
                      {"index", index},
                      {"name", name},
                      {"dimension", dim},
                      {"domain", {{"x_lo", x_box.lo}, {"x_hi", x_box.hi}, {"y_lo", y_box.lo}, {"y_hi", y_box.hi}}},
                      {"monge_orientation", to_string(orientation)},
                      {"kinked", kinked}};
  nlohmann::json params = nlohmann::json::object();
  if (B) params["B"] = matrix_json(*B);
  if (A) params["A"] = matrix_json(*A);
  if (C) params["C"] = matrix_json(*C);
  if ((suite == Suite::D1 && index == 6) || (suite == Suite::D5 && index == 4)) params["delta"] = kHuberDelta;
  if (interaction.kind != InteractionKind::None) {
    const auto& ip = interaction;
    params["interaction"] = {{"kind", kind_name(ip.kind)},
                             {"R", ip.R},
                             {"k", ip.k},
                             {"scale_offsets", ip.scale_offsets},
                             {"epsilon", ip.eps},
                             {"u", matrix_json(ip.u)},
                             {"v", matrix_json(ip.v)},
                             {"b", vec(ip.b)},
                             {"t", vec(ip.t)},
                             {"C", vec(ip.C)}};
  }
  j["parameters"] = params;
  return j;
}

int suite_size(Suite s) { return s == Suite::D1 ? 9 : 8; }

BenchmarkCase make_case(Suite suite, int index) { return suite == Suite::D1 ? make_1d(index) : make_5d(index); }

BenchmarkCase make_case(const std::string& id) {
  const auto slash = id.find('/');
  if (slash == std::string::npos) throw InputError("case id '" + id + "' must look like 1d/3 or 5d/1");
  const Suite s = parse_suite(id.substr(0, slash));
  const std::string num = id.substr(slash + 1);
  if (num.empty() || !std::all_of(num.begin(), num.end(), [](unsigned char ch) { return std::isdigit(ch); }) ||
      num.size() > 3) {
    throw InputError("case id '" + id + "': index must be a number");
  }
  return make_case(s, std::stoi(num));
}

std::vector<BenchmarkCase> make_suite(Suite suite) {
  std::vector<BenchmarkCase> out;
  for (int i = 1; i <= suite_size(suite); ++i) out.push_back(make_case(suite, i));
  return out;
}

nlohmann::json catalog_json() {
  nlohmann::json arr = nlohmann::json::array();
  for (Suite s : {Suite::D1, Suite::D5}) {
    for (const auto& c : make_suite(s)) arr.push_back(c.to_json());
  }
  return arr;
}

MseProtocol MseProtocol::for_case(const BenchmarkCase& c, long mc_samples, std::uint64_t seed) {
  MseProtocol p;
  p.seed = seed;
  p.samples = mc_samples;
  p.mode = c.dim == 1 ? MseMode::Grid : MseMode::MonteCarlo;
  return p;
}

double eval_mse(const BatchModel& model, const BenchmarkCase& c, const MseProtocol& p) {
  const Eigen::Index d = c.dim;
  std::vector<double> chunk_sums;
  Eigen::Index total = 0;
  if (p.mode == MseMode::Grid) {
    if (d != 1) throw InputError("eval_mse: grid protocol is defined for 1D cases only");
    if (p.grid_points < 2) throw InputError("eval_mse: grid needs at least 2 points per axis");
    const Eigen::Index n = p.grid_points;
    total = n * n;
    auto coord = [n](const Box& b, Eigen::Index i) {
      return i == n - 1 ? b.hi[0] : b.lo[0] + (b.hi[0] - b.lo[0]) * static_cast<double>(i) / static_cast<double>(n - 1);
    };
    for (Eigen::Index start = 0; start < total; start += kChunk) {
      const Eigen::Index m = std::min(kChunk, total - start);
      Matrix X(m, 1), Y(m, 1);
      for (Eigen::Index r = 0; r < m; ++r) {
        const Eigen::Index flat = start + r;
        X(r, 0) = coord(c.x_box, flat / n);
        Y(r, 0) = coord(c.y_box, flat % n);
      }
      chunk_sums.push_back(chunk_sse(model, c, X, Y));
    }
  } else {
    if (p.samples <= 0) throw InputError("eval_mse: Monte-Carlo sample count must be positive");
    total = p.samples;
    const std::uint64_t base = derive_seed(p.seed, streams::kEval);
    std::uint64_t chunk_id = 0;
    for (Eigen::Index start = 0; start < total; start += kChunk, ++chunk_id) {
      const Eigen::Index m = std::min(kChunk, total - start);
      Rng rng(derive_seed(base, chunk_id));
      Matrix X(m, d), Y(m, d);
      for (Eigen::Index r = 0; r < m; ++r) {
        c.x_box.sample_into(rng, X, r);
        c.y_box.sample_into(rng, Y, r);
      }
      chunk_sums.push_back(chunk_sse(model, c, X, Y));
    }
  }
  Neumaier acc;
  for (double s : chunk_sums) acc.add(s);
  return acc.value() / static_cast<double>(total);
}

decomp::GridSamples sample_case_grid(const BenchmarkCase& c, int m) {
  if (c.dim != 1) throw InputError("sample_case_grid: case " + c.id() + " is not one-dimensional");
  auto f = c.f;
  return decomp::sample_grid(
      [f](double x, double y) { return f(std::span<const double>(&x, 1), std::span<const double>(&y, 1)); }, m,
      {c.x_box.lo[0], c.x_box.hi[0]}, {c.y_box.lo[0], c.y_box.hi[0]});
}

CaseAdmissibility verify_case_admissibility(const BenchmarkCase& c, Eigen::Index n_segments, double tol,
                                            std::uint64_t seed, int monge_m) {
  CaseAdmissibility rep;
  rep.tol = tol;
  rep.convexity_margin = std::numeric_limits<double>::infinity();
  rep.concavity_margin = std::numeric_limits<double>::infinity();
  Rng rng(derive_seed(seed, streams::kVerify));
  const Eigen::Index d = c.dim;
  const auto du = static_cast<std::size_t>(d);
  Matrix a(1, d), b(1, d), mid(1, d), fixed(1, d);
  for (Eigen::Index s = 0; s < n_segments; ++s) {
    // Convexity in x along a random segment, at a random fixed y.
    draw(c, c.x_box, rng, a, 0);
    draw(c, c.x_box, rng, b, 0);
    draw(c, c.y_box, rng, fixed, 0);
    mid = 0.5 * (a + b);
    std::span<const double> fy(fixed.data(), du);
    const double cx = 0.5 * (c.f({a.data(), du}, fy) + c.f({b.data(), du}, fy)) - c.f({mid.data(), du}, fy);
    rep.convexity_margin = std::min(rep.convexity_margin, cx);
    // Concavity in y at a random fixed x.
    draw(c, c.y_box, rng, a, 0);
    draw(c, c.y_box, rng, b, 0);
    draw(c, c.x_box, rng, fixed, 0);
    mid = 0.5 * (a + b);
    std::span<const double> fx(fixed.data(), du);
    const double cy = c.f(fx, {mid.data(), du}) - 0.5 * (c.f(fx, {a.data(), du}) + c.f(fx, {b.data(), du}));
    rep.concavity_margin = std::min(rep.concavity_margin, cy);
  }
  if (n_segments == 0) rep.convexity_margin = rep.concavity_margin = 0.0;
  rep.passed = rep.convexity_margin >= -tol && rep.concavity_margin >= -tol;
  if (d == 1 && monge_m >= 2) {
    rep.monge = decomp::check_monge(sample_case_grid(c, monge_m));
    bool ok = false;
    switch (c.orientation) {
      case MongeOrientation::Forward: ok = rep.monge->forward_pass(); break;
      case MongeOrientation::Reversed: ok = rep.monge->reversed_pass(); break;
      case MongeOrientation::Both: ok = rep.monge->forward_pass() && rep.monge->reversed_pass(); break;
      case MongeOrientation::Unchecked: ok = true; break;
    }
    rep.passed = rep.passed && ok;
  }
  return rep;
}

}  // namespace saddle
