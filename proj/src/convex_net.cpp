#include "saddle/convex_net.hpp"

#include "saddle/errors.hpp"

#include <cmath>
#include <limits>

namespace saddle {

void Box::validate() const {
  if (lo.empty() || lo.size() != hi.size()) throw InputError("box: bound vectors must be nonempty and equal length");
  for (std::size_t k = 0; k < lo.size(); ++k) {
    if (!std::isfinite(lo[k]) || !std::isfinite(hi[k])) throw InputError("box: unbounded coordinate " + std::to_string(k));
    if (!(lo[k] <= hi[k])) throw InputError("box: empty interval in coordinate " + std::to_string(k));
  }
}

bool Box::bounded() const {
  for (std::size_t k = 0; k < lo.size(); ++k) {
    if (!std::isfinite(lo[k]) || !std::isfinite(hi[k])) return false;
  }
  return true;
}

const char* to_string(Activation a) { return a == Activation::Softplus ? "softplus" : "relu"; }
const char* to_string(Primitive p) { return p == Primitive::Icnn ? "icnn" : "maxaffine"; }

Activation parse_activation(const std::string& s) {
  if (s == "softplus") return Activation::Softplus;
  if (s == "relu") return Activation::Relu;
  throw InputError("unknown activation '" + s + "' (expected softplus|relu)");
}

Primitive parse_primitive(const std::string& s) {
  if (s == "icnn") return Primitive::Icnn;
  if (s == "maxaffine" || s == "groupmax") return Primitive::MaxAffine;
  throw InputError("unknown primitive '" + s + "' (expected icnn|maxaffine)");
}

namespace {

Matrix uniform_matrix(Rng& rng, Index rows, Index cols, double bound, bool absolute) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      double w = rng.uniform(-bound, bound);
      m(i, j) = absolute ? std::abs(w) : w;
    }
  }
  return m;
}

Matrix activate(const Matrix& h, Activation a) {
  if (a == Activation::Relu) return h.cwiseMax(0.0);
  return (h.array().max(0.0) + (1.0 + (-h.array().abs()).exp()).log()).matrix();
}

ad::Var activate(const ad::Var& h, Activation a) {
  return a == Activation::Relu ? ad::relu(h) : ad::softplus(h);
}

}  // namespace

ConvexNet ConvexNet::icnn(Index input_dim, Index outputs, const IcnnSpec& spec, Rng& rng,
                          const std::string& prefix) {
  if (input_dim <= 0 || outputs <= 0) throw InputError("icnn: dimensions must be positive");
  if (spec.hidden.empty()) throw InputError("icnn: at least one hidden layer is required");
  IcnnParams p;
  p.activation = spec.activation;
  std::vector<Index> widths = spec.hidden;
  widths.push_back(outputs);
  const double bx = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (std::size_t k = 0; k < widths.size(); ++k) {
    const std::string layer = prefix + ".layer" + std::to_string(k);
    const Index w = widths[k];
    if (w <= 0) throw InputError("icnn: layer widths must be positive");
    p.wx.emplace_back(layer + ".wx", uniform_matrix(rng, w, input_dim, bx, false));
    if (k > 0) {
      const Index fan_in = widths[k - 1];
      // |U(-1/fan_in, 1/fan_in)| keeps the mean hidden pre-activation at the
      // scale of the previous layer instead of growing with depth.
      const double bz = 1.0 / static_cast<double>(fan_in);
      p.wz.emplace_back(layer + ".wz", uniform_matrix(rng, w, fan_in, bz, true), true);
    }
    p.bias.emplace_back(layer + ".b", Matrix::Zero(1, w));
  }
  return from_params(input_dim, outputs, std::move(p));
}

ConvexNet ConvexNet::max_affine(Index input_dim, Index outputs, const MaxAffineSpec& spec, Rng& rng,
                                const std::string& prefix) {
  if (input_dim <= 0 || outputs <= 0) throw InputError("max_affine: dimensions must be positive");
  if (spec.groups <= 0 || spec.pieces <= 0) throw InputError("max_affine: groups and pieces must be positive");
  MaxAffineParams p;
  p.pieces = spec.pieces;
  const Index n = spec.groups * spec.pieces;
  const double bx = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double bg = 1.0 / std::sqrt(static_cast<double>(spec.groups));
  p.slopes = Parameter(prefix + ".slopes", uniform_matrix(rng, n, input_dim, bx, false));
  p.intercepts = Parameter(prefix + ".intercepts", uniform_matrix(rng, 1, n, bx, false));
  p.combine = Parameter(prefix + ".combine", uniform_matrix(rng, outputs, spec.groups, bg, true), true);
  p.bias = Parameter(prefix + ".b", Matrix::Zero(1, outputs));
  return from_params(input_dim, outputs, std::move(p));
}

ConvexNet ConvexNet::from_params(Index input_dim, Index outputs, std::variant<IcnnParams, MaxAffineParams> p) {
  ConvexNet net;
  net.input_dim_ = input_dim;
  net.output_dim_ = outputs;
  net.params_ = std::move(p);
  if (auto* ic = std::get_if<IcnnParams>(&net.params_)) {
    const std::size_t L = ic->wx.size();
    if (L == 0 || ic->bias.size() != L || ic->wz.size() + 1 != L) {
      throw InputError("icnn: inconsistent layer count");
    }
    for (std::size_t k = 0; k < L; ++k) {
      if (ic->wx[k].value().cols() != input_dim) throw ShapeError("icnn: " + ic->wx[k].name + " has wrong input width");
      if (ic->bias[k].value().cols() != ic->wx[k].value().rows() || ic->bias[k].value().rows() != 1) {
        throw ShapeError("icnn: " + ic->bias[k].name + " does not match layer width");
      }
      if (k > 0 && (ic->wz[k - 1].value().rows() != ic->wx[k].value().rows() ||
                    ic->wz[k - 1].value().cols() != ic->wx[k - 1].value().rows())) {
        throw ShapeError("icnn: " + ic->wz[k - 1].name + " does not connect adjacent layers");
      }
    }
    if (ic->wx.back().value().rows() != outputs) throw ShapeError("icnn: output layer width differs from output count");
    for (auto& w : ic->wz) w.nonnegative = true;
  } else {
    auto& ma = std::get<MaxAffineParams>(net.params_);
    const Index n = ma.slopes.value().rows();
    if (ma.pieces <= 0 || n % ma.pieces != 0) throw ShapeError("max_affine: pieces does not divide affine count");
    if (ma.slopes.value().cols() != input_dim) throw ShapeError("max_affine: slopes have wrong input width");
    if (ma.intercepts.value().rows() != 1 || ma.intercepts.value().cols() != n) {
      throw ShapeError("max_affine: intercepts must be 1 x groups*pieces");
    }
    if (ma.combine.value().rows() != outputs || ma.combine.value().cols() != n / ma.pieces) {
      throw ShapeError("max_affine: combine must be outputs x groups");
    }
    if (ma.bias.value().rows() != 1 || ma.bias.value().cols() != outputs) throw ShapeError("max_affine: bias must be 1 x outputs");
    ma.combine.nonnegative = true;
  }
  return net;
}

Primitive ConvexNet::primitive() const {
  return std::holds_alternative<IcnnParams>(params_) ? Primitive::Icnn : Primitive::MaxAffine;
}

void ConvexNet::check_input(Index cols) const {
  if (cols != input_dim_) {
    throw ShapeError("convex net: input has " + std::to_string(cols) + " columns, expected " +
                     std::to_string(input_dim_));
  }
}

ad::Var ConvexNet::forward(ad::Graph& g, const ad::Var& x) {
  check_input(x.cols());
  if (auto* ic = std::get_if<IcnnParams>(&params_)) {
    const std::size_t L = ic->wx.size();
    ad::Var z = activate(ad::affine(x, g.parameter(ic->wx[0]), g.parameter(ic->bias[0])), ic->activation);
    for (std::size_t k = 1; k < L; ++k) {
      ad::Var h = ad::affine_pair(z, g.parameter(ic->wz[k - 1]), x, g.parameter(ic->wx[k]), g.parameter(ic->bias[k]));
      z = (k + 1 < L) ? activate(h, ic->activation) : h;
    }
    return z;
  }
  auto& ma = std::get<MaxAffineParams>(params_);
  ad::Var pieces = ad::affine(x, g.parameter(ma.slopes), g.parameter(ma.intercepts));
  ad::Var gm = ad::group_max(pieces, ma.pieces);
  return ad::affine(gm, g.parameter(ma.combine), g.parameter(ma.bias));
}

Matrix ConvexNet::evaluate(const Matrix& x) const {
  check_input(x.cols());
  if (const auto* ic = std::get_if<IcnnParams>(&params_)) {
    const std::size_t L = ic->wx.size();
    Matrix z(x.rows(), ic->wx[0].value().rows());
    z.noalias() = x * ic->wx[0].value().transpose();
    z.rowwise() += ic->bias[0].value().row(0);
    z = activate(z, ic->activation);
    for (std::size_t k = 1; k < L; ++k) {
      Matrix h(x.rows(), ic->wx[k].value().rows());
      h.noalias() = z * ic->wz[k - 1].value().transpose();
      h.noalias() += x * ic->wx[k].value().transpose();
      h.rowwise() += ic->bias[k].value().row(0);
      z = (k + 1 < L) ? activate(h, ic->activation) : std::move(h);
    }
    return z;
  }
  const auto& ma = std::get<MaxAffineParams>(params_);
  Matrix pieces = x * ma.slopes.value().transpose();
  pieces.rowwise() += ma.intercepts.value().row(0);
  const Index groups = pieces.cols() / ma.pieces;
  Matrix gm(x.rows(), groups);
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index k = 0; k < groups; ++k) gm(r, k) = pieces.row(r).segment(k * ma.pieces, ma.pieces).maxCoeff();
  }
  Matrix out = gm * ma.combine.value().transpose();
  out.rowwise() += ma.bias.value().row(0);
  return out;
}

std::vector<Parameter*> ConvexNet::parameters() {
  std::vector<Parameter*> out;
  if (auto* ic = std::get_if<IcnnParams>(&params_)) {
    for (std::size_t k = 0; k < ic->wx.size(); ++k) {
      out.push_back(&ic->wx[k]);
      if (k > 0) out.push_back(&ic->wz[k - 1]);
      out.push_back(&ic->bias[k]);
    }
  } else {
    auto& ma = std::get<MaxAffineParams>(params_);
    out = {&ma.slopes, &ma.intercepts, &ma.combine, &ma.bias};
  }
  return out;
}

std::vector<const Parameter*> ConvexNet::parameters() const {
  auto ps = const_cast<ConvexNet*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

void ConvexNet::project_nonnegative() {
  for (Parameter* p : parameters()) {
    if (p->nonnegative) p->value() = p->value().cwiseMax(0.0);
  }
}

double ConvexNet::min_constrained_weight() const {
  double m = std::numeric_limits<double>::infinity();
  for (const Parameter* p : parameters()) {
    if (p->nonnegative && p->value().size() > 0) m = std::min(m, p->value().minCoeff());
  }
  return m;
}

ConvexityReport verify_convexity(const ConvexNet& net, const Box& domain, Index n_segments, double tol,
                                 std::uint64_t seed) {
  domain.validate();
  if (static_cast<Index>(domain.dim()) != net.input_dim()) throw ShapeError("verify_convexity: box dimension mismatch");
  ConvexityReport rep;
  rep.tol = tol;
  rep.max_violation.assign(static_cast<std::size_t>(net.output_dim()), 0.0);
  Rng rng(derive_seed(seed, streams::kVerify));
  const Index d = net.input_dim();
  constexpr Index kChunk = 4096;
  for (Index done = 0; done < n_segments; done += kChunk) {
    const Index n = std::min(kChunk, n_segments - done);
    Matrix a(n, d), b(n, d);
    for (Index i = 0; i < n; ++i) {
      domain.sample_into(rng, a, i);
      domain.sample_into(rng, b, i);
    }
    Matrix mid = 0.5 * (a + b);
    Matrix ga = net.evaluate(a), gb = net.evaluate(b), gm = net.evaluate(mid);
    for (Index i = 0; i < n; ++i) {
      for (Index p = 0; p < net.output_dim(); ++p) {
        double viol = gm(i, p) - 0.5 * (ga(i, p) + gb(i, p));
        auto& slot = rep.max_violation[static_cast<std::size_t>(p)];
        slot = std::max(slot, viol);
      }
    }
  }
  for (double v : rep.max_violation) rep.passed = rep.passed && v <= tol;
  return rep;
}

}  // namespace saddle
