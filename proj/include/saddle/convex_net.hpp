#pragma once

// Multi-output networks that are convex in their input, channel by channel.
//
// ICNN: z_1 = act(Wx_0 x + b_0), z_{k+1} = act(Wz_k z_k + Wx_k x + b_k), and a
// linear read-out g = Wz_L z_L + Wx_L x + b_L. The Wz weights are kept >= 0
// and act is convex nondecreasing, so every output channel is convex in x.
//
// Max-affine: g_p(x) = sum_g W_pg max_k (s_gk . x + c_gk) + b_p with W >= 0.

#include "saddle/autodiff.hpp"
#include "saddle/box.hpp"
#include "saddle/rng.hpp"

#include <string>
#include <variant>
#include <vector>

namespace saddle {

using ad::Index;
using ad::Matrix;
using ad::Parameter;

enum class Activation { Softplus, Relu };
enum class Primitive { Icnn, MaxAffine };

const char* to_string(Activation a);
const char* to_string(Primitive p);
Activation parse_activation(const std::string& s);
Primitive parse_primitive(const std::string& s);

struct IcnnSpec {
  std::vector<Index> hidden{32, 32, 32};
  Activation activation = Activation::Softplus;
};

struct MaxAffineSpec {
  Index groups = 16;
  Index pieces = 8;
};

struct IcnnParams {
  std::vector<Parameter> wx;    // L+1 passthrough weights, (width_k x d)
  std::vector<Parameter> wz;    // L hidden weights, wz[k] maps layer k to k+1, >= 0
  std::vector<Parameter> bias;  // L+1 biases, (1 x width_k)
  Activation activation = Activation::Softplus;
};

struct MaxAffineParams {
  Parameter slopes;      // (groups*pieces x d)
  Parameter intercepts;  // (1 x groups*pieces)
  Parameter combine;     // (P x groups), >= 0
  Parameter bias;        // (1 x P)
  Index pieces = 1;
};

class ConvexNet {
 public:
  ConvexNet() = default;

  /// ICNN with the given hidden widths. Passthrough weights ~ U(-1/sqrt(d), 1/sqrt(d));
  /// hidden weights are the absolute value of U(-1/fan_in, 1/fan_in); biases 0.
  static ConvexNet icnn(Index input_dim, Index outputs, const IcnnSpec& spec, Rng& rng,
                        const std::string& prefix = "net");
  static ConvexNet max_affine(Index input_dim, Index outputs, const MaxAffineSpec& spec, Rng& rng,
                              const std::string& prefix = "net");

  Index input_dim() const { return input_dim_; }
  Index output_dim() const { return output_dim_; }
  Primitive primitive() const;

  /// Differentiable forward on a batch (rows are points).
  ad::Var forward(ad::Graph& g, const ad::Var& x);
  /// Plain evaluation, batch x P.
  Matrix evaluate(const Matrix& x) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  /// Clamps every sign-constrained weight to max(w, 0).
  void project_nonnegative();
  /// Smallest entry over all sign-constrained weights (+inf if none).
  double min_constrained_weight() const;

  std::variant<IcnnParams, MaxAffineParams>& params() { return params_; }
  const std::variant<IcnnParams, MaxAffineParams>& params() const { return params_; }

  /// Assembles a network from explicit parameters (used by checkpoint loading and tests).
  static ConvexNet from_params(Index input_dim, Index outputs, std::variant<IcnnParams, MaxAffineParams> p);

 private:
  void check_input(Index cols) const;

  Index input_dim_ = 0;
  Index output_dim_ = 0;
  std::variant<IcnnParams, MaxAffineParams> params_;
};

struct ConvexityReport {
  std::vector<double> max_violation;  // per output channel
  double tol = 0.0;
  bool passed = true;
};

/// Samples n_segments random segments [a, b] in the box and records, per
/// channel, max(0, g((a+b)/2) - (g(a)+g(b))/2).
ConvexityReport verify_convexity(const ConvexNet& net, const Box& domain, Index n_segments, double tol,
                                 std::uint64_t seed = 0);

}  // namespace saddle
