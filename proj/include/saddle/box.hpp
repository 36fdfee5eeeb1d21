#pragma once

#include "saddle/rng.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace saddle {

/// Axis-aligned box [lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}].
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  static Box cube(std::size_t dim, double lo, double hi) {
    return Box{std::vector<double>(dim, lo), std::vector<double>(dim, hi)};
  }

  std::size_t dim() const { return lo.size(); }

  /// Nonempty, finite, matching bound vectors. Throws InputError otherwise.
  void validate() const;
  bool bounded() const;

  /// Fills row `row` of `out` with a uniform draw.
  template <class Derived>
  void sample_into(Rng& rng, Eigen::MatrixBase<Derived>& out, Eigen::Index row) const {
    for (std::size_t k = 0; k < lo.size(); ++k) {
      out(row, static_cast<Eigen::Index>(k)) = rng.uniform(lo[k], hi[k]);
    }
  }
};

}  // namespace saddle
