#pragma once

#include "saddle/autodiff.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace saddle::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Throws InputError when a field is outside its admissible range.
  void validate() const;
};

/// Registry of named parameters plus their Adam moments. The store does not
/// own the parameters; they must outlive it and must not move.
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(const std::vector<Parameter*>& params);

  void add(Parameter& p);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return entries_.size(); }
  std::int64_t step_count() const { return step_; }

  const Matrix& first_moment(const std::string& name) const;
  const Matrix& second_moment(const std::string& name) const;

  /// One bias-corrected Adam update over every parameter holding a gradient,
  /// then clears the gradients. Parameters without a pending gradient are
  /// left untouched. Throws NumericalError naming the first parameter whose
  /// gradient is not finite (before any parameter is modified).
  void adam_step(const AdamConfig& config);

  /// Clears all pending gradients without updating.
  void zero_grad();

 private:
  struct Entry {
    Parameter* param;
    Matrix m;
    Matrix v;
  };

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::int64_t step_ = 0;
};

/// Free-function form of ParamStore::adam_step.
void adam_step(ParamStore& store, const AdamConfig& config);

}  // namespace saddle::ad
