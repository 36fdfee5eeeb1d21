#include "saddle/adam.hpp"

#include "saddle/errors.hpp"

#include <cmath>

namespace saddle::ad {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InputError("adam: learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw InputError("adam: beta1 must lie in (0,1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw InputError("adam: beta2 must lie in (0,1)");
  if (!(epsilon > 0.0)) throw InputError("adam: epsilon must be > 0");
}

ParamStore::ParamStore(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) add(*p);
}

void ParamStore::add(Parameter& p) {
  if (index_.count(p.name) != 0) throw InputError("ParamStore: duplicate parameter name '" + p.name + "'");
  index_[p.name] = entries_.size();
  entries_.push_back({&p, Matrix::Zero(p.value().rows(), p.value().cols()),
                      Matrix::Zero(p.value().rows(), p.value().cols())});
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InputError("ParamStore: unknown parameter '" + name + "'");
  return *entries_[it->second].param;
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InputError("ParamStore: unknown parameter '" + name + "'");
  return *entries_[it->second].param;
}

const Matrix& ParamStore::first_moment(const std::string& name) const {
  return entries_[index_.at(name)].m;
}

const Matrix& ParamStore::second_moment(const std::string& name) const {
  return entries_[index_.at(name)].v;
}

void ParamStore::adam_step(const AdamConfig& c) {
  for (const Entry& e : entries_) {
    if (e.param->has_grad && !e.param->grad.allFinite()) {
      throw NumericalError("adam: non-finite gradient in parameter '" + e.param->name + "'");
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (Entry& e : entries_) {
    Parameter& p = *e.param;
    if (!p.has_grad) continue;
    const auto g = p.grad.array();
    e.m.array() = c.beta1 * e.m.array() + (1.0 - c.beta1) * g;
    e.v.array() = c.beta2 * e.v.array() + (1.0 - c.beta2) * g.square();
    p.value().array() -= c.learning_rate * (e.m.array() / bc1) / ((e.v.array() / bc2).sqrt() + c.epsilon);
    p.clear_grad();
  }
}

void ParamStore::zero_grad() {
  for (Entry& e : entries_) e.param->clear_grad();
}

void adam_step(ParamStore& store, const AdamConfig& config) { store.adam_step(config); }

}  // namespace saddle::ad
