#include "blindspot/optimizer.hpp"

#include <cmath>

#include "blindspot/errors.hpp"

namespace blindspot {

double LrSchedule::at(std::size_t epoch) const {
  const double decays = static_cast<double>(epoch / step_epochs);
  return std::max(floor, initial * std::pow(factor, decays));
}

void LrSchedule::validate() const {
  if (!(initial > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(factor > 0.0 && factor <= 1.0)) throw ConfigError("lr decay factor must lie in (0, 1]");
  if (step_epochs == 0) throw ConfigError("lr decay interval must be positive");
  if (!(floor >= 0.0 && floor <= initial)) throw ConfigError("lr floor must lie in [0, initial]");
}

void Adam::step(Tensor& param, double lr) {
  State& s = state_[&param];
  const std::size_t n = param.numel();
  if (s.m.empty()) {
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
  }
  ++s.t;
  const bool has_grad = param.has_grad();
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = has_grad ? param.grad()[i] : 0.0;
    s.m[i] = b1 * s.m[i] + (1.0 - b1) * g;
    s.v[i] = b2 * s.v[i] + (1.0 - b2) * g * g;
    param[i] -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + config_.eps);
  }
}

void Adam::step(const std::vector<Tensor*>& params, double lr) {
  for (Tensor* p : params) step(*p, lr);
}

ParamBinder GradientCollector::binder(Tape& tape) {
  return [this, &tape](Tensor& p) {
    Tensor copy = p;
    copy.set_requires_grad(false);
    copy.grad().clear();
    const Var v = tape.variable(std::move(copy));
    bound_.emplace_back(&p, v);
    return v;
  };
}

void GradientCollector::collect(const Tape& tape) {
  grads_.clear();
  grads_.reserve(bound_.size());
  for (const auto& [param, var] : bound_) grads_.push_back(tape.grad(var));
}

void GradientCollector::accumulate_into_params() const {
  for (std::size_t i = 0; i < grads_.size(); ++i) bound_[i].first->accumulate_grad(grads_[i]);
}

}  // namespace blindspot
