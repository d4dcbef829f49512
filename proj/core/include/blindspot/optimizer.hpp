#pragma once

#include <cstddef>
#include <unordered_map>
#include <utility>
#include <vector>

#include "blindspot/autodiff.hpp"
#include "blindspot/tensor.hpp"

namespace blindspot {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Step decay: initial * factor^(epoch / step_epochs), never below `floor`.
struct LrSchedule {
  double initial = 3e-4;
  double factor = 0.1;
  std::size_t step_epochs = 30;
  double floor = 3e-7;

  double at(std::size_t epoch) const;
  void validate() const;
};

// Adam with per-tensor state. Each tensor keeps its own step count, so
// tensors that skip a step (e.g. estimators of images absent from a batch)
// are bias-corrected by the number of updates they actually received.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Updates `param` from param.grad() (missing grad counts as zero).
  void step(Tensor& param, double lr);
  void step(const std::vector<Tensor*>& params, double lr);

  const AdamConfig& config() const { return config_; }

 private:
  struct State {
    std::vector<double> m, v;
    std::size_t t = 0;
  };
  AdamConfig config_;
  std::unordered_map<const Tensor*, State> state_;
};

// Binds parameters as tape-owned variables and reads their gradients back
// after backward(), so several tapes can run concurrently against the same
// parameters without sharing gradient buffers.
class GradientCollector {
 public:
  ParamBinder binder(Tape& tape);
  // Gradients of the tape's root, in binding order.
  void collect(const Tape& tape);
  // Adds the collected gradients into each parameter's grad().
  void accumulate_into_params() const;

 private:
  std::vector<std::pair<Tensor*, Var>> bound_;
  std::vector<std::vector<double>> grads_;
};

}  // namespace blindspot
