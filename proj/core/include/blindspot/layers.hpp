#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>

#include "blindspot/autodiff.hpp"
#include "blindspot/tensor.hpp"

namespace blindspot {

// Weight [out, in, k, k] and bias [out] of one convolution.
struct ConvLayer {
  Tensor weight;
  Tensor bias;

  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t kernel() const { return weight.dim(2); }
};

// He-normal weights scaled by `gain`, zero bias; both marked requires_grad.
ConvLayer make_conv(std::size_t in, std::size_t out, std::size_t k, std::mt19937_64& rng,
                    double gain = 1.0);
ConvLayer zero_conv(std::size_t in, std::size_t out, std::size_t k);

Var apply_conv(ConvLayer& layer, const Var& x, const ParamBinder& bind, int dilation = 1,
               const Tensor* mask = nullptr);

using ParamVisitor = std::function<void(const std::string& name, Tensor& t)>;
using ConstParamVisitor = std::function<void(const std::string& name, const Tensor& t)>;

inline void visit_conv(const std::string& prefix, ConvLayer& layer, const ParamVisitor& fn) {
  fn(prefix + ".w", layer.weight);
  fn(prefix + ".b", layer.bias);
}
inline void visit_conv(const std::string& prefix, const ConvLayer& layer,
                       const ConstParamVisitor& fn) {
  fn(prefix + ".w", layer.weight);
  fn(prefix + ".b", layer.bias);
}

}  // namespace blindspot
