#include "blindspot/layers.hpp"

#include <cmath>

namespace blindspot {

ConvLayer make_conv(std::size_t in, std::size_t out, std::size_t k, std::mt19937_64& rng,
                    double gain) {
  ConvLayer layer = zero_conv(in, out, k);
  const double stddev = gain * std::sqrt(2.0 / static_cast<double>(in * k * k));
  std::normal_distribution<double> normal(0.0, stddev);
  for (double& w : layer.weight.data()) w = normal(rng);
  return layer;
}

ConvLayer zero_conv(std::size_t in, std::size_t out, std::size_t k) {
  ConvLayer layer{Tensor({out, in, k, k}), Tensor({out})};
  layer.weight.set_requires_grad(true);
  layer.bias.set_requires_grad(true);
  return layer;
}

Var apply_conv(ConvLayer& layer, const Var& x, const ParamBinder& bind, int dilation,
               const Tensor* mask) {
  return conv2d(x, bind(layer.weight), bind(layer.bias), dilation, mask);
}

}  // namespace blindspot
