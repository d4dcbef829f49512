#include "blindspot/noise_model.hpp"

#include <random>
#include <string>

#include "blindspot/errors.hpp"

namespace blindspot {

CnnEstParams make_cnn_est(std::size_t channels, std::uint64_t seed, double init_sigma) {
  if (channels < 1 || channels > 3) throw ConfigError("CNN_est supports 1..3 channels");
  std::mt19937_64 rng(seed);
  CnnEstParams p;
  p.channels = channels;
  p.layers[0] = make_conv(channels, kCnnEstWidth, 1, rng);
  for (std::size_t l = 1; l < 4; ++l) p.layers[l] = make_conv(kCnnEstWidth, kCnnEstWidth, 1, rng);
  p.layers[4] = make_conv(kCnnEstWidth, packed_size(channels), 1, rng, 0.01);
  for (std::size_t a = 0; a < channels; ++a) p.layers[4].bias[packed_index(a, a)] = init_sigma;
  return p;
}

void for_each_param(CnnEstParams& params, const ParamVisitor& fn) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    visit_conv("layer" + std::to_string(l), params.layers[l], fn);
  }
}

void for_each_param(const CnnEstParams& params, const ConstParamVisitor& fn) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    visit_conv("layer" + std::to_string(l), params.layers[l], fn);
  }
}

Var cnn_est_forward(Tape& /*tape*/, CnnEstParams& params, const Var& y, const ParamBinder& bind) {
  require_rank3(y.value(), "cnn_est_forward");
  if (y.value().channels() != params.channels) {
    throw DimensionError("cnn_est_forward: estimator expects " + std::to_string(params.channels) +
                         " channels, image has " + std::to_string(y.value().channels()));
  }
  Var h = y;
  for (std::size_t l = 0; l < 4; ++l) h = relu(apply_conv(params.layers[l], h, bind));
  return spd_from_factor(apply_conv(params.layers[4], h, bind));
}

CovField cnn_est_forward(const CnnEstParams& params, const Tensor& y) {
  Tape tape;
  auto& p = const_cast<CnnEstParams&>(params);
  return CovField(cnn_est_forward(tape, p, tape.constant(y), constant_binder(tape)).value());
}

TaintNode cnn_est_taint_graph() {
  std::vector<TaintNode> layers;
  for (int l = 0; l < 5; ++l) layers.push_back(TaintNode::pointwise("layer" + std::to_string(l)));
  return TaintNode::sequence(std::move(layers), "CNN_est");
}

}  // namespace blindspot
