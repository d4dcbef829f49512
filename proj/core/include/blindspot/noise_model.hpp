#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>

#include "blindspot/autodiff.hpp"
#include "blindspot/layers.hpp"
#include "blindspot/spd.hpp"
#include "blindspot/taint.hpp"

namespace blindspot {

// Image-specific noise estimator: five 1x1 convs of 16 channels, ReLU after
// all but the last, emitting the packed Cholesky factor of a per-pixel C x C
// covariance. Every output pixel is a function of the same input pixel only.
struct CnnEstParams {
  std::size_t channels = 1;
  std::array<ConvLayer, 5> layers;
};

inline constexpr std::size_t kCnnEstWidth = 16;

// `init_sigma` (normalized units) sets the initial output to roughly
// init_sigma^2 * I, so training starts near a sensible noise level.
CnnEstParams make_cnn_est(std::size_t channels, std::uint64_t seed, double init_sigma = 0.05);

void for_each_param(CnnEstParams& params, const ParamVisitor& fn);
void for_each_param(const CnnEstParams& params, const ConstParamVisitor& fn);

// Packed per-pixel covariance Var [C(C+1)/2, H, W].
Var cnn_est_forward(Tape& tape, CnnEstParams& params, const Var& y, const ParamBinder& bind);
CovField cnn_est_forward(const CnnEstParams& params, const Tensor& y);
TaintNode cnn_est_taint_graph();

// Noise level functions. Parameters are quoted on the 0-255 scale and
// applied to intensities in [0, 1].
struct AwgnNoise {
  double sigma = 25.0;
};
struct HeteroscedasticNoise {
  double alpha = 40.0;
  double delta = 10.0;
};
struct MultivariateNoise {
  SymMat covariance;  // normalized units
};
struct LearnedNoise {
  const CnnEstParams* estimator = nullptr;
};

struct NoiseLevelFunction {
  std::variant<AwgnNoise, HeteroscedasticNoise, MultivariateNoise, LearnedNoise> model;

  void validate() const;
  std::string describe() const;
};

// Variance of heteroscedastic noise at normalized intensity x:
// (alpha^2 x + delta^2) / 255^2.
double hg_variance(double alpha, double delta, double x);

// Smallest AWGN sigma actually used; sigma = 0 means "no noise" in the limit.
inline constexpr double kMinAwgnSigma = 1e-12;

// y = x + g(x) * n0 with n0 ~ N(0, I) per pixel; no clipping.
Tensor synthesize(const NoiseLevelFunction& nlf, const Tensor& x, std::uint64_t seed);

// Sigma = scale^2 U Lambda U^T / 255^2, U a random orthonormal matrix (QR of a
// Gaussian matrix), Lambda diagonal with entries uniform in (0, 1).
SymMat sample_mg_covariance(double scale, std::uint64_t seed, std::size_t channels = 3);
SymMat mg_covariance(double scale, const SymMat& orthonormal, std::span<const double> lambda);
SymMat random_orthonormal(std::size_t n, std::mt19937_64& rng);

// Noise from the estimator evaluated on the clean image x:
// y~ = x + L_i n0_i with L_i L_i^T = Sigma^n_i.
Tensor apply_learned_nlf(const CnnEstParams& params, const Tensor& x, std::uint64_t seed);

// "awgn:sigma=25", "hg:alpha=40,delta=10", "mg:scale=75,seed=7".
NoiseLevelFunction parse_nlf_spec(const std::string& spec, std::size_t channels = 3);

// Robust per-image noise sigma (normalized units) from the median absolute
// deviation of horizontal differences.
double estimate_noise_sigma(const Tensor& y);

}  // namespace blindspot
