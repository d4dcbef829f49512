#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "blindspot/autodiff.hpp"
#include "blindspot/spd.hpp"
#include "blindspot/tensor.hpp"

namespace blindspot {

// Per-pixel inclusion mask over an H x W grid (1 = pixel enters the loss).
struct ValidMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> valid;

  static ValidMask all(std::size_t height, std::size_t width);
  // Excludes a border of `radius` pixels on every side.
  static ValidMask interior(std::size_t height, std::size_t width, std::size_t radius);
  std::size_t count() const;
};

// Gaussian negative log-likelihood of the residual y - mu under the summed
// covariance:  1/2 e^T (Sn + Smu)^-1 e + 1/2 log|Sn + Smu|.
// Throws NumericError when cond(Sn + Smu) > 1e12.
double nll_exact(std::span<const double> y, std::span<const double> mu, const SymMat& sigma_n,
                 const SymMat& sigma_mu);

// First-order expansion of log|Sn + Smu| around Sn:  log|Sn| + tr(Sn^-1 Smu).
double taylor_logdet(const SymMat& sigma_n, const SymMat& sigma_mu);
double exact_logdet(const SymMat& m);

// Posterior mean of the clean pixel given the observation y (covariance Sn)
// and the blind-spot prediction mu (covariance Smu):
//   (Smu + Sn)^-1 (Smu y + Sn mu).
std::array<double, 3> bayes_fuse(std::span<const double> y, std::span<const double> mu,
                                 const SymMat& sigma_n, const SymMat& sigma_mu);
Tensor bayes_fuse(const Tensor& y, const Tensor& mu, const CovField& sigma_n,
                  const CovField& sigma_mu);

struct LossTerms {
  Tensor residual;          // y - mu, [C,H,W]
  double quadratic = 0.0;   // mean of e^T (Smu + Sn)^-1 e
  double logdet = 0.0;      // mean of log|Sn|
  double trace = 0.0;       // mean of tr(Sn^-1 Smu)
  double total = 0.0;       // 1/2 (quadratic + logdet + trace)
  std::size_t valid_pixels = 0;
};

// Constrained self-supervised objective, averaged over valid pixels.
// Throws NumericError naming the first pixel whose covariances are not SPD.
LossTerms constrained_nll(const Tensor& y, const Tensor& mu, const CovField& sigma_n,
                          const CovField& sigma_mu, const ValidMask& mask);
// Differentiable version; sigma_n and sigma_mu are packed [C(C+1)/2,H,W] Vars.
Var constrained_nll(const Tensor& y, const Var& mu, const Var& sigma_n, const Var& sigma_mu,
                    const ValidMask& mask);

// Pairwise summation; the result depends only on the input order.
double pairwise_sum(std::span<const double> values);

}  // namespace blindspot
