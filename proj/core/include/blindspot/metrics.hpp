#pragma once

#include "blindspot/tensor.hpp"

namespace blindspot {

inline constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE) on [0, 1] data, capped at kPsnrCap. With `quantized`
// both images are first rounded to the 8-bit grid.
double psnr(const Tensor& ref, const Tensor& test, bool quantized = false);

// Mean SSIM over non-overlapping window x window tiles of every channel
// (dynamic range 1). Partial tiles at the right/bottom edge are skipped.
double ssim(const Tensor& ref, const Tensor& test, std::size_t window = 8, double k1 = 0.01,
            double k2 = 0.03);

double mse(const Tensor& a, const Tensor& b);

}  // namespace blindspot
