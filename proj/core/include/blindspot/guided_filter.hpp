#pragma once

#include "blindspot/tensor.hpp"

namespace blindspot {

// Mean over the (2r+1) x (2r+1) window around each pixel, clipped at the
// image border and normalized by the number of pixels actually covered.
Tensor box_mean(const Tensor& t, int radius);

// Edge-preserving guided filter, per channel. `guide` has the same channel
// count as `input` or a single channel shared by all of them.
//   a = cov(I, p) / (var(I) + eps),  b = mean(p) - a mean(I),
//   q = mean(a) I + mean(b).
Tensor guided_filter(const Tensor& input, const Tensor& guide, int radius = 1, double eps = 0.01);

}  // namespace blindspot
