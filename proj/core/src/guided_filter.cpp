#include "blindspot/guided_filter.hpp"

#include <algorithm>
#include <vector>

#include "blindspot/errors.hpp"

namespace blindspot {

Tensor box_mean(const Tensor& t, int radius) {
  require_rank3(t, "box_mean");
  if (radius < 0) throw ConfigError("box_mean: radius must be non-negative");
  const std::size_t h = t.height(), w = t.width();
  Tensor out(t.shape());
  // Summed-area table with a zero first row/column.
  std::vector<double> sat((h + 1) * (w + 1));
  const auto r = static_cast<std::ptrdiff_t>(radius);
  for (std::size_t c = 0; c < t.channels(); ++c) {
    std::fill(sat.begin(), sat.end(), 0.0);
    for (std::size_t i = 0; i < h; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < w; ++j) {
        row += t.at(c, i, j);
        sat[(i + 1) * (w + 1) + j + 1] = sat[i * (w + 1) + j + 1] + row;
      }
    }
    for (std::size_t i = 0; i < h; ++i) {
      const auto i0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - r));
      const std::size_t i1 = std::min(h, i + static_cast<std::size_t>(radius) + 1);
      for (std::size_t j = 0; j < w; ++j) {
        const auto j0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(j) - r));
        const std::size_t j1 = std::min(w, j + static_cast<std::size_t>(radius) + 1);
        const double s = sat[i1 * (w + 1) + j1] - sat[i0 * (w + 1) + j1] - sat[i1 * (w + 1) + j0] +
                         sat[i0 * (w + 1) + j0];
        out.at(c, i, j) = s / static_cast<double>((i1 - i0) * (j1 - j0));
      }
    }
  }
  return out;
}

Tensor guided_filter(const Tensor& input, const Tensor& guide, int radius, double eps) {
  require_rank3(input, "guided_filter input");
  require_rank3(guide, "guided_filter guide");
  if (guide.height() != input.height() || guide.width() != input.width()) {
    throw DimensionError("guided_filter: guide and input differ in spatial size");
  }
  if (guide.channels() != input.channels() && guide.channels() != 1) {
    throw DimensionError("guided_filter: guide must have 1 or C channels");
  }
  const std::size_t c = input.channels(), plane = input.height() * input.width();
  Tensor out(input.shape());
  for (std::size_t k = 0; k < c; ++k) {
    const Tensor p = slice_channels(input, k, 1);
    const Tensor g = slice_channels(guide, guide.channels() == 1 ? 0 : k, 1);
    Tensor gp(g.shape()), gg(g.shape());
    for (std::size_t i = 0; i < plane; ++i) {
      gp[i] = g[i] * p[i];
      gg[i] = g[i] * g[i];
    }
    const Tensor mean_g = box_mean(g, radius), mean_p = box_mean(p, radius);
    const Tensor mean_gp = box_mean(gp, radius), mean_gg = box_mean(gg, radius);
    Tensor a(g.shape()), b(g.shape());
    for (std::size_t i = 0; i < plane; ++i) {
      const double cov = mean_gp[i] - mean_g[i] * mean_p[i];
      const double var = mean_gg[i] - mean_g[i] * mean_g[i];
      a[i] = cov / (var + eps);
      b[i] = mean_p[i] - a[i] * mean_g[i];
    }
    const Tensor mean_a = box_mean(a, radius), mean_b = box_mean(b, radius);
    for (std::size_t i = 0; i < plane; ++i) out[k * plane + i] = mean_a[i] * g[i] + mean_b[i];
  }
  return out;
}

}  // namespace blindspot
