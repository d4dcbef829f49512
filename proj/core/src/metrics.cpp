#include "blindspot/metrics.hpp"

#include <cmath>
#include <string>

#include "blindspot/errors.hpp"
#include "blindspot/image_io.hpp"
#include "blindspot/loss.hpp"

namespace blindspot {

double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  if (a.numel() == 0) throw DimensionError("mse: empty images");
  std::vector<double> sq(a.numel());
  for (std::size_t i = 0; i < a.numel(); ++i) sq[i] = (a[i] - b[i]) * (a[i] - b[i]);
  return pairwise_sum(sq) / static_cast<double>(a.numel());
}

double psnr(const Tensor& ref, const Tensor& test, bool quantized) {
  const double e = quantized ? mse(quantize(ref), quantize(test)) : mse(ref, test);
  if (e <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(e));
}

double ssim(const Tensor& ref, const Tensor& test, std::size_t window, double k1, double k2) {
  require_rank3(ref, "ssim");
  require_same_shape(ref, test, "ssim");
  if (window == 0 || ref.height() < window || ref.width() < window) {
    throw DimensionError("ssim: image " + shape_to_string(ref.shape()) + " smaller than window " +
                         std::to_string(window));
  }
  const double c1 = k1 * k1, c2 = k2 * k2;
  const double n = static_cast<double>(window * window);
  double total = 0.0;
  std::size_t tiles = 0;
  for (std::size_t c = 0; c < ref.channels(); ++c) {
    for (std::size_t ti = 0; ti + window <= ref.height(); ti += window) {
      for (std::size_t tj = 0; tj + window <= ref.width(); tj += window) {
        double sx = 0, sy = 0;
        for (std::size_t i = ti; i < ti + window; ++i) {
          for (std::size_t j = tj; j < tj + window; ++j) {
            sx += ref.at(c, i, j);
            sy += test.at(c, i, j);
          }
        }
        const double mx = sx / n, my = sy / n;
        double vx = 0, vy = 0, cxy = 0;
        for (std::size_t i = ti; i < ti + window; ++i) {
          for (std::size_t j = tj; j < tj + window; ++j) {
            const double dx = ref.at(c, i, j) - mx, dy = test.at(c, i, j) - my;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
          }
        }
        vx /= n;
        vy /= n;
        cxy /= n;
        total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++tiles;
      }
    }
  }
  return total / static_cast<double>(tiles);
}

}  // namespace blindspot
