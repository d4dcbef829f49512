#include "blindspot/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <vector>
#include <random>

namespace blindspot {

Tensor synthetic_scene(std::size_t channels, std::size_t height, std::size_t width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double h = static_cast<double>(height), w = static_cast<double>(width);
  Tensor t({channels, height, width});
  const double base = 0.3 + 0.4 * u(rng);
  const double gy = 0.3 * (u(rng) - 0.5), gx = 0.3 * (u(rng) - 0.5);
  struct Shape {
    bool disc;
    double cy, cx, ry, rx;
    double delta[3];
  };
  std::vector<Shape> shapes(3);
  for (Shape& s : shapes) {
    s.disc = u(rng) < 0.5;
    s.cy = h * u(rng);
    s.cx = w * u(rng);
    s.ry = h * (0.1 + 0.2 * u(rng));
    s.rx = s.disc ? s.ry : w * (0.1 + 0.2 * u(rng));
    const double d = 0.4 * (u(rng) - 0.5);
    for (double& c : s.delta) c = d + 0.1 * (u(rng) - 0.5);
  }
  for (std::size_t c = 0; c < channels; ++c) {
    const double tint = channels == 1 ? 0.0 : 0.1 * (static_cast<double>(c) - 1.0);
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        const double y = static_cast<double>(i), x = static_cast<double>(j);
        double v = base + tint + gy * y / h + gx * x / w;
        for (const Shape& s : shapes) {
          const double dy = (y - s.cy) / s.ry, dx = (x - s.cx) / s.rx;
          const bool inside = s.disc ? dy * dy + dx * dx < 1.0 : std::abs(dy) < 1.0 && std::abs(dx) < 1.0;
          if (inside) v += s.delta[channels == 1 ? 0 : c];
        }
        t.at(c, i, j) = std::clamp(v, 0.1, 0.9);
      }
    }
  }
  return t;
}

}  // namespace blindspot
