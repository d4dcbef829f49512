#include "blindspot/pixel_shuffle.hpp"

#include <string>

#include "blindspot/errors.hpp"

namespace blindspot {

namespace {

std::size_t round_up(std::size_t v, std::size_t f) { return (v + f - 1) / f * f; }

}  // namespace

std::array<std::vector<std::size_t>, 4> SubImageSet::groups() const {
  std::array<std::vector<std::size_t>, 4> g;
  for (std::size_t i = 0; i < subs.size(); ++i) g[group_of_index(i)].push_back(i);
  return g;
}

SubImageSet ps_down(const Tensor& y, std::size_t factor) {
  require_rank3(y, "ps_down");
  if (factor == 0) throw ConfigError("ps_down: factor must be positive");
  SubImageSet set;
  set.factor = factor;
  set.height = y.height();
  set.width = y.width();
  const std::size_t ph = round_up(y.height(), factor), pw = round_up(y.width(), factor);
  const Tensor padded =
      (ph == y.height() && pw == y.width()) ? y : reflect_pad(y, 0, ph - y.height(), 0, pw - y.width());
  const std::size_t sh = ph / factor, sw = pw / factor, c = y.channels();
  for (std::size_t dy = 0; dy < factor; ++dy) {
    for (std::size_t dx = 0; dx < factor; ++dx) {
      Tensor sub({c, sh, sw});
      for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t i = 0; i < sh; ++i) {
          for (std::size_t j = 0; j < sw; ++j) sub.at(k, i, j) = padded.at(k, factor * i + dy, factor * j + dx);
        }
      }
      set.subs.push_back(std::move(sub));
    }
  }
  return set;
}

Tensor ps_up(const SubImageSet& set) {
  const std::size_t f = set.factor;
  if (f == 0 || set.subs.size() != f * f) {
    throw DimensionError("ps_up: expected " + std::to_string(f * f) + " sub-images, got " +
                         std::to_string(set.subs.size()));
  }
  const Shape& ref = set.subs.front().shape();
  if (ref.size() != 3) throw DimensionError("ps_up: sub-images must be [C,H,W]");
  for (const Tensor& s : set.subs) {
    if (s.shape() != ref) {
      throw DimensionError("ps_up: inconsistent sub-image shapes " + shape_to_string(ref) + " vs " +
                           shape_to_string(s.shape()));
    }
  }
  const std::size_t c = ref[0], sh = ref[1], sw = ref[2];
  if (set.height > sh * f || set.width > sw * f || set.height + f <= sh * f ||
      set.width + f <= sw * f) {
    throw DimensionError("ps_up: sub-image size inconsistent with the recorded image size");
  }
  Tensor out({c, set.height, set.width});
  for (std::size_t dy = 0; dy < f; ++dy) {
    for (std::size_t dx = 0; dx < f; ++dx) {
      const Tensor& sub = set.subs[dy * f + dx];
      for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t i = 0; i < sh; ++i) {
          const std::size_t r = f * i + dy;
          if (r >= set.height) break;
          for (std::size_t j = 0; j < sw; ++j) {
            const std::size_t col = f * j + dx;
            if (col >= set.width) break;
            out.at(k, r, col) = sub.at(k, i, j);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace blindspot
