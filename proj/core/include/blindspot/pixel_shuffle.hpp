#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "blindspot/tensor.hpp"

namespace blindspot {

inline constexpr std::size_t kShuffleFactor = 4;

// Phase decomposition of an image: sub-image (dy, dx) holds source pixels
// (f*i + dy, f*j + dx). Phases are grouped by their Bayer position
// (dy mod 2, dx mod 2).
struct SubImageSet {
  std::size_t factor = kShuffleFactor;
  std::size_t height = 0;  // original (unpadded) size
  std::size_t width = 0;
  std::vector<Tensor> subs;  // index dy * factor + dx

  static std::size_t group_of(std::size_t dy, std::size_t dx) { return (dy % 2) * 2 + dx % 2; }
  std::size_t group_of_index(std::size_t index) const {
    return group_of(index / factor, index % factor);
  }
  // Sub-image indices of each of the four Bayer groups.
  std::array<std::vector<std::size_t>, 4> groups() const;
};

// Lossless rearrangement. Sizes not divisible by the factor are reflect-padded
// at the bottom/right; ps_up crops the padding away again.
SubImageSet ps_down(const Tensor& y, std::size_t factor = kShuffleFactor);
Tensor ps_up(const SubImageSet& subs);

}  // namespace blindspot
