#pragma once

#include <cstdint>

#include "blindspot/tensor.hpp"

namespace blindspot {

// Piecewise-smooth test scene in [0.1, 0.9]: a tilted gradient with a few
// overlapping discs and rectangles. Deterministic in `seed`.
Tensor synthetic_scene(std::size_t channels, std::size_t height, std::size_t width, std::uint64_t seed);

}  // namespace blindspot
