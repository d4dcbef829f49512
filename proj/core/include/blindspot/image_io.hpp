#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "blindspot/tensor.hpp"

namespace blindspot {

// Pixels in [0, 1] as [C,H,W] (C = 1 for PGM, 3 for PPM). Values outside the
// range are kept during computation and clamped only when saved.
struct Image {
  Tensor pixels;
  int bit_depth = 8;
  std::string id;
};

// Binary PGM (P5) / PPM (P6). Maxval up to 65535 is accepted on load
// (two-byte big-endian samples above 255); saving always writes 8 bits.
Image read_pnm(std::istream& in, const std::string& id = {});
Image load_image(const std::filesystem::path& path);

void write_pnm(std::ostream& out, const Tensor& pixels);
void save_image(const std::filesystem::path& path, const Tensor& pixels);

// Round-half-up to the 8-bit grid, clamped to [0, 1].
std::uint8_t quantize_8bit(double v);
Tensor quantize(const Tensor& t);

}  // namespace blindspot
