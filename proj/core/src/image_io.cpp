#include "blindspot/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include "blindspot/errors.hpp"

namespace blindspot {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  int ch = 0;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      if (!tok.empty()) return tok;
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) throw IoError("malformed PNM header: unexpected end of file");
  return tok;
}

std::size_t header_number(std::istream& in, const char* what) {
  const std::string tok = header_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; }) ||
      tok.size() > 9) {
    throw IoError(std::string("malformed PNM header: bad ") + what + " '" + tok + "'");
  }
  return std::stoul(tok);
}

}  // namespace

std::uint8_t quantize_8bit(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

Tensor quantize(const Tensor& t) {
  Tensor q(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) q[i] = quantize_8bit(t[i]) / 255.0;
  return q;
}

Image read_pnm(std::istream& in, const std::string& id) {
  const std::string magic = header_token(in);
  std::size_t channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw IoError("unsupported PNM magic '" + magic + "' (expected P5 or P6)");
  }
  const std::size_t width = header_number(in, "width");
  const std::size_t height = header_number(in, "height");
  const std::size_t maxval = header_number(in, "maxval");
  if (width == 0 || height == 0) throw IoError("malformed PNM header: zero image size");
  if (maxval == 0 || maxval > 65535) throw IoError("malformed PNM header: maxval out of range");
  // header_token consumed exactly one whitespace byte after maxval.
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  const std::size_t count = width * height * channels;
  std::vector<unsigned char> raw(count * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw IoError("truncated PNM payload: expected " + std::to_string(raw.size()) + " bytes, got " +
                  std::to_string(in.gcount()));
  }
  Image img;
  img.id = id;
  img.bit_depth = static_cast<int>(std::ceil(std::log2(static_cast<double>(maxval) + 1.0)));
  img.pixels = Tensor({channels, height, width});
  const double scale = static_cast<double>(maxval);
  for (std::size_t p = 0; p < width * height; ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t s = p * channels + c;
      const unsigned v = bytes_per == 1 ? raw[s] : (raw[2 * s] << 8) | raw[2 * s + 1];
      img.pixels[c * width * height + p] = static_cast<double>(v) / scale;
    }
  }
  return img;
}

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  try {
    return read_pnm(in, path.stem().string());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_pnm(std::ostream& out, const Tensor& pixels) {
  require_rank3(pixels, "write_pnm");
  const std::size_t c = pixels.channels(), h = pixels.height(), w = pixels.width();
  if (c != 1 && c != 3) throw DimensionError("write_pnm: need 1 or 3 channels, got " + std::to_string(c));
  out << (c == 1 ? "P5" : "P6") << '\n' << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> raw(c * h * w);
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t k = 0; k < c; ++k) raw[p * c + k] = quantize_8bit(pixels[k * h * w + p]);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

void save_image(const std::filesystem::path& path, const Tensor& pixels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  write_pnm(out, pixels);
  if (!out) throw IoError("failed writing image " + path.string());
}

}  // namespace blindspot
