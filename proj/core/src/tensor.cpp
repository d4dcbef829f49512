#include "blindspot/tensor.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "blindspot/errors.hpp"

namespace blindspot {

namespace {

constexpr std::array<char, 4> kTensorMagic = {'T', 'N', 'S', 'R'};
constexpr std::uint32_t kTensorVersion = 1;

void write_f32(std::ostream& out, float v) { write_u32(out, std::bit_cast<std::uint32_t>(v)); }

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " elements");
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_to_string(shape_));
  }
  return shape_[axis];
}

void Tensor::zero_grad() { grad_.assign(data_.size(), 0.0); }

void Tensor::accumulate_grad(std::span<const double> g) {
  if (g.size() != data_.size()) throw DimensionError("gradient size mismatch");
  if (grad_.empty()) grad_.assign(data_.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) grad_[i] += g[i];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_rank3(const Tensor& t, const char* what) {
  if (t.rank() != 3) {
    throw DimensionError(std::string(what) + ": expected [C,H,W], got " +
                         shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

Tensor slice_channels(const Tensor& t, std::size_t begin, std::size_t count) {
  require_rank3(t, "slice_channels");
  if (begin + count > t.channels()) throw DimensionError("slice_channels: range out of bounds");
  const std::size_t plane = t.height() * t.width();
  Tensor out({count, t.height(), t.width()});
  std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(begin * plane), count * plane,
              out.data().begin());
  return out;
}

namespace {

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t k = i % period;
  if (k < 0) k += period;
  return static_cast<std::size_t>(k < static_cast<std::ptrdiff_t>(n) ? k : period - k);
}

}  // namespace

Tensor reflect_pad(const Tensor& t, std::size_t top, std::size_t bottom, std::size_t left,
                   std::size_t right) {
  require_rank3(t, "reflect_pad");
  const std::size_t h = t.height(), w = t.width();
  Tensor out({t.channels(), h + top + bottom, w + left + right});
  for (std::size_t c = 0; c < t.channels(); ++c) {
    for (std::size_t i = 0; i < out.height(); ++i) {
      const std::size_t si = reflect_index(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(top), h);
      for (std::size_t j = 0; j < out.width(); ++j) {
        out.at(c, i, j) =
            t.at(c, si, reflect_index(static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(left), w));
      }
    }
  }
  return out;
}

Tensor crop(const Tensor& t, std::size_t top, std::size_t left, std::size_t height,
            std::size_t width) {
  require_rank3(t, "crop");
  if (top + height > t.height() || left + width > t.width()) {
    throw DimensionError("crop window exceeds tensor bounds");
  }
  Tensor out({t.channels(), height, width});
  for (std::size_t c = 0; c < t.channels(); ++c) {
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) out.at(c, i, j) = t.at(c, top + i, left + j);
    }
  }
  return out;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> bytes = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                     static_cast<char>((v >> 16) & 0xff),
                                     static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes.data(), 4);
}

std::uint32_t read_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) throw IoError("unexpected end of stream");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const std::uint32_t n = read_u32(in);
  if (n > (1u << 20)) throw IoError("string record too long");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw IoError("truncated string record");
  return s;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kTensorMagic.data(), 4);
  write_u32(out, kTensorVersion);
  write_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) write_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) write_f32(out, static_cast<float>(v));
  if (!out) throw IoError("failed writing tensor");
}

Tensor read_tensor(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || magic != kTensorMagic) throw IoError("bad tensor magic");
  if (read_u32(in) != kTensorVersion) throw IoError("unsupported tensor version");
  const std::uint32_t rank = read_u32(in);
  if (rank > 8) throw IoError("tensor rank too large");
  Shape shape(rank);
  for (auto& d : shape) d = read_u32(in);
  const std::size_t n = shape_numel(shape);
  if (n > (std::size_t{1} << 31)) throw IoError("tensor payload too large");
  std::vector<double> data(n);
  for (auto& v : data) v = static_cast<double>(std::bit_cast<float>(read_u32(in)));
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace blindspot
