#pragma once

#include <array>
#include <cstddef>
#include <span>

#include "blindspot/autodiff.hpp"
#include "blindspot/tensor.hpp"

namespace blindspot {

// Number of packed entries of a symmetric C x C matrix.
constexpr std::size_t packed_size(std::size_t c) { return c * (c + 1) / 2; }
// Packed index of entry (a, b), lower triangle row-major: (0,0) (1,0) (1,1) (2,0) ...
constexpr std::size_t packed_index(std::size_t a, std::size_t b) {
  return a >= b ? a * (a + 1) / 2 + b : b * (b + 1) / 2 + a;
}
// Channel count C from a packed plane count, or 0 if it is not triangular.
std::size_t channels_from_packed(std::size_t planes);

// Small dense symmetric matrix, C <= 3, full storage.
struct SymMat {
  std::size_t n = 1;
  std::array<double, 9> m{};

  SymMat() = default;
  explicit SymMat(std::size_t size) : n(size) {}
  static SymMat identity(std::size_t size, double diag = 1.0);

  double& operator()(std::size_t a, std::size_t b) { return m[a * 3 + b]; }
  double operator()(std::size_t a, std::size_t b) const { return m[a * 3 + b]; }

  SymMat operator+(const SymMat& o) const;
  SymMat operator*(double s) const;
  double trace() const;
};

struct InvDetTrace {
  SymMat inverse;
  double determinant = 0.0;
  double trace = 0.0;
};

// Closed-form (adjugate) inverse, determinant and trace for C in {1,2,3}.
// Throws NumericError when det <= 1e-14.
InvDetTrace spd_inv_det_trace(const SymMat& m);

// tr(A B).
double trace_of_product(const SymMat& a, const SymMat& b);
std::array<double, 3> mat_vec(const SymMat& a, std::span<const double> v);

// Lower Cholesky factor of an SPD matrix; throws NumericError if not SPD.
SymMat cholesky_lower(const SymMat& m);
std::array<double, 3> eigenvalues(const SymMat& m);  // ascending, first n valid
double smallest_eigenvalue(const SymMat& m);
// lambda_max / lambda_min; +inf when lambda_min <= 0.
double condition_number(const SymMat& m);

// Per-pixel C x C symmetric matrices stored as packed planes [C(C+1)/2, H, W].
class CovField {
 public:
  CovField() = default;
  explicit CovField(Tensor packed);
  CovField(std::size_t channels, std::size_t height, std::size_t width);

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return packed_.dim(1); }
  std::size_t width() const { return packed_.dim(2); }
  std::size_t pixels() const { return height() * width(); }

  SymMat at(std::size_t pixel) const;
  void set(std::size_t pixel, const SymMat& m);

  const Tensor& packed() const { return packed_; }
  Tensor& packed() { return packed_; }

 private:
  std::size_t channels_ = 0;
  Tensor packed_;
};

inline constexpr double kPsdEpsilon = 1e-6;

// Builds Sigma = L L^T + eps I per pixel from the raw lower-triangular factor
// planes [C(C+1)/2, H, W] (same packing). Differentiable.
Var spd_from_factor(const Var& factor, double eps = kPsdEpsilon);
CovField spd_from_factor(const Tensor& factor, double eps = kPsdEpsilon);

}  // namespace blindspot
