#include "blindspot/spd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "blindspot/errors.hpp"

namespace blindspot {

std::size_t channels_from_packed(std::size_t planes) {
  for (std::size_t c = 1; c <= 3; ++c) {
    if (packed_size(c) == planes) return c;
  }
  return 0;
}

SymMat SymMat::identity(std::size_t size, double diag) {
  SymMat s(size);
  for (std::size_t a = 0; a < size; ++a) s(a, a) = diag;
  return s;
}

SymMat SymMat::operator+(const SymMat& o) const {
  if (o.n != n) throw DimensionError("SymMat size mismatch");
  SymMat r(n);
  for (std::size_t i = 0; i < 9; ++i) r.m[i] = m[i] + o.m[i];
  return r;
}

SymMat SymMat::operator*(double s) const {
  SymMat r(n);
  for (std::size_t i = 0; i < 9; ++i) r.m[i] = m[i] * s;
  return r;
}

double SymMat::trace() const {
  double t = 0.0;
  for (std::size_t a = 0; a < n; ++a) t += (*this)(a, a);
  return t;
}

InvDetTrace spd_inv_det_trace(const SymMat& s) {
  InvDetTrace r;
  r.inverse = SymMat(s.n);
  r.trace = s.trace();
  switch (s.n) {
    case 1:
      r.determinant = s(0, 0);
      break;
    case 2:
      r.determinant = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
      break;
    case 3:
      r.determinant = s(0, 0) * (s(1, 1) * s(2, 2) - s(1, 2) * s(2, 1)) -
                      s(0, 1) * (s(1, 0) * s(2, 2) - s(1, 2) * s(2, 0)) +
                      s(0, 2) * (s(1, 0) * s(2, 1) - s(1, 1) * s(2, 0));
      break;
    default:
      throw DimensionError("spd_inv_det_trace supports C in {1,2,3}, got " + std::to_string(s.n));
  }
  if (!(r.determinant > 1e-14)) {
    throw NumericError("matrix is singular or not positive definite (det = " +
                       std::to_string(r.determinant) + ")");
  }
  const double inv_det = 1.0 / r.determinant;
  SymMat& inv = r.inverse;
  if (s.n == 1) {
    inv(0, 0) = inv_det;
  } else if (s.n == 2) {
    inv(0, 0) = s(1, 1) * inv_det;
    inv(1, 1) = s(0, 0) * inv_det;
    inv(0, 1) = -s(0, 1) * inv_det;
    inv(1, 0) = -s(1, 0) * inv_det;
  } else {
    inv(0, 0) = (s(1, 1) * s(2, 2) - s(1, 2) * s(2, 1)) * inv_det;
    inv(0, 1) = (s(0, 2) * s(2, 1) - s(0, 1) * s(2, 2)) * inv_det;
    inv(0, 2) = (s(0, 1) * s(1, 2) - s(0, 2) * s(1, 1)) * inv_det;
    inv(1, 0) = (s(1, 2) * s(2, 0) - s(1, 0) * s(2, 2)) * inv_det;
    inv(1, 1) = (s(0, 0) * s(2, 2) - s(0, 2) * s(2, 0)) * inv_det;
    inv(1, 2) = (s(0, 2) * s(1, 0) - s(0, 0) * s(1, 2)) * inv_det;
    inv(2, 0) = (s(1, 0) * s(2, 1) - s(1, 1) * s(2, 0)) * inv_det;
    inv(2, 1) = (s(0, 1) * s(2, 0) - s(0, 0) * s(2, 1)) * inv_det;
    inv(2, 2) = (s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0)) * inv_det;
  }
  return r;
}

double trace_of_product(const SymMat& a, const SymMat& b) {
  double t = 0.0;
  for (std::size_t i = 0; i < a.n; ++i) {
    for (std::size_t k = 0; k < a.n; ++k) t += a(i, k) * b(k, i);
  }
  return t;
}

std::array<double, 3> mat_vec(const SymMat& a, std::span<const double> v) {
  std::array<double, 3> r{};
  for (std::size_t i = 0; i < a.n; ++i) {
    for (std::size_t k = 0; k < a.n; ++k) r[i] += a(i, k) * v[k];
  }
  return r;
}

SymMat cholesky_lower(const SymMat& s) {
  SymMat l(s.n);
  for (std::size_t j = 0; j < s.n; ++j) {
    double d = s(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) throw NumericError("Cholesky factorization failed: matrix not SPD");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < s.n; ++i) {
      double v = s(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / l(j, j);
    }
  }
  return l;
}

std::array<double, 3> eigenvalues(const SymMat& s) {
  // Cyclic Jacobi rotations; converges in a handful of sweeps for n <= 3.
  SymMat a = s;
  const std::size_t n = s.n;
  for (int sweep = 0; sweep < 50; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
      }
    }
  }
  std::array<double, 3> ev{};
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.begin(), ev.begin() + static_cast<std::ptrdiff_t>(n));
  return ev;
}

double smallest_eigenvalue(const SymMat& s) { return eigenvalues(s)[0]; }

double condition_number(const SymMat& s) {
  const auto ev = eigenvalues(s);
  if (!(ev[0] > 0.0)) return std::numeric_limits<double>::infinity();
  return ev[s.n - 1] / ev[0];
}

CovField::CovField(Tensor packed) : packed_(std::move(packed)) {
  require_rank3(packed_, "CovField");
  channels_ = channels_from_packed(packed_.dim(0));
  if (channels_ == 0) {
    throw DimensionError("CovField: " + std::to_string(packed_.dim(0)) +
                         " planes is not C(C+1)/2 for C in {1,2,3}");
  }
}

CovField::CovField(std::size_t channels, std::size_t height, std::size_t width)
    : channels_(channels), packed_({packed_size(channels), height, width}) {}

SymMat CovField::at(std::size_t pixel) const {
  SymMat s(channels_);
  const std::size_t plane = pixels();
  for (std::size_t a = 0; a < channels_; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      const double v = packed_[packed_index(a, b) * plane + pixel];
      s(a, b) = v;
      s(b, a) = v;
    }
  }
  return s;
}

void CovField::set(std::size_t pixel, const SymMat& m) {
  const std::size_t plane = pixels();
  for (std::size_t a = 0; a < channels_; ++a) {
    for (std::size_t b = 0; b <= a; ++b) packed_[packed_index(a, b) * plane + pixel] = m(a, b);
  }
}

namespace {

Tensor factor_to_spd(const Tensor& factor, std::size_t c, double eps) {
  Tensor out(factor.shape());
  const std::size_t plane = factor.dim(1) * factor.dim(2);
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t a = 0; a < c; ++a) {
      for (std::size_t b = 0; b <= a; ++b) {
        double v = (a == b) ? eps : 0.0;
        for (std::size_t k = 0; k <= b; ++k) {
          v += factor[packed_index(a, k) * plane + p] * factor[packed_index(b, k) * plane + p];
        }
        out[packed_index(a, b) * plane + p] = v;
      }
    }
  }
  return out;
}

std::size_t factor_channels(const Tensor& factor) {
  require_rank3(factor, "spd_from_factor");
  const std::size_t c = channels_from_packed(factor.dim(0));
  if (c == 0) throw DimensionError("spd_from_factor: plane count is not C(C+1)/2");
  return c;
}

}  // namespace

CovField spd_from_factor(const Tensor& factor, double eps) {
  const std::size_t c = factor_channels(factor);
  return CovField(factor_to_spd(factor, c, eps));
}

Var spd_from_factor(const Var& factor, double eps) {
  const std::size_t c = factor_channels(factor.value());
  Tensor out = factor_to_spd(factor.value(), c, eps);
  auto saved = std::make_shared<Tensor>(factor.value());
  const std::size_t f_id = factor.id();
  return factor.tape()->record(std::move(out), {f_id}, [saved, c, f_id](Tape& t, std::size_t self) {
    const std::vector<double>& g = t.adjoint(self);
    std::vector<double>& d = t.adjoint(f_id);
    const Tensor& l = *saved;
    const std::size_t plane = l.dim(1) * l.dim(2);
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t a = 0; a < c; ++a) {
        for (std::size_t b = 0; b <= a; ++b) {
          const double gab = g[packed_index(a, b) * plane + p];
          for (std::size_t k = 0; k <= b; ++k) {
            d[packed_index(a, k) * plane + p] += gab * l[packed_index(b, k) * plane + p];
            d[packed_index(b, k) * plane + p] += gab * l[packed_index(a, k) * plane + p];
          }
        }
      }
    }
  });
}

}  // namespace blindspot
