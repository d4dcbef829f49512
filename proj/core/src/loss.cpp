#include "blindspot/loss.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "blindspot/errors.hpp"

namespace blindspot {

ValidMask ValidMask::all(std::size_t height, std::size_t width) {
  return ValidMask{height, width, std::vector<std::uint8_t>(height * width, 1)};
}

ValidMask ValidMask::interior(std::size_t height, std::size_t width, std::size_t radius) {
  ValidMask m{height, width, std::vector<std::uint8_t>(height * width, 0)};
  for (std::size_t i = radius; i + radius < height; ++i) {
    for (std::size_t j = radius; j + radius < width; ++j) m.valid[i * width + j] = 1;
  }
  return m;
}

std::size_t ValidMask::count() const {
  std::size_t n = 0;
  for (auto v : valid) n += v ? 1 : 0;
  return n;
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

double exact_logdet(const SymMat& m) { return std::log(spd_inv_det_trace(m).determinant); }

double nll_exact(std::span<const double> y, std::span<const double> mu, const SymMat& sigma_n,
                 const SymMat& sigma_mu) {
  const SymMat a = sigma_n + sigma_mu;
  if (y.size() != a.n || mu.size() != a.n) throw DimensionError("nll_exact: vector size mismatch");
  if (condition_number(a) > 1e12) throw NumericError("nll_exact: covariance sum is singular");
  const InvDetTrace idt = spd_inv_det_trace(a);
  std::array<double, 3> e{};
  for (std::size_t c = 0; c < a.n; ++c) e[c] = y[c] - mu[c];
  const auto v = mat_vec(idt.inverse, std::span<const double>(e.data(), a.n));
  double q = 0.0;
  for (std::size_t c = 0; c < a.n; ++c) q += e[c] * v[c];
  return 0.5 * q + 0.5 * std::log(idt.determinant);
}

double taylor_logdet(const SymMat& sigma_n, const SymMat& sigma_mu) {
  const InvDetTrace idt = spd_inv_det_trace(sigma_n);
  return std::log(idt.determinant) + trace_of_product(idt.inverse, sigma_mu);
}

std::array<double, 3> bayes_fuse(std::span<const double> y, std::span<const double> mu,
                                 const SymMat& sigma_n, const SymMat& sigma_mu) {
  const std::size_t c = sigma_n.n;
  if (y.size() != c || mu.size() != c) throw DimensionError("bayes_fuse: vector size mismatch");
  // Equivalent form mu + (Smu + Sn)^-1 Smu (y - mu); returns mu exactly when Smu = 0.
  const InvDetTrace idt = spd_inv_det_trace(sigma_mu + sigma_n);
  std::array<double, 3> e{};
  for (std::size_t k = 0; k < c; ++k) e[k] = y[k] - mu[k];
  const auto w = mat_vec(sigma_mu, std::span<const double>(e.data(), c));
  const auto step = mat_vec(idt.inverse, std::span<const double>(w.data(), c));
  std::array<double, 3> x{};
  for (std::size_t k = 0; k < c; ++k) x[k] = mu[k] + step[k];
  return x;
}

namespace {

void check_fields(const Tensor& y, const Tensor& mu, std::size_t sn_planes, std::size_t smu_planes,
                  const Shape& sn_shape, const ValidMask& mask) {
  require_rank3(y, "constrained_nll y");
  require_same_shape(y, mu, "constrained_nll y/mu");
  const std::size_t c = y.channels();
  if (c > 3) throw DimensionError("constrained_nll supports C <= 3");
  if (sn_planes != packed_size(c) || smu_planes != packed_size(c)) {
    throw DimensionError("constrained_nll: covariance planes do not match C=" + std::to_string(c));
  }
  if (sn_shape[1] != y.height() || sn_shape[2] != y.width()) {
    throw DimensionError("constrained_nll: covariance field size mismatch");
  }
  if (mask.height != y.height() || mask.width != y.width()) {
    throw DimensionError("constrained_nll: mask size mismatch");
  }
  if (mask.count() == 0) throw ConfigError("constrained_nll: mask selects no pixels");
}

std::string pixel_name(std::size_t p, std::size_t width) {
  return "(" + std::to_string(p / width) + "," + std::to_string(p % width) + ")";
}

struct PixelEval {
  double quadratic, logdet, trace;
  std::array<double, 3> v;  // (Smu + Sn)^-1 e
  SymMat sn_inv;
};

PixelEval eval_pixel(const std::array<double, 3>& e, const SymMat& sn, const SymMat& smu,
                     std::size_t p, std::size_t width) {
  try {
    const InvDetTrace sum = spd_inv_det_trace(sn + smu);
    const InvDetTrace n = spd_inv_det_trace(sn);
    if (sn.n > 1) cholesky_lower(sn);
    PixelEval r{};
    r.v = mat_vec(sum.inverse, std::span<const double>(e.data(), sn.n));
    for (std::size_t c = 0; c < sn.n; ++c) r.quadratic += e[c] * r.v[c];
    r.logdet = std::log(n.determinant);
    r.trace = trace_of_product(n.inverse, smu);
    r.sn_inv = n.inverse;
    return r;
  } catch (const NumericError& err) {
    throw NumericError("constrained_nll: covariance not SPD at pixel " + pixel_name(p, width) +
                       ": " + err.what());
  }
}

}  // namespace

LossTerms constrained_nll(const Tensor& y, const Tensor& mu, const CovField& sigma_n,
                          const CovField& sigma_mu, const ValidMask& mask) {
  check_fields(y, mu, sigma_n.packed().dim(0), sigma_mu.packed().dim(0), sigma_n.packed().shape(),
               mask);
  const std::size_t c = y.channels(), plane = y.height() * y.width();
  LossTerms terms;
  terms.residual = Tensor(y.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) terms.residual[i] = y[i] - mu[i];
  std::vector<double> q, l, t;
  for (std::size_t p = 0; p < plane; ++p) {
    if (!mask.valid[p]) continue;
    std::array<double, 3> e{};
    for (std::size_t k = 0; k < c; ++k) e[k] = terms.residual[k * plane + p];
    const PixelEval ev = eval_pixel(e, sigma_n.at(p), sigma_mu.at(p), p, y.width());
    q.push_back(ev.quadratic);
    l.push_back(ev.logdet);
    t.push_back(ev.trace);
  }
  const auto n = static_cast<double>(q.size());
  terms.valid_pixels = q.size();
  terms.quadratic = pairwise_sum(q) / n;
  terms.logdet = pairwise_sum(l) / n;
  terms.trace = pairwise_sum(t) / n;
  terms.total = 0.5 * (terms.quadratic + terms.logdet + terms.trace);
  return terms;
}

Var constrained_nll(const Tensor& y, const Var& mu, const Var& sigma_n, const Var& sigma_mu,
                    const ValidMask& mask) {
  if (mu.tape() != sigma_n.tape() || mu.tape() != sigma_mu.tape()) {
    throw ConfigError("constrained_nll: operands on different tapes");
  }
  const CovField sn(sigma_n.value());
  const CovField smu(sigma_mu.value());
  check_fields(y, mu.value(), sn.packed().dim(0), smu.packed().dim(0), sn.packed().shape(), mask);
  const std::size_t c = y.channels(), plane = y.height() * y.width();
  const double scale = 0.5 / static_cast<double>(mask.count());

  // Per-pixel partials, written straight into gradient buffers.
  auto d_mu = std::make_shared<std::vector<double>>(mu.value().numel(), 0.0);
  auto d_sn = std::make_shared<std::vector<double>>(sn.packed().numel(), 0.0);
  auto d_smu = std::make_shared<std::vector<double>>(smu.packed().numel(), 0.0);
  std::vector<double> per_pixel;
  per_pixel.reserve(mask.count());

  for (std::size_t p = 0; p < plane; ++p) {
    if (!mask.valid[p]) continue;
    std::array<double, 3> e{};
    for (std::size_t k = 0; k < c; ++k) e[k] = y[k * plane + p] - mu.value()[k * plane + p];
    const SymMat sn_p = sn.at(p), smu_p = smu.at(p);
    const PixelEval ev = eval_pixel(e, sn_p, smu_p, p, y.width());
    per_pixel.push_back(ev.quadratic + ev.logdet + ev.trace);

    // d/dmu = -2 A^-1 e ; d/dA = -v v^T ; d/dSn (logdet + trace) = Sn^-1 - Sn^-1 Smu Sn^-1.
    for (std::size_t k = 0; k < c; ++k) (*d_mu)[k * plane + p] = -2.0 * scale * ev.v[k];
    SymMat b_smu_b(c);
    for (std::size_t a = 0; a < c; ++a) {
      for (std::size_t b = 0; b < c; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
          for (std::size_t j = 0; j < c; ++j) s += ev.sn_inv(a, i) * smu_p(i, j) * ev.sn_inv(j, b);
        }
        b_smu_b(a, b) = s;
      }
    }
    for (std::size_t a = 0; a < c; ++a) {
      for (std::size_t b = 0; b <= a; ++b) {
        const double mult = (a == b) ? 1.0 : 2.0;  // packed off-diagonals stand for two entries
        const double quad = -ev.v[a] * ev.v[b];
        const std::size_t idx = packed_index(a, b) * plane + p;
        (*d_sn)[idx] = scale * mult * (quad + ev.sn_inv(a, b) - b_smu_b(a, b));
        (*d_smu)[idx] = scale * mult * (quad + ev.sn_inv(a, b));
      }
    }
  }
  const double total = scale * pairwise_sum(per_pixel);

  const std::size_t mu_id = mu.id(), sn_id = sigma_n.id(), smu_id = sigma_mu.id();
  return mu.tape()->record(
      Tensor({1}, total), {mu_id, sn_id, smu_id},
      [d_mu, d_sn, d_smu, mu_id, sn_id, smu_id](Tape& t, std::size_t self) {
        const double g = t.adjoint(self)[0];
        const std::pair<std::size_t, const std::vector<double>*> parts[] = {
            {mu_id, d_mu.get()}, {sn_id, d_sn.get()}, {smu_id, d_smu.get()}};
        for (const auto& [id, partial] : parts) {
          if (!t.needs_grad(id)) continue;
          std::vector<double>& d = t.adjoint(id);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g * (*partial)[i];
        }
      });
}

Tensor bayes_fuse(const Tensor& y, const Tensor& mu, const CovField& sigma_n,
                  const CovField& sigma_mu) {
  require_rank3(y, "bayes_fuse");
  require_same_shape(y, mu, "bayes_fuse y/mu");
  const std::size_t c = y.channels(), plane = y.height() * y.width();
  if (sigma_n.channels() != c || sigma_mu.channels() != c || sigma_n.pixels() != plane ||
      sigma_mu.pixels() != plane) {
    throw DimensionError("bayes_fuse: covariance field does not match image");
  }
  Tensor out(y.shape());
  for (std::size_t p = 0; p < plane; ++p) {
    std::array<double, 3> yp{}, mp{};
    for (std::size_t k = 0; k < c; ++k) {
      yp[k] = y[k * plane + p];
      mp[k] = mu[k * plane + p];
    }
    const auto x = bayes_fuse(std::span<const double>(yp.data(), c),
                              std::span<const double>(mp.data(), c), sigma_n.at(p), sigma_mu.at(p));
    for (std::size_t k = 0; k < c; ++k) out[k * plane + p] = x[k];
  }
  return out;
}

}  // namespace blindspot
