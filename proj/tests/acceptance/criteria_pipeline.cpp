// Criterion 8: pixel-shuffle decomposition and guided filter.
#include <cmath>
#include <cstdio>
#include <random>

#include "acceptance.hpp"
#include "blindspot/guided_filter.hpp"
#include "blindspot/pixel_shuffle.hpp"

namespace blindspot::acceptance {

namespace {

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Tensor random_tensor(std::size_t c, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({c, h, w});
  for (double& v : t.data()) v = u(rng);
  return t;
}

double lag1_autocorrelation(const Tensor& t, bool vertical) {
  double s = 0, s2 = 0, cross = 0;
  std::size_t n = 0;
  const std::size_t h = t.height(), w = t.width();
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      s += t.at(0, i, j);
      s2 += t.at(0, i, j) * t.at(0, i, j);
    }
  }
  const double count = static_cast<double>(h * w);
  const double mean = s / count, var = s2 / count - mean * mean;
  for (std::size_t i = 0; i + (vertical ? 1 : 0) < h; ++i) {
    for (std::size_t j = 0; j + (vertical ? 0 : 1) < w; ++j) {
      const double a = t.at(0, i, j) - mean;
      const double b = (vertical ? t.at(0, i + 1, j) : t.at(0, i, j + 1)) - mean;
      cross += a * b;
      ++n;
    }
  }
  return cross / static_cast<double>(n) / var;
}

}  // namespace

Tensor reference_guided_filter(const Tensor& p, const Tensor& guide, int radius, double eps) {
  const auto h = static_cast<int>(p.height()), w = static_cast<int>(p.width());
  Tensor out(p.shape());
  for (std::size_t c = 0; c < p.channels(); ++c) {
    const std::size_t gc = guide.channels() == 1 ? 0 : c;
    auto window_mean = [&](int i, int j, const auto& value) {
      double s = 0.0;
      int n = 0;
      for (int a = std::max(0, i - radius); a <= std::min(h - 1, i + radius); ++a) {
        for (int b = std::max(0, j - radius); b <= std::min(w - 1, j + radius); ++b) {
          s += value(a, b);
          ++n;
        }
      }
      return s / n;
    };
    std::vector<double> a_coef(static_cast<std::size_t>(h * w)), b_coef(a_coef.size());
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const double mi = window_mean(i, j, [&](int a, int b) { return guide.at(gc, a, b); });
        const double mp = window_mean(i, j, [&](int a, int b) { return p.at(c, a, b); });
        const double cov = window_mean(i, j, [&](int a, int b) {
          return (guide.at(gc, a, b) - mi) * (p.at(c, a, b) - mp);
        });
        const double var = window_mean(i, j, [&](int a, int b) {
          return (guide.at(gc, a, b) - mi) * (guide.at(gc, a, b) - mi);
        });
        const std::size_t k = static_cast<std::size_t>(i * w + j);
        a_coef[k] = cov / (var + eps);
        b_coef[k] = mp - a_coef[k] * mi;
      }
    }
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const double ma = window_mean(i, j, [&](int a, int b) { return a_coef[static_cast<std::size_t>(a * w + b)]; });
        const double mb = window_mean(i, j, [&](int a, int b) { return b_coef[static_cast<std::size_t>(a * w + b)]; });
        out.at(c, i, j) = ma * guide.at(gc, i, j) + mb;
      }
    }
  }
  return out;
}

Outcome subimage_pipeline(Context&) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> size(1, 40);
  int bijective = 0;
  for (int k = 0; k < 100; ++k) {
    const Tensor y = random_tensor(k % 2 ? 3 : 1, size(rng), size(rng), rng);
    const Tensor back = ps_up(ps_down(y));
    if (back.shape() == y.shape() && back.storage() == y.storage()) ++bijective;
  }

  double const_dev = 0.0;
  for (std::size_t c : {std::size_t{1}, std::size_t{3}}) {
    const Tensor flat({c, 23, 31}, 0.1 + 0.8 * std::uniform_real_distribution<double>(0, 1)(rng));
    const Tensor out = guided_filter(flat, flat, 1, 0.01);
    for (std::size_t i = 0; i < out.numel(); ++i) const_dev = std::max(const_dev, std::abs(out[i] - flat[i]));
  }
  double ref_dev = 0.0;
  for (std::size_t c : {std::size_t{1}, std::size_t{3}}) {
    const Tensor p = random_tensor(c, 29, 37, rng);
    const Tensor guide = random_tensor(c, 29, 37, rng);
    for (const Tensor* g : {&p, &guide}) {
      const Tensor fast = guided_filter(p, *g, 1, 0.01);
      const Tensor slow = reference_guided_filter(p, *g, 1, 0.01);
      for (std::size_t i = 0; i < fast.numel(); ++i) ref_dev = std::max(ref_dev, std::abs(fast[i] - slow[i]));
    }
  }

  // Noise averaged over 2x2 boxes: neighbours correlate, phases 4 apart do not.
  constexpr std::size_t n = 1024;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> white((n + 1) * (n + 1));
  for (double& v : white) v = normal(rng);
  Tensor corr({1, n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      corr.at(0, i, j) = 0.25 * (white[i * (n + 1) + j] + white[i * (n + 1) + j + 1] +
                                 white[(i + 1) * (n + 1) + j] + white[(i + 1) * (n + 1) + j + 1]);
    }
  }
  const double full_lag = lag1_autocorrelation(corr, false);
  double sub_lag = 0.0;
  for (const Tensor& s : ps_down(corr).subs) {
    sub_lag = std::max({sub_lag, std::abs(lag1_autocorrelation(s, false)), std::abs(lag1_autocorrelation(s, true))});
  }

  Outcome o;
  o.passed = bijective == 100 && const_dev <= 1e-12 && ref_dev <= 1e-10 && sub_lag < 0.02;
  o.detail = std::to_string(bijective) + "/100 bitwise round trips; constant-image deviation " + fmt("%.2g", const_dev) +
             "; vs reference filter " + fmt("%.2g", ref_dev) + "; lag-1 autocorrelation full image " +
             fmt("%.3f", full_lag) + ", sub-images max " + fmt("%.4f", sub_lag);
  return o;
}

}  // namespace blindspot::acceptance
