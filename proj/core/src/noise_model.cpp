#include "blindspot/noise_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include "blindspot/errors.hpp"

namespace blindspot {

namespace {

constexpr double k255 = 255.0;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Adds L * n0 to every pixel of y, where L is the lower Cholesky factor of
// the pixel's covariance.
void add_correlated_noise(Tensor& y, const CovField& cov, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t c = y.channels(), plane = y.height() * y.width();
  for (std::size_t p = 0; p < plane; ++p) {
    const SymMat l = cholesky_lower(cov.at(p));
    std::array<double, 3> n0{};
    for (std::size_t k = 0; k < c; ++k) n0[k] = normal(rng);
    for (std::size_t a = 0; a < c; ++a) {
      double v = 0.0;
      for (std::size_t k = 0; k <= a; ++k) v += l(a, k) * n0[k];
      y[a * plane + p] += v;
    }
  }
}

}  // namespace

double hg_variance(double alpha, double delta, double x) {
  return (alpha * alpha * x + delta * delta) / (k255 * k255);
}

void NoiseLevelFunction::validate() const {
  std::visit(Overloaded{
                 [](const AwgnNoise& n) {
                   if (!(n.sigma >= 0.0) || !std::isfinite(n.sigma)) {
                     throw ConfigError("AWGN sigma must be non-negative");
                   }
                 },
                 [](const HeteroscedasticNoise& n) {
                   if (!(n.alpha >= 0.0) || !(n.delta > 0.0)) {
                     throw ConfigError("HG noise needs alpha >= 0 and delta > 0");
                   }
                 },
                 [](const MultivariateNoise& n) {
                   if (n.covariance.n < 1 || n.covariance.n > 3) {
                     throw ConfigError("MG covariance must be 1x1..3x3");
                   }
                   for (std::size_t a = 0; a < n.covariance.n; ++a) {
                     for (std::size_t b = 0; b < a; ++b) {
                       if (std::abs(n.covariance(a, b) - n.covariance(b, a)) > 1e-12) {
                         throw ConfigError("MG covariance must be symmetric");
                       }
                     }
                   }
                   if (smallest_eigenvalue(n.covariance) < -1e-12) {
                     throw ConfigError("MG covariance must be positive semidefinite");
                   }
                 },
                 [](const LearnedNoise& n) {
                   if (!n.estimator) throw ConfigError("learned NLF has no estimator");
                 },
             },
             model);
}

std::string NoiseLevelFunction::describe() const {
  std::ostringstream os;
  std::visit(Overloaded{
                 [&](const AwgnNoise& n) { os << "awgn:sigma=" << n.sigma; },
                 [&](const HeteroscedasticNoise& n) {
                   os << "hg:alpha=" << n.alpha << ",delta=" << n.delta;
                 },
                 [&](const MultivariateNoise& n) { os << "mg:" << n.covariance.n << "x" << n.covariance.n; },
                 [&](const LearnedNoise&) { os << "learned"; },
             },
             model);
  return os.str();
}

Tensor synthesize(const NoiseLevelFunction& nlf, const Tensor& x, std::uint64_t seed) {
  nlf.validate();
  require_rank3(x, "synthesize");
  if (const auto* learned = std::get_if<LearnedNoise>(&nlf.model)) {
    return apply_learned_nlf(*learned->estimator, x, seed);
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor y = x;
  if (const auto* awgn = std::get_if<AwgnNoise>(&nlf.model)) {
    const double sigma = std::max(awgn->sigma, kMinAwgnSigma) / k255;
    for (double& v : y.data()) v += sigma * normal(rng);
  } else if (const auto* hg = std::get_if<HeteroscedasticNoise>(&nlf.model)) {
    for (std::size_t i = 0; i < y.numel(); ++i) {
      y[i] += std::sqrt(hg_variance(hg->alpha, hg->delta, x[i])) * normal(rng);
    }
  } else if (const auto* mg = std::get_if<MultivariateNoise>(&nlf.model)) {
    const std::size_t c = x.channels();
    if (mg->covariance.n != c) {
      throw DimensionError("MG covariance is " + std::to_string(mg->covariance.n) + "x" +
                           std::to_string(mg->covariance.n) + ", image has " + std::to_string(c) +
                           " channels");
    }
    // PSD (possibly singular) covariance: factor a jittered copy.
    const SymMat l = cholesky_lower(mg->covariance + SymMat::identity(c, 1e-15));
    const std::size_t plane = x.height() * x.width();
    for (std::size_t p = 0; p < plane; ++p) {
      std::array<double, 3> n0{};
      for (std::size_t k = 0; k < c; ++k) n0[k] = normal(rng);
      for (std::size_t a = 0; a < c; ++a) {
        double v = 0.0;
        for (std::size_t k = 0; k <= a; ++k) v += l(a, k) * n0[k];
        y[a * plane + p] += v;
      }
    }
  }
  return y;
}

SymMat random_orthonormal(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  // Modified Gram-Schmidt on the columns of a Gaussian matrix (thin QR).
  std::array<std::array<double, 3>, 3> q{};
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) q[j][i] = normal(rng);
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += q[j][i] * q[k][i];
      for (std::size_t i = 0; i < n; ++i) q[j][i] -= dot * q[k][i];
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += q[j][i] * q[j][i];
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i) q[j][i] /= norm;
  }
  SymMat u(n);  // general matrix in SymMat storage: u(i, j) = column j, row i
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) u(i, j) = q[j][i];
  }
  return u;
}

SymMat mg_covariance(double scale, const SymMat& u, std::span<const double> lambda) {
  const std::size_t n = u.n;
  if (lambda.size() != n) throw DimensionError("mg_covariance: lambda size mismatch");
  SymMat s(n);
  const double factor = scale * scale / (k255 * k255);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      double v = 0.0;
      for (std::size_t k = 0; k < n; ++k) v += u(a, k) * lambda[k] * u(b, k);
      s(a, b) = factor * v;
      s(b, a) = s(a, b);
    }
  }
  return s;
}

SymMat sample_mg_covariance(double scale, std::uint64_t seed, std::size_t channels) {
  if (channels < 1 || channels > 3) throw ConfigError("MG covariance supports 1..3 channels");
  std::mt19937_64 rng(seed);
  const SymMat u = random_orthonormal(channels, rng);
  // Open interval (0, 1): redraw the (measure-zero) endpoint.
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::array<double, 3> lambda{};
  for (std::size_t k = 0; k < channels; ++k) {
    do {
      lambda[k] = uniform(rng);
    } while (lambda[k] <= 0.0);
  }
  return mg_covariance(scale, u, std::span<const double>(lambda.data(), channels));
}

Tensor apply_learned_nlf(const CnnEstParams& params, const Tensor& x, std::uint64_t seed) {
  const CovField cov = cnn_est_forward(params, x);
  std::mt19937_64 rng(seed);
  Tensor y = x;
  add_correlated_noise(y, cov, rng);
  return y;
}

NoiseLevelFunction parse_nlf_spec(const std::string& spec, std::size_t channels) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  std::map<std::string, double> kv;
  if (colon != std::string::npos) {
    std::istringstream rest(spec.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("bad NLF parameter '" + item + "' in " + spec);
      try {
        std::size_t used = 0;
        const std::string value = item.substr(eq + 1);
        kv[item.substr(0, eq)] = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::logic_error&) {
        throw ConfigError("bad NLF value in '" + item + "'");
      }
    }
  }
  auto take = [&](const std::string& key, std::optional<double> fallback = std::nullopt) {
    auto it = kv.find(key);
    if (it == kv.end()) {
      if (fallback) return *fallback;
      throw ConfigError("NLF spec '" + spec + "' is missing '" + key + "'");
    }
    const double v = it->second;
    kv.erase(it);
    return v;
  };
  NoiseLevelFunction nlf;
  if (kind == "awgn") {
    nlf.model = AwgnNoise{take("sigma")};
  } else if (kind == "hg") {
    const double alpha = take("alpha");
    nlf.model = HeteroscedasticNoise{alpha, take("delta")};
  } else if (kind == "mg") {
    const double scale = take("scale", 75.0);
    const auto seed = static_cast<std::uint64_t>(take("seed", 0.0));
    nlf.model = MultivariateNoise{sample_mg_covariance(scale, seed, channels)};
  } else {
    throw ConfigError("unknown NLF kind '" + kind + "' (expected awgn, hg or mg)");
  }
  if (!kv.empty()) throw ConfigError("unknown NLF parameter '" + kv.begin()->first + "'");
  nlf.validate();
  return nlf;
}

double estimate_noise_sigma(const Tensor& y) {
  require_rank3(y, "estimate_noise_sigma");
  std::vector<double> d;
  for (std::size_t c = 0; c < y.channels(); ++c) {
    for (std::size_t i = 0; i < y.height(); ++i) {
      for (std::size_t j = 0; j + 1 < y.width(); ++j) {
        d.push_back((y.at(c, i, j) - y.at(c, i, j + 1)) / std::sqrt(2.0));
      }
    }
  }
  if (d.empty()) return 0.0;
  auto median = [](std::vector<double> v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
  };
  const double m = median(d);
  for (double& v : d) v = std::abs(v - m);
  return 1.4826 * median(d);
}

}  // namespace blindspot
