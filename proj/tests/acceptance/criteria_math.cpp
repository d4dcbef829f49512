// Criteria 1-5: structural and numerical properties.
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>

#include "acceptance.hpp"
#include "blindspot/dbsn.hpp"
#include "blindspot/finite_diff.hpp"
#include "blindspot/loss.hpp"
#include "blindspot/noise_model.hpp"

namespace blindspot::acceptance {

namespace {

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Tensor uniform_image(std::size_t c, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({c, h, w});
  for (double& v : t.data()) v = u(rng);
  return t;
}

SymMat random_spd(std::size_t n, double ridge, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  double a[3][3];
  for (auto& row : a) {
    for (double& v : row) v = normal(rng);
  }
  SymMat m(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += a[i][k] * a[j][k];
      m(i, j) = s / static_cast<double>(n) + (i == j ? ridge : 0.0);
    }
  }
  return m;
}

}  // namespace

Outcome blind_spot_exactness(Context& ctx) {
  const DbsnConfig cfg;  // default widths and depth
  constexpr int kParameterizations = 50;
  constexpr std::size_t kSize = 8;
  double worst_center = 0.0, smallest_neighbour_change = 1e300;
  for (int k = 0; k < kParameterizations; ++k) {
    DbsnParams net = make_dbsn(cfg, 1000 + k);
    // Random biases keep units alive so every path carries signal.
    std::mt19937_64 rng(5000 + k);
    std::normal_distribution<double> bias(0.0, 0.1);
    for_each_param(net, [&](const std::string& name, Tensor& t) {
      if (name.ends_with(".b")) {
        for (double& v : t.data()) v += bias(rng);
      }
    });
    const Tensor y = uniform_image(1, kSize, kSize, rng);
    const MuSigmaOutput base = dbsn_forward(net, y);
    std::uniform_real_distribution<double> bump(0.5, 1.5);
    for (std::size_t p = 0; p < kSize * kSize; ++p) {
      Tensor y2 = y;
      y2[p] += bump(rng);
      const MuSigmaOutput out = dbsn_forward(net, y2);
      worst_center = std::max(worst_center, std::abs(out.mu[p] - base.mu[p]));
      const Tensor& s0 = base.sigma_mu.packed();
      const Tensor& s1 = out.sigma_mu.packed();
      for (std::size_t plane = 0; plane < s0.dim(0); ++plane) {
        worst_center = std::max(worst_center, std::abs(s1[plane * kSize * kSize + p] - s0[plane * kSize * kSize + p]));
      }
      // The perturbation must reach the rest of the image, or the check is vacuous.
      double elsewhere = 0.0;
      for (std::size_t q = 0; q < kSize * kSize; ++q) {
        if (q != p) elsewhere = std::max(elsewhere, std::abs(out.mu[q] - base.mu[q]));
      }
      smallest_neighbour_change = std::min(smallest_neighbour_change, elsewhere);
    }
  }
  const TaintReport report = verify_blindspot(cfg);

  // Exclusion set of the 3x3-mask / dilation-2 path on a 7x7 grid around the
  // center pixel (1-indexed y22 ... y66).
  const TaintNode graph = dbsn_taint_graph(cfg);
  const TaintNode& branch0 = graph.children.at(1).children.at(0);
  const TaintNode path = TaintNode::sequence({graph.children.at(0), branch0, graph.children.at(2),
                                              graph.children.at(3), graph.children.at(4)});
  const auto influencing = influencing_pixels(path, 7, 7, 3, 3);
  std::set<std::pair<int, int>> excluded;
  for (int i = 1; i <= 7; ++i) {
    for (int j = 1; j <= 7; ++j) {
      if (!influencing.count({i - 1, j - 1})) excluded.insert({i, j});
    }
  }
  const std::set<std::pair<int, int>> expected = {{2, 2}, {2, 4}, {2, 6}, {4, 2}, {4, 4},
                                                  {4, 6}, {6, 2}, {6, 4}, {6, 6}};
  std::string excluded_str;
  for (const auto& [i, j] : excluded) excluded_str += " y" + std::to_string(i) + std::to_string(j);
  if (ctx.log) *ctx.log << report.summary() << "\n";

  Outcome o;
  o.passed = worst_center <= 1e-12 && smallest_neighbour_change > 0.0 && report.blind && excluded == expected;
  o.detail = "max center change " + fmt("%.3g", worst_center) + " over 50 nets x 64 pixels (min off-center change " +
             fmt("%.3g", smallest_neighbour_change) + "); taint " + (report.blind ? "blind" : "NOT blind") +
             "; 7x7 exclusion set {" + excluded_str + " }";
  return o;
}

Outcome gradient_correctness(Context& ctx) {
  Outcome o{true, ""};
  for (std::size_t c : {std::size_t{1}, std::size_t{3}}) {
    DbsnParams net = make_dbsn(DbsnConfig{c, 3, 1}, 5);
    CnnEstParams est = make_cnn_est(c, 6, 0.2);
    // Generic parameter values (no exactly-zero biases, no dead units).
    std::mt19937_64 rng(3);
    std::normal_distribution<double> jitter_net(0.0, 0.05), jitter_est(0.0, 0.005);
    for_each_param(net, [&](const std::string&, Tensor& t) {
      for (double& v : t.data()) v += jitter_net(rng);
    });
    for_each_param(est, [&](const std::string&, Tensor& t) {
      for (double& v : t.data()) v += jitter_est(rng);
    });
    // All parameters live in one flat vector; layers read slices of it.
    std::map<const Tensor*, std::pair<std::size_t, Shape>> slot;
    std::vector<double> flat;
    auto pack = [&](const std::string&, Tensor& t) {
      slot[&t] = {flat.size(), t.shape()};
      flat.insert(flat.end(), t.data().begin(), t.data().end());
    };
    for_each_param(net, pack);
    for_each_param(est, pack);
    std::mt19937_64 img_rng(1);
    const Tensor y = uniform_image(c, 8, 8, img_rng);
    const ValidMask mask = ValidMask::all(8, 8);
    const ScalarGraphFn objective = [&](Tape& tape, const Var& params) {
      const ParamBinder bind = [&](Tensor& t) {
        const auto& [offset, shape] = slot.at(&t);
        return extract(params, offset, shape);
      };
      const Var yv = tape.constant(y);
      const DbsnVars out = dbsn_forward(tape, net, yv, bind);
      const Var sn = cnn_est_forward(tape, est, yv, bind);
      return constrained_nll(y, out.mu, sn, out.sigma_mu, mask);
    };
    const FiniteDiffReport r =
        finite_diff_report(objective, Tensor({flat.size()}, flat), 1e-3, Stencil::kFourPoint);
    const bool ok = r.max_rel_error < 1e-4 && r.kink_crossings == 0;
    o.passed = o.passed && ok;
    o.detail += (o.detail.empty() ? "" : "; ") + std::string("C=") + std::to_string(c) + ": " +
                std::to_string(flat.size()) + " params, max rel err " + fmt("%.3g", r.max_rel_error) +
                " (" + std::to_string(r.steps_reduced) + " steps shrunk at ReLU kinks)";
    if (ctx.log) {
      *ctx.log << "C=" << c << " worst element " << r.worst_index << " analytic " << r.analytic[r.worst_index]
               << " numeric " << r.numeric[r.worst_index] << "\n";
    }
  }
  return o;
}

Outcome taylor_order(Context&) {
  std::mt19937_64 rng(42);
  double lo = 1e300, hi = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 2 + k % 2;
    const SymMat sn = random_spd(n, 0.5, rng);
    const SymMat smu = random_spd(n, 0.1, rng) * 0.02;
    auto err = [&](const SymMat& m) { return std::abs(taylor_logdet(sn, m) - exact_logdet(sn + m)); };
    const double ratio = err(smu) / err(smu * 0.5);
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  return {lo >= 3.5 && hi <= 4.5, "error ratio on halving Sigma_mu in [" + fmt("%.4f", lo) + ", " +
                                      fmt("%.4f", hi) + "] over 100 pairs (C=2,3)"};
}

Outcome bayes_fusion(Context&) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 1 + k % 3;
    const SymMat sn = random_spd(n, 0.05, rng), smu = random_spd(n, 0.05, rng);
    std::array<double, 3> y{}, mu{};
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = normal(rng);
      mu[i] = normal(rng);
    }
    const auto x = bayes_fuse(std::span(y.data(), n), std::span(mu.data(), n), sn, smu);
    double sq = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      double lhs = 0.0, rhs = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        lhs += (smu(a, b) + sn(a, b)) * x[b];
        rhs += smu(a, b) * y[b] + sn(a, b) * mu[b];
      }
      sq += (lhs - rhs) * (lhs - rhs);
    }
    worst = std::max(worst, std::sqrt(sq));
  }
  const double y = 10.0, mu = 6.0;
  const auto scalar = bayes_fuse(std::span(&y, 1), std::span(&mu, 1), SymMat::identity(1, 3.0),
                                 SymMat::identity(1, 1.0));
  return {worst < 1e-10 && scalar[0] == 7.0,
          "max residual " + fmt("%.3g", worst) + " over 1000 instances; scalar case " + fmt("%.17g", scalar[0])};
}

Outcome noise_statistics(Context&) {
  auto moments = [](const Tensor& y, const Tensor& x, std::size_t channel) {
    const std::size_t plane = x.height() * x.width();
    double s = 0.0, s2 = 0.0;
    for (std::size_t p = 0; p < plane; ++p) {
      const double d = y[channel * plane + p] - x[channel * plane + p];
      s += d;
      s2 += d * d;
    }
    const double mean = s / static_cast<double>(plane);
    return std::sqrt(s2 / static_cast<double>(plane) - mean * mean);
  };
  // AWGN, 1e5 samples.
  const Tensor flat({1, 100, 1000}, 0.5);
  const double awgn_std = moments(synthesize({AwgnNoise{25.0}}, flat, 1), flat, 0);
  const double awgn_err = std::abs(awgn_std / (25.0 / 255.0) - 1.0);
  // HG at x = 1, 1e5 samples.
  const Tensor ones({1, 100, 1000}, 1.0);
  const double hg_std = moments(synthesize({HeteroscedasticNoise{40.0, 10.0}}, ones, 2), ones, 0);
  const double hg_err = std::abs(hg_std / (std::sqrt(1700.0) / 255.0) - 1.0);
  // MG, 1e6 three-channel samples.
  const SymMat sigma = sample_mg_covariance(75.0, 7, 3);
  const Tensor grey({3, 1000, 1000}, 0.5);
  const Tensor noisy = synthesize({MultivariateNoise{sigma}}, grey, 3);
  const std::size_t plane = 1000 * 1000;
  double mean[3] = {}, cov[3][3] = {};
  for (std::size_t p = 0; p < plane; ++p) {
    double d[3];
    for (std::size_t a = 0; a < 3; ++a) d[a] = noisy[a * plane + p] - 0.5;
    for (std::size_t a = 0; a < 3; ++a) {
      mean[a] += d[a];
      for (std::size_t b = 0; b < 3; ++b) cov[a][b] += d[a] * d[b];
    }
  }
  double diff2 = 0.0, norm2 = 0.0;
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      const double c = cov[a][b] / plane - (mean[a] / plane) * (mean[b] / plane);
      diff2 += (c - sigma(a, b)) * (c - sigma(a, b));
      norm2 += sigma(a, b) * sigma(a, b);
    }
  }
  const double mg_err = std::sqrt(diff2 / norm2);
  return {awgn_err <= 0.02 && hg_err <= 0.02 && mg_err <= 0.05,
          "AWGN std error " + fmt("%.3f%%", 100 * awgn_err) + ", HG std error at x=1 " + fmt("%.3f%%", 100 * hg_err) +
              ", MG covariance Frobenius error " + fmt("%.3f%%", 100 * mg_err)};
}

}  // namespace blindspot::acceptance
