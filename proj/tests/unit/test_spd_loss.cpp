#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "blindspot/autodiff.hpp"
#include "blindspot/errors.hpp"
#include "blindspot/finite_diff.hpp"
#include "blindspot/loss.hpp"
#include "blindspot/spd.hpp"

namespace blindspot {
namespace {

SymMat random_spd(std::size_t n, double ridge, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a(i, j) = normal(rng);
  }
  const Eigen::MatrixXd s = a * a.transpose() + ridge * Eigen::MatrixXd::Identity(n, n);
  SymMat m(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m(i, j) = s(i, j);
  }
  return m;
}

Eigen::MatrixXd to_eigen(const SymMat& m) {
  Eigen::MatrixXd e(m.n, m.n);
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = 0; j < m.n; ++j) e(i, j) = m(i, j);
  }
  return e;
}

TEST(SpdInvDetTrace, MatchesEigen) {
  std::mt19937_64 rng(1);
  for (std::size_t n = 1; n <= 3; ++n) {
    for (int t = 0; t < 200; ++t) {
      const SymMat m = random_spd(n, 0.1, rng);
      const InvDetTrace r = spd_inv_det_trace(m);
      const Eigen::MatrixXd e = to_eigen(m);
      const Eigen::MatrixXd inv = e.inverse();
      EXPECT_NEAR(r.determinant, e.determinant(), 1e-10 * std::abs(e.determinant()));
      EXPECT_NEAR(r.trace, e.trace(), 1e-12);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          EXPECT_NEAR(r.inverse(i, j), inv(i, j), 1e-9 * inv.cwiseAbs().maxCoeff());
        }
      }
    }
  }
}

TEST(SpdInvDetTrace, Identity) {
  for (std::size_t n = 1; n <= 3; ++n) {
    const InvDetTrace r = spd_inv_det_trace(SymMat::identity(n));
    EXPECT_EQ(r.determinant, 1.0);
    EXPECT_EQ(r.trace, static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(r.inverse(i, j), i == j ? 1.0 : 0.0);
    }
  }
}

TEST(SpdInvDetTrace, Diagonal) {
  SymMat m(2);
  m(0, 0) = 2.0;
  m(1, 1) = 3.0;
  const InvDetTrace r = spd_inv_det_trace(m);
  EXPECT_DOUBLE_EQ(r.inverse(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(r.inverse(1, 1), 1.0 / 3.0);
  EXPECT_EQ(r.inverse(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(r.determinant, 6.0);
  EXPECT_DOUBLE_EQ(r.trace, 5.0);
}

TEST(SpdInvDetTrace, SingularThrows) {
  SymMat m(2);
  m(0, 0) = m(0, 1) = m(1, 0) = m(1, 1) = 1.0;
  EXPECT_THROW(spd_inv_det_trace(m), NumericError);
}

TEST(Cholesky, ReconstructsAndEigenvaluesMatch) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const SymMat m = random_spd(3, 0.2, rng);
    const SymMat l = cholesky_lower(m);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        double v = 0.0;
        for (std::size_t k = 0; k < 3; ++k) v += l(i, k) * l(j, k);
        EXPECT_NEAR(v, m(i, j), 1e-10);
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(m));
    const auto ev = eigenvalues(m);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(ev[k], es.eigenvalues()(k), 1e-9);
  }
}

TEST(NllExact, UnitVarianceExamples) {
  const double zero[] = {0.0}, one[] = {1.0};
  const SymMat half = SymMat::identity(1, 0.5);
  EXPECT_DOUBLE_EQ(nll_exact(zero, zero, half, half), 0.0);
  EXPECT_DOUBLE_EQ(nll_exact(one, zero, half, half), 0.5);
}

TEST(NllExact, MatchesEigenOracle) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const SymMat sn = random_spd(2, 0.3, rng), smu = random_spd(2, 0.1, rng);
    const double y[] = {normal(rng), normal(rng)}, mu[] = {normal(rng), normal(rng)};
    const Eigen::MatrixXd s = to_eigen(sn) + to_eigen(smu);
    const Eigen::Vector2d e(y[0] - mu[0], y[1] - mu[1]);
    const double want = 0.5 * e.dot(s.inverse() * e) + 0.5 * std::log(s.determinant());
    EXPECT_NEAR(nll_exact(y, mu, sn, smu), want, 1e-10);
  }
}

TEST(NllExact, IllConditionedThrows) {
  SymMat s(2);
  s(0, 0) = 1.0;
  s(1, 1) = 1e-14;
  const double v[] = {0.0, 0.0};
  EXPECT_THROW(nll_exact(v, v, s, SymMat(2)), NumericError);
}

TEST(TaylorLogdet, ZeroPerturbationIsExact) {
  std::mt19937_64 rng(4);
  const SymMat sn = random_spd(3, 0.5, rng);
  EXPECT_DOUBLE_EQ(taylor_logdet(sn, SymMat(3)), exact_logdet(sn));
}

TEST(TaylorLogdet, ScalarExample) {
  const double approx = taylor_logdet(SymMat::identity(1), SymMat::identity(1, 0.1));
  EXPECT_NEAR(approx, 0.1, 1e-15);
  EXPECT_NEAR(approx - std::log(1.1), 0.0047, 5e-5);
}

CovField constant_field(std::size_t c, std::size_t h, std::size_t w, const SymMat& m) {
  CovField f(c, h, w);
  for (std::size_t p = 0; p < f.pixels(); ++p) f.set(p, m);
  return f;
}

TEST(ConstrainedNll, PerfectMeanScalar) {
  const double sa2 = 0.02, sb2 = 0.3;
  Tensor y({1, 3, 4});
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = 0.1 * static_cast<double>(i);
  const LossTerms t = constrained_nll(y, y, constant_field(1, 3, 4, SymMat::identity(1, sb2)),
                                      constant_field(1, 3, 4, SymMat::identity(1, sa2)),
                                      ValidMask::all(3, 4));
  EXPECT_NEAR(t.total, 0.5 * (std::log(sb2) + sa2 / sb2), 1e-14);
  EXPECT_EQ(t.valid_pixels, 12u);
}

TEST(ConstrainedNll, TermsRecombine) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 0.1);
  const std::size_t c = 3, h = 4, w = 5;
  Tensor y({c, h, w}), mu({c, h, w});
  for (double& v : y.data()) v = normal(rng);
  for (double& v : mu.data()) v = normal(rng);
  CovField sn(c, h, w), smu(c, h, w);
  for (std::size_t p = 0; p < h * w; ++p) {
    sn.set(p, random_spd(c, 0.5, rng));
    smu.set(p, random_spd(c, 0.1, rng) * 0.01);
  }
  const ValidMask mask = ValidMask::interior(h, w, 1);
  const LossTerms t = constrained_nll(y, mu, sn, smu, mask);
  EXPECT_NEAR(t.total, 0.5 * (t.quadratic + t.logdet + t.trace), 1e-12);
  double q = 0.0, ld = 0.0, tr = 0.0;
  for (std::size_t i = 1; i + 1 < h; ++i) {
    for (std::size_t j = 1; j + 1 < w; ++j) {
      const std::size_t p = i * w + j;
      Eigen::Vector3d e;
      for (std::size_t k = 0; k < c; ++k) e(k) = y[k * h * w + p] - mu[k * h * w + p];
      const Eigen::MatrixXd a = to_eigen(sn.at(p)), b = to_eigen(smu.at(p));
      q += e.dot((a + b).inverse() * e);
      ld += std::log(a.determinant());
      tr += (a.inverse() * b).trace();
    }
  }
  const double n = static_cast<double>(mask.count());
  EXPECT_NEAR(t.quadratic, q / n, 1e-10);
  EXPECT_NEAR(t.logdet, ld / n, 1e-10);
  EXPECT_NEAR(t.trace, tr / n, 1e-10);
  EXPECT_NEAR(t.logdet + t.trace, [&] {
    double s = 0.0;
    for (std::size_t i = 1; i + 1 < h; ++i) {
      for (std::size_t j = 1; j + 1 < w; ++j) s += taylor_logdet(sn.at(i * w + j), smu.at(i * w + j));
    }
    return s / n;
  }(), 1e-12);
}

TEST(ConstrainedNll, NonSpdNamesPixel) {
  Tensor y({1, 2, 2});
  CovField sn = constant_field(1, 2, 2, SymMat::identity(1));
  sn.set(3, SymMat::identity(1, -1.0));
  try {
    constrained_nll(y, y, sn, constant_field(1, 2, 2, SymMat::identity(1, 0.1)),
                    ValidMask::all(2, 2));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("(1,1)"), std::string::npos) << e.what();
  }
}

TEST(ConstrainedNll, DifferentiableMatchesValue) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const std::size_t c = 2, h = 3, w = 3;
  Tensor y({c, h, w}), mu({c, h, w}), fn({3, h, w}), fm({3, h, w});
  for (double& v : y.data()) v = u(rng);
  for (double& v : mu.data()) v = u(rng);
  for (double& v : fn.data()) v = u(rng) + 0.8;
  for (double& v : fm.data()) v = 0.2 * u(rng);
  Tape tape;
  const Var loss = constrained_nll(y, tape.constant(mu), spd_from_factor(tape.constant(fn)),
                                   spd_from_factor(tape.constant(fm)), ValidMask::all(h, w));
  const LossTerms t = constrained_nll(y, mu, spd_from_factor(fn), spd_from_factor(fm),
                                      ValidMask::all(h, w));
  EXPECT_NEAR(loss.value()[0], t.total, 1e-12);
}

TEST(ConstrainedNll, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const std::size_t c = 3, h = 3, w = 4, planes = 6;
  Tensor y({c, h, w});
  for (double& v : y.data()) v = u(rng);
  // One flat parameter vector: mu, noise factor, prediction factor.
  Tensor p({c * h * w + 2 * planes * h * w});
  std::size_t i = 0;
  for (; i < c * h * w; ++i) p[i] = u(rng);
  for (std::size_t k = 0; k < planes * h * w; ++k, ++i) {
    const std::size_t plane = k / (h * w);
    const bool diag = plane == 0 || plane == 2 || plane == 5;
    p[i] = diag ? 0.6 + u(rng) * 0.2 : 0.2 * u(rng);
  }
  for (; i < p.numel(); ++i) p[i] = 0.1 * u(rng);
  const ValidMask mask = ValidMask::all(h, w);
  const ScalarGraphFn f = [&](Tape&, const Var& v) {
    const Var mu = extract(v, 0, {c, h, w});
    const Var sn = spd_from_factor(extract(v, c * h * w, {planes, h, w}));
    const Var smu = spd_from_factor(extract(v, c * h * w + planes * h * w, {planes, h, w}));
    return constrained_nll(y, mu, sn, smu, mask);
  };
  EXPECT_LT(finite_diff_check(f, p, 1e-5), 1e-4);
}

TEST(ConstrainedNll, TwoLayerNetGradient) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.05, 0.5);
  const std::size_t h = 6, w = 6;
  Tensor y({1, h, w});
  for (double& v : y.data()) v = u(rng) * 2.0;
  Tensor w2({1, 2, 3, 3});
  for (double& v : w2.data()) v = u(rng);
  Tensor p({2, 1, 3, 3});
  for (double& v : p.data()) v = u(rng);
  const ValidMask mask = ValidMask::interior(h, w, 2);
  const ScalarGraphFn f = [&](Tape& tape, const Var& w1) {
    const Var hidden = relu(conv2d(tape.constant(y), w1));
    const Var mu = conv2d(hidden, tape.constant(w2));
    const Var sn = tape.constant(Tensor({1, h, w}, 0.3));
    const Var smu = tape.constant(Tensor({1, h, w}, 0.05));
    return constrained_nll(y, mu, sn, smu, mask);
  };
  EXPECT_LT(finite_diff_check(f, p, 1e-5), 1e-4);
}

TEST(BayesFuse, Examples) {
  const double y[] = {10.0}, mu[] = {6.0};
  EXPECT_EQ(bayes_fuse(y, mu, SymMat::identity(1, 3.0), SymMat::identity(1, 1.0))[0], 7.0);
  EXPECT_DOUBLE_EQ(bayes_fuse(y, mu, SymMat::identity(1, 2.0), SymMat::identity(1, 2.0))[0], 8.0);
  std::mt19937_64 rng(9);
  const SymMat sn = random_spd(3, 0.5, rng);
  const double y3[] = {0.1, 0.7, -0.3}, mu3[] = {0.4, 0.2, 0.9};
  const auto x = bayes_fuse(y3, mu3, sn, SymMat(3));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(x[k], mu3[k]);
}

TEST(BayesFuse, ResidualIdentity) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const SymMat sn = random_spd(3, 0.3, rng), smu = random_spd(3, 0.3, rng);
    const double y[] = {normal(rng), normal(rng), normal(rng)};
    const double mu[] = {normal(rng), normal(rng), normal(rng)};
    const auto x = bayes_fuse(y, mu, sn, smu);
    const Eigen::Vector3d xv(x[0], x[1], x[2]), yv(y[0], y[1], y[2]), mv(mu[0], mu[1], mu[2]);
    const Eigen::MatrixXd a = to_eigen(sn), b = to_eigen(smu);
    EXPECT_LT(((a + b) * xv - (b * yv + a * mv)).norm(), 1e-10);
  }
}

TEST(SpdFromFactor, ZeroFactorGivesEpsilonIdentity) {
  const CovField f = spd_from_factor(Tensor({6, 2, 2}));
  for (std::size_t p = 0; p < f.pixels(); ++p) {
    const SymMat m = f.at(p);
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(m(a, b), a == b ? kPsdEpsilon : 0.0);
    }
  }
}

TEST(PairwiseSum, SmallExactAndOrderDefined) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0, 5.0};
  EXPECT_EQ(pairwise_sum(v), 15.0);
  EXPECT_EQ(pairwise_sum(std::vector<double>{}), 0.0);
}

}  // namespace
}  // namespace blindspot
