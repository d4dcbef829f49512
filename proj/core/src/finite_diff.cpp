#include "blindspot/finite_diff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "blindspot/errors.hpp"

namespace blindspot {

namespace {

struct Probe {
  double value;
  std::uint64_t pattern;
};

Probe evaluate(const ScalarGraphFn& f, const Tensor& p) {
  ActivationProbe probe;
  Tape tape;
  const Var out = f(tape, tape.constant(p));
  if (out.value().numel() != 1) throw DimensionError("finite_diff_check: f must be scalar");
  return {out.value()[0], probe.fingerprint()};
}

constexpr int kMaxStepReductions = 5;

}  // namespace

FiniteDiffReport finite_diff_report(const ScalarGraphFn& f, const Tensor& p, double eps,
                                    Stencil stencil) {
  if (!(eps > 0.0)) throw ConfigError("finite_diff_check: eps must be positive");
  FiniteDiffReport report;
  {
    Tape tape;
    const Var x = tape.variable(p);
    const Var out = f(tape, x);
    tape.backward(out);
    report.analytic = tape.grad(x);
  }
  report.numeric.resize(p.numel());
  const std::uint64_t base_pattern = evaluate(f, p).pattern;
  Tensor probe = p;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double orig = probe[i];
    bool crossed = false;
    auto at = [&](double offset) {
      probe[i] = orig + offset;
      const Probe v = evaluate(f, probe);
      if (!std::isfinite(v.value)) {
        throw NumericError("finite_diff_check: non-finite value at perturbed element " +
                           std::to_string(i));
      }
      crossed = crossed || v.pattern != base_pattern;
      return v.value;
    };
    double h = eps;
    for (int attempt = 0; attempt <= kMaxStepReductions; ++attempt, h /= 4.0) {
      crossed = false;
      if (stencil == Stencil::kTwoPoint) {
        report.numeric[i] = (at(h) - at(-h)) / (2.0 * h);
      } else {
        // Paired differences cancel exactly when f is locally constant.
        const double near = at(h) - at(-h);
        const double far = at(2 * h) - at(-2 * h);
        report.numeric[i] = (8.0 * near - far) / (12.0 * h);
      }
      if (!crossed) break;
      if (attempt == 0) ++report.steps_reduced;
    }
    if (crossed) ++report.kink_crossings;
    probe[i] = orig;
    const double a = report.analytic[i], b = report.numeric[i];
    const double rel = std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
  }
  return report;
}

double finite_diff_check(const ScalarGraphFn& f, const Tensor& p, double eps, Stencil stencil) {
  return finite_diff_report(f, p, eps, stencil).max_rel_error;
}

}  // namespace blindspot
