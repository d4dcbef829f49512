#pragma once

#include <functional>
#include <vector>

#include "blindspot/autodiff.hpp"

namespace blindspot {

// Scalar function of one parameter tensor, expressed as a graph on a tape.
using ScalarGraphFn = std::function<Var(Tape&, const Var& params)>;

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<double> analytic;
  std::vector<double> numeric;
  // Elements whose step had to shrink to stay on one side of every ReLU
  // kink, and elements where even the smallest step crossed one.
  std::size_t steps_reduced = 0;
  std::size_t kink_crossings = 0;
};

enum class Stencil {
  kTwoPoint,   // (f(+h) - f(-h)) / 2h, error O(h^2)
  kFourPoint,  // (f(-2h) - 8 f(-h) + 8 f(+h) - f(+2h)) / 12h, error O(h^4)
};

// Central differences against the reverse-mode gradient, elementwise, with
// relative error |a - b| / max(|a|, |b|, 1e-8). The step starts at `eps` and
// is divided by 4 (up to 5 times) while any stencil point switches a ReLU
// relative to the unperturbed evaluation, since a difference quotient across
// a kink does not estimate the derivative. Throws NumericError when f is
// non-finite at a perturbed point.
FiniteDiffReport finite_diff_report(const ScalarGraphFn& f, const Tensor& p, double eps,
                                    Stencil stencil = Stencil::kTwoPoint);
double finite_diff_check(const ScalarGraphFn& f, const Tensor& p, double eps,
                         Stencil stencil = Stencil::kTwoPoint);

}  // namespace blindspot
