#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "blindspot/stage1.hpp"

namespace blindspot::acceptance {

struct Outcome {
  bool passed = false;
  std::string detail;
};

// Shared state: the stage-1 run of criterion 6 is reused by criterion 7.
struct Context {
  std::size_t threads = 1;
  std::ostream* log = nullptr;

  struct Stage1Fixture {
    std::vector<NoisyImage> noisy;
    std::vector<Tensor> clean;
    Stage1Result result;
    double seconds = 0.0;
  };
  std::optional<Stage1Fixture> stage1;
  const Stage1Fixture& stage1_fixture();
};

struct Criterion {
  int id;
  std::string title;
  std::function<Outcome(Context&)> run;
};

const std::vector<Criterion>& criteria();

struct Options {
  std::vector<int> only;              // empty = all
  std::optional<std::filesystem::path> record;  // results file
  std::size_t threads = 1;
  bool verbose = false;
};

// Prints one "PASS"/"FAIL" line per criterion; returns the number of failures.
int run_suite(const Options& options, std::ostream& out);

// Individual criteria (defined across the criteria_*.cpp files).
Outcome blind_spot_exactness(Context& ctx);
Outcome gradient_correctness(Context& ctx);
Outcome taylor_order(Context& ctx);
Outcome bayes_fusion(Context& ctx);
Outcome noise_statistics(Context& ctx);
Outcome stage1_learning_signal(Context& ctx);
Outcome distillation_wiring(Context& ctx);
Outcome subimage_pipeline(Context& ctx);

// Independent guided filter (explicit window loops, no summed-area tables).
Tensor reference_guided_filter(const Tensor& p, const Tensor& guide, int radius, double eps);

}  // namespace blindspot::acceptance
