#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blindspot/layers.hpp"
#include "blindspot/stage1.hpp"

namespace blindspot {

struct StudentConfig {
  std::size_t channels = 1;
  std::size_t depth = 8;   // number of 3x3 conv layers
  std::size_t width = 48;  // hidden channels

  void validate() const;
  bool operator==(const StudentConfig&) const = default;
};

// Plain 3x3 CNN predicting the noise; the output is input - prediction.
struct StudentParams {
  StudentConfig config;
  std::vector<ConvLayer> layers;
};

StudentParams make_student(const StudentConfig& config, std::uint64_t seed);
void for_each_param(StudentParams& params, const ParamVisitor& fn);
void for_each_param(const StudentParams& params, const ConstParamVisitor& fn);

Var student_forward(StudentParams& params, const Var& y, const ParamBinder& bind);
Tensor student_forward(const StudentParams& params, const Tensor& y);

struct ImagePair {
  std::string id;
  Tensor input;   // noisy
  Tensor target;  // clean or pseudo-clean
};

struct DistillPairs {
  std::vector<ImagePair> synthetic;  // P1: (learned-NLF noisy, clean)
  std::vector<ImagePair> real;       // P2: (real noisy, stage-1 output)
  std::vector<std::string> estimator_choice;  // estimator id used for each P1 pair
};

struct CleanImage {
  std::string id;
  Tensor pixels;
};

DistillPairs make_distill_pairs(const std::vector<CleanImage>& clean, const std::vector<NoisyImage>& noisy,
                                const Stage1Model& model, std::uint64_t seed, std::size_t threads = 1);

struct StudentResult {
  StudentParams params;
  TrainLog log;
};

// Minimizes  sum_P1 ||S(y~) - x||^2 + lambda sum_P2 ||S(y) - x^_y||^2  over
// batches of random patches (batch_size from each set). The logged loss is
// that batch sum divided by the number of values in one patch. P1 and P2 are
// sampled from independent streams, and with lambda = 0 P2 is never touched.
StudentResult train_student(const std::vector<ImagePair>& synthetic, const std::vector<ImagePair>& real,
                            const StudentConfig& student_config, const TrainConfig& config);

// The logged batch loss for explicit patch lists (same normalization).
double distill_batch_loss(const StudentParams& params, const std::vector<ImagePair>& synthetic,
                          const std::vector<ImagePair>& real, double lambda);

}  // namespace blindspot
