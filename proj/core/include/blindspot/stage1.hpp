#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "blindspot/config_file.hpp"
#include "blindspot/dbsn.hpp"
#include "blindspot/noise_model.hpp"
#include "blindspot/optimizer.hpp"

namespace blindspot {

struct TrainConfig {
  std::size_t patch_size = 32;
  std::size_t patches_per_epoch = 2000;
  std::size_t epochs = 30;
  std::size_t batch_size = 4;
  LrSchedule lr{3e-4, 0.1, 5, 3e-7};
  AdamConfig adam;
  double lambda_distill = 0.1;
  std::uint64_t seed = 0;
  // Workers for per-patch forward/backward; results do not depend on it.
  std::size_t threads = 1;

  static TrainConfig paper();
  static TrainConfig desk();
  void validate() const;
  // Overrides fields from "key = value" entries (patch_size, patches_per_epoch,
  // epochs, batch_size, lr, lr_decay, lr_step_epochs, lr_floor, lambda, seed, threads).
  void apply(const ConfigMap& cfg);
};

struct NoisyImage {
  std::string id;
  Tensor pixels;
};

// One CNN_est per training image, keyed by image id, with the image's mean
// intensity for nearest-image fallback at inference.
struct EstimatorRegistry {
  std::map<std::string, CnnEstParams> estimators;
  std::map<std::string, double> mean_intensity;

  // Estimator for `id`, or the one whose image mean is closest to
  // `mean_hint` (ties broken by id order). Sets `fallback` accordingly.
  const CnnEstParams& lookup(const std::string& id, double mean_hint, std::string* chosen_id,
                             bool* fallback) const;
};

struct Stage1Model {
  DbsnParams dbsn;
  EstimatorRegistry registry;
};

struct TrainLogRow {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // global optimizer step, 1-based
  double loss = 0.0;      // batch loss before the update
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::vector<double> epoch_mean_loss;

  void write_csv(std::ostream& out) const;
};

struct Stage1Result {
  Stage1Model model;
  TrainLog log;
};

double mean_intensity(const Tensor& t);

// Joint training of the shared D-BSN and the per-image estimators on random
// patches. Loss pixels exclude a border of the receptive radius.
Stage1Result train_stage1(const std::vector<NoisyImage>& images, const DbsnConfig& dbsn_config,
                          const TrainConfig& config);

struct Stage1Options {
  bool zero_sigma_mu = false;  // fuse with Sigma_mu = 0 (returns mu)
  // Mirror-pad by the receptive radius before the D-BSN so border pixels see
  // image-like context instead of zeros; the output is cropped back.
  bool reflect_border = true;
};

struct Stage1Output {
  Tensor denoised;
  Tensor mu;
  CovField sigma_n;
  CovField sigma_mu;
  std::string estimator_id;
  bool used_fallback = false;
};

Stage1Output denoise_stage1(const Stage1Model& model, const Tensor& y, const std::string& id,
                            const Stage1Options& options = {});

}  // namespace blindspot
