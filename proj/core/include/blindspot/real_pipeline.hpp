#pragma once

#include <functional>
#include <vector>

#include "blindspot/pixel_shuffle.hpp"
#include "blindspot/stage1.hpp"

namespace blindspot {

// Stage-1 models for the four Bayer groups of the factor-4 decomposition,
// or a single model shared by all groups.
struct RealModel {
  std::vector<Stage1Model> groups;

  bool shared() const { return groups.size() == 1; }
  const Stage1Model& for_group(std::size_t g) const;
};

inline constexpr int kGuidedRadius = 1;
inline constexpr double kGuidedEps = 0.01;

// Estimator id of sub-image `index` of image `id`.
std::string sub_image_id(const std::string& id, std::size_t index);

// Denoises one sub-image: (sub-image, group, phase index) -> estimate.
using SubImageDenoiser = std::function<Tensor(const Tensor&, std::size_t, std::size_t)>;

// ps_down -> per-sub-image denoise -> ps_up -> self-guided filter.
Tensor real_denoise_pipeline(const Tensor& y, const SubImageDenoiser& denoise, std::size_t threads = 1,
                             int radius = kGuidedRadius, double eps = kGuidedEps);
Tensor real_denoise(const RealModel& model, const Tensor& y, const std::string& id,
                    std::size_t threads = 1);

// Trains one stage-1 model per group on the sub-images of that group (or one
// model on all sub-images when `shared`).
RealModel train_real(const std::vector<NoisyImage>& images, const DbsnConfig& dbsn_config,
                     const TrainConfig& config, bool shared = false);

}  // namespace blindspot
