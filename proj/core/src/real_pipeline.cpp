#include "blindspot/real_pipeline.hpp"

#include "blindspot/errors.hpp"
#include "blindspot/guided_filter.hpp"
#include "blindspot/parallel.hpp"

namespace blindspot {

const Stage1Model& RealModel::for_group(std::size_t g) const {
  if (groups.size() == 1) return groups.front();
  if (g >= groups.size()) {
    throw ConfigError("no stage-1 model for sub-image group " + std::to_string(g) + " (model has " +
                      std::to_string(groups.size()) + ")");
  }
  return groups[g];
}

std::string sub_image_id(const std::string& id, std::size_t index) {
  return id + "/s" + std::to_string(index);
}

Tensor real_denoise_pipeline(const Tensor& y, const SubImageDenoiser& denoise, std::size_t threads, int radius,
                             double eps) {
  SubImageSet set = ps_down(y);
  std::vector<Tensor> out(set.subs.size());
  parallel_for(set.subs.size(), threads,
               [&](std::size_t i) { out[i] = denoise(set.subs[i], set.group_of_index(i), i); });
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].shape() != set.subs[i].shape()) {
      throw DimensionError("sub-image denoiser changed the shape of phase " + std::to_string(i));
    }
    set.subs[i] = std::move(out[i]);
  }
  const Tensor merged = ps_up(set);
  return guided_filter(merged, merged, radius, eps);
}

Tensor real_denoise(const RealModel& model, const Tensor& y, const std::string& id, std::size_t threads) {
  if (model.groups.size() != 1 && model.groups.size() != 4) {
    throw ConfigError("real model must hold 1 (shared) or 4 group models, has " +
                      std::to_string(model.groups.size()));
  }
  return real_denoise_pipeline(
      y,
      [&](const Tensor& sub, std::size_t group, std::size_t index) {
        return denoise_stage1(model.for_group(group), sub, sub_image_id(id, index)).denoised;
      },
      threads);
}

RealModel train_real(const std::vector<NoisyImage>& images, const DbsnConfig& dbsn_config,
                     const TrainConfig& config, bool shared) {
  if (images.empty()) throw ConfigError("train_real: no training images");
  std::array<std::vector<NoisyImage>, 4> per_group;
  for (const NoisyImage& img : images) {
    const SubImageSet set = ps_down(img.pixels);
    for (std::size_t i = 0; i < set.subs.size(); ++i) {
      per_group[shared ? 0 : set.group_of_index(i)].push_back({sub_image_id(img.id, i), set.subs[i]});
    }
  }
  RealModel model;
  const std::size_t n = shared ? 1 : 4;
  for (std::size_t g = 0; g < n; ++g) {
    TrainConfig c = config;
    c.seed = config.seed + g;
    model.groups.push_back(train_stage1(per_group[g], dbsn_config, c).model);
  }
  return model;
}

}  // namespace blindspot
