#include "blindspot/stage1.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

#include "blindspot/errors.hpp"
#include "blindspot/loss.hpp"
#include "blindspot/parallel.hpp"

namespace blindspot {

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.patch_size = 96;
  c.patches_per_epoch = 48000;
  c.epochs = 180;
  c.lr = LrSchedule{3e-4, 0.1, 30, 3e-7};
  return c;
}

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

void TrainConfig::validate() const {
  if (patch_size == 0) throw ConfigError("patch_size must be positive");
  if (patches_per_epoch == 0) throw ConfigError("patches_per_epoch must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lambda_distill >= 0.0)) throw ConfigError("lambda must be non-negative");
  lr.validate();
}

void TrainConfig::apply(const ConfigMap& cfg) {
  cfg.require_known({"patch_size", "patches_per_epoch", "epochs", "batch_size", "lr", "lr_decay",
                     "lr_step_epochs", "lr_floor", "lambda", "seed", "threads"});
  patch_size = cfg.get_size("patch_size", patch_size);
  patches_per_epoch = cfg.get_size("patches_per_epoch", patches_per_epoch);
  epochs = cfg.get_size("epochs", epochs);
  batch_size = cfg.get_size("batch_size", batch_size);
  lr.initial = cfg.get_double("lr", lr.initial);
  lr.factor = cfg.get_double("lr_decay", lr.factor);
  lr.step_epochs = cfg.get_size("lr_step_epochs", lr.step_epochs);
  lr.floor = cfg.get_double("lr_floor", lr.floor);
  lambda_distill = cfg.get_double("lambda", lambda_distill);
  seed = cfg.get_size("seed", seed);
  threads = cfg.get_size("threads", threads);
  validate();
}

void TrainLog::write_csv(std::ostream& out) const {
  out << "epoch,step,loss,lr,wall_ms\n";
  out.precision(17);
  for (const TrainLogRow& r : rows) {
    out << r.epoch << ',' << r.step << ',' << r.loss << ',' << r.lr << ',' << r.wall_ms << '\n';
  }
}

double mean_intensity(const Tensor& t) {
  if (t.numel() == 0) return 0.0;
  return pairwise_sum(t.data()) / static_cast<double>(t.numel());
}

const CnnEstParams& EstimatorRegistry::lookup(const std::string& id, double mean_hint,
                                              std::string* chosen_id, bool* fallback) const {
  if (estimators.empty()) throw ConfigError("estimator registry is empty");
  auto it = estimators.find(id);
  bool fell_back = false;
  if (it == estimators.end()) {
    fell_back = true;
    double best = std::numeric_limits<double>::infinity();
    for (auto e = estimators.begin(); e != estimators.end(); ++e) {
      const auto m = mean_intensity.find(e->first);
      const double d = m == mean_intensity.end() ? std::numeric_limits<double>::max()
                                                  : std::abs(m->second - mean_hint);
      if (d < best || it == estimators.end()) {
        if (d < best) best = d;
        it = e;
      }
    }
  }
  if (chosen_id) *chosen_id = it->first;
  if (fallback) *fallback = fell_back;
  return it->second;
}

namespace {

struct PatchRef {
  std::size_t image;
  std::size_t top;
  std::size_t left;
};

std::vector<Tensor*> param_list(DbsnParams& p) {
  std::vector<Tensor*> out;
  for_each_param(p, [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<Tensor*> param_list(CnnEstParams& p) {
  std::vector<Tensor*> out;
  for_each_param(p, [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

}  // namespace

Stage1Result train_stage1(const std::vector<NoisyImage>& images, const DbsnConfig& dbsn_config,
                          const TrainConfig& config) {
  config.validate();
  dbsn_config.validate();
  if (images.empty()) throw ConfigError("train_stage1: no training images");
  const std::size_t ps = config.patch_size;
  const auto radius = static_cast<std::size_t>(dbsn_receptive_radius(dbsn_config));
  if (2 * radius >= ps) {
    throw ConfigError("patch_size " + std::to_string(ps) + " leaves no valid pixels for receptive radius " +
                      std::to_string(radius));
  }
  for (const NoisyImage& img : images) {
    require_rank3(img.pixels, "train_stage1 image");
    if (img.pixels.channels() != dbsn_config.in_channels) {
      throw DimensionError("image '" + img.id + "' has " + std::to_string(img.pixels.channels()) +
                           " channels, model expects " + std::to_string(dbsn_config.in_channels));
    }
    if (img.pixels.height() < ps || img.pixels.width() < ps) {
      throw ConfigError("image '" + img.id + "' is smaller than patch_size " + std::to_string(ps));
    }
  }

  Stage1Result result;
  Stage1Model& model = result.model;
  model.dbsn = make_dbsn(dbsn_config, config.seed);
  std::vector<CnnEstParams*> est_of_image;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const NoisyImage& img = images[i];
    if (model.registry.estimators.count(img.id)) throw ConfigError("duplicate image id '" + img.id + "'");
    const double init_sigma = std::max(estimate_noise_sigma(img.pixels), 1e-3);
    model.registry.estimators.emplace(
        img.id, make_cnn_est(dbsn_config.in_channels, config.seed + 0x9e3779b97f4a7c15ULL * (i + 1), init_sigma));
    model.registry.mean_intensity[img.id] = mean_intensity(img.pixels);
  }
  for (const NoisyImage& img : images) est_of_image.push_back(&model.registry.estimators.at(img.id));

  const ValidMask mask = ValidMask::interior(ps, ps, radius);
  const std::vector<Tensor*> dbsn_params = param_list(model.dbsn);
  Adam adam(config.adam);
  std::mt19937_64 rng(config.seed ^ 0x5bd1e995ULL);
  const auto start = std::chrono::steady_clock::now();
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr.at(epoch);
    std::vector<PatchRef> patches(config.patches_per_epoch);
    for (PatchRef& p : patches) {
      p.image = std::uniform_int_distribution<std::size_t>(0, images.size() - 1)(rng);
      const Tensor& t = images[p.image].pixels;
      p.top = std::uniform_int_distribution<std::size_t>(0, t.height() - ps)(rng);
      p.left = std::uniform_int_distribution<std::size_t>(0, t.width() - ps)(rng);
    }
    std::vector<double> batch_losses;
    for (std::size_t b0 = 0; b0 < patches.size(); b0 += config.batch_size) {
      const std::size_t nb = std::min(config.batch_size, patches.size() - b0);
      std::vector<double> losses(nb);
      std::vector<GradientCollector> collectors(nb);
      std::vector<std::string> errors(nb);
      parallel_for(nb, config.threads, [&](std::size_t k) {
        const PatchRef& p = patches[b0 + k];
        const Tensor y = crop(images[p.image].pixels, p.top, p.left, ps, ps);
        Tape tape;
        const ParamBinder bind = collectors[k].binder(tape);
        const Var yv = tape.constant(y);
        const DbsnVars out = dbsn_forward(tape, model.dbsn, yv, bind);
        const Var sn = cnn_est_forward(tape, *est_of_image[p.image], yv, bind);
        try {
          const Var loss = constrained_nll(y, out.mu, sn, out.sigma_mu, mask);
          losses[k] = loss.value()[0];
          if (!std::isfinite(losses[k])) return;
          tape.backward(scale(loss, 1.0 / static_cast<double>(nb)));
          collectors[k].collect(tape);
        } catch (const NumericError& e) {
          errors[k] = e.what();
          losses[k] = std::numeric_limits<double>::quiet_NaN();
        }
      });
      const std::size_t batch_index = b0 / config.batch_size;
      for (std::size_t k = 0; k < nb; ++k) {
        if (!std::isfinite(losses[k])) {
          throw NumericError("non-finite loss in epoch " + std::to_string(epoch + 1) + ", batch " +
                             std::to_string(batch_index) + " (step " + std::to_string(step + 1) + ")" +
                             (errors[k].empty() ? std::string() : ": " + errors[k]));
        }
      }
      for (Tensor* t : dbsn_params) t->grad().clear();
      for (auto& [id, est] : model.registry.estimators) {
        for (Tensor* t : param_list(est)) t->grad().clear();
      }
      for (const GradientCollector& c : collectors) c.accumulate_into_params();

      adam.step(dbsn_params, lr);
      // Only estimators whose image appears in this batch are updated.
      std::vector<std::size_t> touched;
      for (std::size_t k = 0; k < nb; ++k) touched.push_back(patches[b0 + k].image);
      std::sort(touched.begin(), touched.end());
      touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
      for (std::size_t i : touched) adam.step(param_list(*est_of_image[i]), lr);

      const double batch_loss = pairwise_sum(losses) / static_cast<double>(nb);
      ++step;
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      result.log.rows.push_back({epoch + 1, step, batch_loss, lr, ms});
      batch_losses.push_back(batch_loss);
    }
    result.log.epoch_mean_loss.push_back(pairwise_sum(batch_losses) /
                                         static_cast<double>(batch_losses.size()));
  }
  for (Tensor* t : dbsn_params) t->grad().clear();
  for (auto& [id, est] : model.registry.estimators) {
    for (Tensor* t : param_list(est)) t->grad().clear();
  }
  return result;
}

Stage1Output denoise_stage1(const Stage1Model& model, const Tensor& y, const std::string& id,
                            const Stage1Options& options) {
  require_rank3(y, "denoise_stage1");
  Stage1Output out;
  const CnnEstParams& est =
      model.registry.lookup(id, mean_intensity(y), &out.estimator_id, &out.used_fallback);
  const std::size_t h = y.height(), w = y.width();
  if (options.reflect_border) {
    const auto r = static_cast<std::size_t>(dbsn_receptive_radius(model.dbsn.config));
    const MuSigmaOutput net = dbsn_forward(model.dbsn, reflect_pad(y, r, r, r, r));
    out.mu = crop(net.mu, r, r, h, w);
    out.sigma_mu = CovField(crop(net.sigma_mu.packed(), r, r, h, w));
  } else {
    MuSigmaOutput net = dbsn_forward(model.dbsn, y);
    out.mu = std::move(net.mu);
    out.sigma_mu = std::move(net.sigma_mu);
  }
  if (options.zero_sigma_mu) out.sigma_mu = CovField(y.channels(), h, w);
  out.sigma_n = cnn_est_forward(est, y);
  out.denoised = bayes_fuse(y, out.mu, out.sigma_n, out.sigma_mu);
  return out;
}

}  // namespace blindspot
