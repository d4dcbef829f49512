#include "blindspot/distill.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include "blindspot/errors.hpp"
#include "blindspot/parallel.hpp"

namespace blindspot {

void StudentConfig::validate() const {
  if (channels != 1 && channels != 3) throw ConfigError("student supports 1 or 3 channels");
  if (depth == 0) throw ConfigError("student depth must be positive");
  if (width == 0) throw ConfigError("student width must be positive");
}

StudentParams make_student(const StudentConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  StudentParams p;
  p.config = config;
  for (std::size_t l = 0; l < config.depth; ++l) {
    const std::size_t in = l == 0 ? config.channels : config.width;
    const bool last = l + 1 == config.depth;
    const std::size_t out = last ? config.channels : config.width;
    // A small last layer starts the student near the identity map.
    p.layers.push_back(make_conv(in, out, 3, rng, last ? 0.1 : 1.0));
  }
  return p;
}

void for_each_param(StudentParams& params, const ParamVisitor& fn) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) visit_conv("layer" + std::to_string(l), params.layers[l], fn);
}

void for_each_param(const StudentParams& params, const ConstParamVisitor& fn) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) visit_conv("layer" + std::to_string(l), params.layers[l], fn);
}

Var student_forward(StudentParams& params, const Var& y, const ParamBinder& bind) {
  require_rank3(y.value(), "student_forward");
  if (y.value().channels() != params.config.channels) {
    throw DimensionError("student expects " + std::to_string(params.config.channels) + " channels, got " +
                         std::to_string(y.value().channels()));
  }
  Var h = y;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    h = apply_conv(params.layers[l], h, bind);
    if (l + 1 < params.layers.size()) h = relu(h);
  }
  return sub(y, h);
}

Tensor student_forward(const StudentParams& params, const Tensor& y) {
  Tape tape;
  auto& p = const_cast<StudentParams&>(params);
  return student_forward(p, tape.constant(y), constant_binder(tape)).value();
}

DistillPairs make_distill_pairs(const std::vector<CleanImage>& clean, const std::vector<NoisyImage>& noisy,
                                const Stage1Model& model, std::uint64_t seed, std::size_t threads) {
  if (clean.empty()) throw ConfigError("make_distill_pairs: no clean images");
  const auto& registry = model.registry.estimators;
  if (registry.empty()) throw ConfigError("make_distill_pairs: model has no estimators");
  std::vector<const std::string*> ids;
  for (const auto& [id, est] : registry) ids.push_back(&id);

  DistillPairs pairs;
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> noise_seeds;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng);
    pairs.estimator_choice.push_back(*ids[pick]);
    noise_seeds.push_back(rng());
  }
  pairs.synthetic.resize(clean.size());
  parallel_for(clean.size(), threads, [&](std::size_t i) {
    const CnnEstParams& est = registry.at(pairs.estimator_choice[i]);
    pairs.synthetic[i] = {clean[i].id, apply_learned_nlf(est, clean[i].pixels, noise_seeds[i]), clean[i].pixels};
  });
  pairs.real.resize(noisy.size());
  parallel_for(noisy.size(), threads, [&](std::size_t i) {
    pairs.real[i] = {noisy[i].id, noisy[i].pixels, denoise_stage1(model, noisy[i].pixels, noisy[i].id).denoised};
  });
  return pairs;
}

namespace {

struct PatchJob {
  const ImagePair* pair;
  std::size_t top, left;
  double weight;
};

PatchJob sample_patch(const std::vector<ImagePair>& set, std::size_t ps, double weight, std::mt19937_64& rng) {
  const ImagePair& p = set[std::uniform_int_distribution<std::size_t>(0, set.size() - 1)(rng)];
  const std::size_t top = std::uniform_int_distribution<std::size_t>(0, p.input.height() - ps)(rng);
  const std::size_t left = std::uniform_int_distribution<std::size_t>(0, p.input.width() - ps)(rng);
  return {&p, top, left, weight};
}

void check_pairs(const std::vector<ImagePair>& set, std::size_t channels, std::size_t ps, const char* name) {
  for (const ImagePair& p : set) {
    require_rank3(p.input, name);
    require_same_shape(p.input, p.target, name);
    if (p.input.channels() != channels) throw DimensionError(std::string(name) + ": channel mismatch");
    if (p.input.height() < ps || p.input.width() < ps) {
      throw ConfigError(std::string(name) + ": image '" + p.id + "' smaller than patch_size");
    }
  }
}

}  // namespace

StudentResult train_student(const std::vector<ImagePair>& synthetic, const std::vector<ImagePair>& real,
                            const StudentConfig& student_config, const TrainConfig& config) {
  config.validate();
  student_config.validate();
  if (synthetic.empty()) throw ConfigError("train_student: P1 is empty");
  const std::size_t ps = config.patch_size;
  check_pairs(synthetic, student_config.channels, ps, "P1");
  const bool use_real = config.lambda_distill > 0.0 && !real.empty();
  if (use_real) check_pairs(real, student_config.channels, ps, "P2");

  StudentResult result;
  result.params = make_student(student_config, config.seed);
  std::vector<Tensor*> params;
  for_each_param(result.params, [&](const std::string&, Tensor& t) { params.push_back(&t); });
  Adam adam(config.adam);
  std::mt19937_64 rng_p1(config.seed ^ 0x243f6a8885a308d3ULL);
  std::mt19937_64 rng_p2(config.seed ^ 0x13198a2e03707344ULL);
  const double norm = static_cast<double>(student_config.channels * ps * ps);
  const std::size_t steps_per_epoch = (config.patches_per_epoch + config.batch_size - 1) / config.batch_size;
  const auto start = std::chrono::steady_clock::now();
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr.at(epoch);
    std::vector<double> epoch_losses;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      std::vector<PatchJob> jobs;
      for (std::size_t k = 0; k < config.batch_size; ++k) jobs.push_back(sample_patch(synthetic, ps, 1.0, rng_p1));
      if (use_real) {
        for (std::size_t k = 0; k < config.batch_size; ++k) {
          jobs.push_back(sample_patch(real, ps, config.lambda_distill, rng_p2));
        }
      }
      std::vector<double> losses(jobs.size());
      std::vector<GradientCollector> collectors(jobs.size());
      parallel_for(jobs.size(), config.threads, [&](std::size_t k) {
        const PatchJob& job = jobs[k];
        const Tensor in = crop(job.pair->input, job.top, job.left, ps, ps);
        const Tensor target = crop(job.pair->target, job.top, job.left, ps, ps);
        Tape tape;
        const ParamBinder bind = collectors[k].binder(tape);
        const Var out = student_forward(result.params, tape.constant(in), bind);
        const Var loss = scale(sum_squared_error(out, target), job.weight / norm);
        losses[k] = loss.value()[0];
        if (!std::isfinite(losses[k])) return;
        tape.backward(loss);
        collectors[k].collect(tape);
      });
      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      ++step;
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite student loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(s) + " (step " + std::to_string(step) + ")");
      }
      for (Tensor* t : params) t->grad().clear();
      for (const GradientCollector& c : collectors) c.accumulate_into_params();
      adam.step(params, lr);
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      result.log.rows.push_back({epoch + 1, step, batch_loss, lr, ms});
      epoch_losses.push_back(batch_loss);
    }
    double total = 0.0;
    for (double l : epoch_losses) total += l;
    result.log.epoch_mean_loss.push_back(total / static_cast<double>(epoch_losses.size()));
  }
  for (Tensor* t : params) t->grad().clear();
  return result;
}

double distill_batch_loss(const StudentParams& params, const std::vector<ImagePair>& synthetic,
                          const std::vector<ImagePair>& real, double lambda) {
  if (synthetic.empty()) throw ConfigError("distill_batch_loss: P1 is empty");
  const double norm = static_cast<double>(synthetic.front().input.numel());
  auto sse = [&](const ImagePair& p) {
    const Tensor out = student_forward(params, p.input);
    require_same_shape(out, p.target, "distill_batch_loss");
    double s = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) s += (out[i] - p.target[i]) * (out[i] - p.target[i]);
    return s;
  };
  double total = 0.0;
  for (const ImagePair& p : synthetic) total += sse(p) / norm;
  if (lambda > 0.0) {
    for (const ImagePair& p : real) total += lambda * sse(p) / norm;
  }
  return total;
}

}  // namespace blindspot
