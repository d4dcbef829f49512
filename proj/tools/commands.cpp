#include "commands.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "acceptance.hpp"
#include "blindspot/checkpoint.hpp"
#include "blindspot/config_file.hpp"
#include "blindspot/dbsn.hpp"
#include "blindspot/distill.hpp"
#include "blindspot/errors.hpp"
#include "blindspot/image_io.hpp"
#include "blindspot/metrics.hpp"
#include "blindspot/noise_model.hpp"
#include "blindspot/parallel.hpp"
#include "blindspot/real_pipeline.hpp"
#include "blindspot/stage1.hpp"
#include "blindspot/synthetic.hpp"

namespace blindspot::cli {

namespace fs = std::filesystem;

namespace {

// Keys that shape the networks rather than the optimizer.
const std::set<std::string> kNetKeys{"base_channels", "mdc_per_branch", "student_depth",
                                     "student_width"};

struct TrainingArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value, applied after the file
  std::string preset = "desk";
  std::string log_path;
};

void add_training_options(CLI::App& cmd, TrainingArgs& a) {
  cmd.add_option("--config", a.config_path, "Config file of key = value lines")->check(CLI::ExistingFile);
  cmd.add_option("--set", a.overrides, "Override a config key (key=value); wins over --config");
  cmd.add_option("--preset", a.preset, "Base settings before the config file")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd.add_option("--log", a.log_path, "Write the training log as CSV");
}

struct ResolvedTraining {
  TrainConfig train;
  ConfigMap net;  // network-shape keys only
};

ResolvedTraining resolve(const TrainingArgs& a) {
  ConfigMap merged = a.config_path.empty() ? ConfigMap{} : ConfigMap::load(a.config_path);
  for (const std::string& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
    merged.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  ResolvedTraining r;
  r.train = a.preset == "paper" ? TrainConfig::paper() : TrainConfig::desk();
  if (!merged.contains("threads")) r.train.threads = configured_threads();
  ConfigMap train_keys;
  for (const auto& [k, v] : merged.values()) (kNetKeys.count(k) ? r.net : train_keys).set(k, v);
  r.train.apply(train_keys);
  return r;
}

DbsnConfig dbsn_config(const ConfigMap& net, std::size_t channels, const std::string& preset) {
  DbsnConfig cfg = preset == "paper" ? DbsnConfig{} : DbsnConfig::desk();
  cfg.in_channels = channels;
  cfg.base_channels = net.get_size("base_channels", cfg.base_channels);
  cfg.mdc_per_branch = net.get_size("mdc_per_branch", cfg.mdc_per_branch);
  cfg.validate();
  return cfg;
}

void write_log(const std::string& path, const TrainLog& log) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write log " + path);
  log.write_csv(out);
}

std::vector<NoisyImage> load_noisy(const std::vector<std::string>& paths) {
  std::vector<NoisyImage> out;
  for (const std::string& p : paths) {
    Image img = load_image(p);
    out.push_back({img.id, std::move(img.pixels)});
  }
  if (out.empty()) throw ConfigError("no input images");
  for (const NoisyImage& n : out) {
    if (n.pixels.channels() != out.front().pixels.channels()) {
      throw DimensionError("input images mix gray and color: " + n.id);
    }
  }
  return out;
}

void print_epochs(std::ostream& out, const TrainLog& log) {
  for (std::size_t e = 0; e < log.epoch_mean_loss.size(); ++e) {
    out << "epoch " << e + 1 << " mean loss " << std::setprecision(6) << log.epoch_mean_loss[e] << '\n';
  }
}

// Distillation pairs on disk: a manifest plus one tensor file per image.
constexpr const char* kManifest = "pairs.txt";

void save_pairs(const fs::path& dir, const DistillPairs& pairs) {
  fs::create_directories(dir);
  std::ofstream manifest(dir / kManifest);
  if (!manifest) throw IoError("cannot write " + (dir / kManifest).string());
  auto emit = [&](const char* set, std::size_t i, const ImagePair& p, const std::string& note) {
    const std::string stem = std::string(set) + "_" + std::to_string(i);
    save_tensor(dir / (stem + "_input.tensor"), p.input);
    save_tensor(dir / (stem + "_target.tensor"), p.target);
    manifest << set << ' ' << stem << ' ' << p.id << ' ' << note << '\n';
  };
  for (std::size_t i = 0; i < pairs.synthetic.size(); ++i) {
    emit("p1", i, pairs.synthetic[i], pairs.estimator_choice[i]);
  }
  for (std::size_t i = 0; i < pairs.real.size(); ++i) emit("p2", i, pairs.real[i], "-");
}

DistillPairs load_pairs(const fs::path& dir) {
  std::ifstream manifest(dir / kManifest);
  if (!manifest) throw IoError("no " + std::string(kManifest) + " in " + dir.string());
  DistillPairs pairs;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string set, stem, id, note;
    if (!(is >> set >> stem >> id >> note) || (set != "p1" && set != "p2")) {
      throw IoError("malformed pair manifest line: " + line);
    }
    ImagePair p{id, load_tensor(dir / (stem + "_input.tensor")), load_tensor(dir / (stem + "_target.tensor"))};
    (set == "p1" ? pairs.synthetic : pairs.real).push_back(std::move(p));
  }
  return pairs;
}

// --- subcommands ---------------------------------------------------------

struct SynthArgs {
  std::string nlf, in, out, clean_out;
  std::uint64_t seed = 0;
  std::uint64_t scene = 0;
  std::vector<std::size_t> size{64, 64};
  std::size_t channels = 1;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  Tensor clean;
  if (!a.in.empty()) {
    clean = load_image(a.in).pixels;
  } else {
    clean = synthetic_scene(a.channels, a.size.at(0), a.size.at(1), a.scene);
  }
  const NoiseLevelFunction nlf = parse_nlf_spec(a.nlf, clean.channels());
  save_image(a.out, synthesize(nlf, clean, a.seed));
  if (!a.clean_out.empty()) save_image(a.clean_out, clean);
  out << "wrote " << a.out << " (" << nlf.describe() << ", seed " << a.seed << ")\n";
  return kExitOk;
}

struct TrainStage1Args {
  std::vector<std::string> inputs;
  std::string out;
  bool real = false;
  bool shared = false;
  TrainingArgs training;
};

int cmd_train_stage1(const TrainStage1Args& a, std::ostream& out) {
  const ResolvedTraining r = resolve(a.training);
  const auto images = load_noisy(a.inputs);
  const DbsnConfig net = dbsn_config(r.net, images.front().pixels.channels(), a.training.preset);
  const auto start = std::chrono::steady_clock::now();
  if (a.real) {
    const RealModel model = train_real(images, net, r.train, a.shared);
    save_real_model(a.out, model);
    out << "trained " << model.groups.size() << " sub-image model(s)\n";
  } else {
    const Stage1Result result = train_stage1(images, net, r.train);
    save_stage1(a.out, result.model);
    write_log(a.training.log_path, result.log);
    print_epochs(out, result.log);
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << "saved " << a.out << " after " << std::fixed << std::setprecision(1) << s << " s\n";
  return kExitOk;
}

struct DenoiseStage1Args {
  std::string ckpt, in, out, id, sigma_out;
};

int cmd_denoise_stage1(const DenoiseStage1Args& a, std::ostream& out) {
  const Stage1Model model = load_stage1(a.ckpt);
  const Image img = load_image(a.in);
  const Stage1Output res = denoise_stage1(model, img.pixels, a.id.empty() ? img.id : a.id);
  save_image(a.out, res.denoised);
  if (!a.sigma_out.empty()) save_tensor(a.sigma_out, res.sigma_n.packed());
  out << "estimator " << res.estimator_id << (res.used_fallback ? " (fallback by mean intensity)" : "")
      << "\nwrote " << a.out << '\n';
  return kExitOk;
}

struct DistillPairsArgs {
  std::string ckpt, out_dir;
  std::vector<std::string> clean, noisy;
  std::uint64_t seed = 0;
};

int cmd_distill_pairs(const DistillPairsArgs& a, std::ostream& out) {
  const Stage1Model model = load_stage1(a.ckpt);
  std::vector<CleanImage> clean;
  for (const std::string& p : a.clean) {
    Image img = load_image(p);
    clean.push_back({img.id, std::move(img.pixels)});
  }
  const DistillPairs pairs = make_distill_pairs(clean, load_noisy(a.noisy), model, a.seed, configured_threads());
  save_pairs(a.out_dir, pairs);
  out << "P1 " << pairs.synthetic.size() << " pairs, P2 " << pairs.real.size() << " pairs in " << a.out_dir
      << '\n';
  return kExitOk;
}

struct TrainStudentArgs {
  std::string pairs, out;
  TrainingArgs training;
};

int cmd_train_student(const TrainStudentArgs& a, std::ostream& out) {
  const ResolvedTraining r = resolve(a.training);
  const DistillPairs pairs = load_pairs(a.pairs);
  if (pairs.synthetic.empty()) throw ConfigError("pair set has no synthetic (P1) pairs");
  StudentConfig sc;
  sc.channels = pairs.synthetic.front().input.channels();
  sc.depth = r.net.get_size("student_depth", sc.depth);
  sc.width = r.net.get_size("student_width", sc.width);
  const StudentResult result = train_student(pairs.synthetic, pairs.real, sc, r.train);
  save_student(a.out, result.params);
  write_log(a.training.log_path, result.log);
  print_epochs(out, result.log);
  out << "saved " << a.out << '\n';
  return kExitOk;
}

struct DenoiseArgs {
  std::string ckpt, in, out, ref, id;
  bool real = false;
};

int cmd_denoise(const DenoiseArgs& a, std::ostream& out) {
  const Image img = load_image(a.in);
  Tensor result;
  if (a.real) {
    result = real_denoise(load_real_model(a.ckpt), img.pixels, a.id.empty() ? img.id : a.id,
                          configured_threads());
  } else {
    result = student_forward(load_student(a.ckpt), img.pixels);
  }
  save_image(a.out, result);
  out << "wrote " << a.out << '\n';
  if (!a.ref.empty()) {
    const Tensor ref = load_image(a.ref).pixels;
    out << std::fixed << std::setprecision(3) << "psnr input=" << psnr(ref, img.pixels, true)
        << " output=" << psnr(ref, result, true) << '\n';
  }
  return kExitOk;
}

struct VerifyArgs {
  std::size_t channels = 1;
  std::size_t base = DbsnConfig{}.base_channels;
  std::size_t modules = DbsnConfig{}.mdc_per_branch;
};

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  DbsnConfig cfg;
  cfg.in_channels = a.channels;
  cfg.base_channels = a.base;
  cfg.mdc_per_branch = a.modules;
  cfg.validate();
  const TaintReport report = verify_blindspot(cfg);
  out << report.summary();
  return report.blind ? kExitOk : kExitInternal;
}

struct MetricsArgs {
  std::string ref, test;
};

int cmd_metrics(const MetricsArgs& a, std::ostream& out) {
  const Tensor ref = load_image(a.ref).pixels, test = load_image(a.test).pixels;
  out << std::fixed << "psnr=" << std::setprecision(3) << psnr(ref, test) << " ssim=" << std::setprecision(4)
      << ssim(ref, test) << '\n';
  return kExitOk;
}

struct SelftestArgs {
  std::vector<int> only;
  std::string record;
  bool verbose = false;
};

int cmd_selftest(const SelftestArgs& a, std::ostream& out) {
  acceptance::Options options;
  options.only = a.only;
  if (!a.record.empty()) options.record = a.record;
  options.threads = configured_threads();
  options.verbose = a.verbose;
  return acceptance::run_suite(options, out) == 0 ? kExitOk : kExitInternal;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised blind-spot denoising"};
  app.name("bsdenoise");
  app.require_subcommand(1);
  std::function<int()> action;

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Add synthetic noise to an image (or a generated scene)");
  s->add_option("--nlf", synth.nlf, "awgn:sigma=S | hg:alpha=A,delta=D | mg:scale=S,seed=K")->required();
  auto* in_opt = s->add_option("--in", synth.in, "Clean input image")->check(CLI::ExistingFile);
  s->add_option("--scene", synth.scene, "Generate a synthetic scene with this seed")->excludes(in_opt);
  s->add_option("--size", synth.size, "Scene height and width")->expected(2);
  s->add_option("--channels", synth.channels, "Scene channels (1 or 3)")->check(CLI::IsMember({1, 3}));
  s->add_option("--out", synth.out, "Noisy output image")->required();
  s->add_option("--clean-out", synth.clean_out, "Also save the clean image");
  s->add_option("--seed", synth.seed, "Noise seed");
  s->callback([&] { action = [&] { return cmd_synth(synth, out); }; });

  TrainStage1Args ts1;
  auto* t1 = app.add_subcommand("train-stage1", "Train D-BSN and per-image noise estimators");
  t1->add_option("inputs", ts1.inputs, "Noisy training images")->required()->check(CLI::ExistingFile);
  t1->add_option("--out", ts1.out, "Checkpoint path")->required();
  t1->add_flag("--real", ts1.real, "Train on pixel-shuffled sub-images (one model per phase group)");
  t1->add_flag("--shared", ts1.shared, "With --real: a single model for all groups");
  add_training_options(*t1, ts1.training);
  t1->callback([&] { action = [&] { return cmd_train_stage1(ts1, out); }; });

  DenoiseStage1Args ds1;
  auto* d1 = app.add_subcommand("denoise-stage1", "Blind-spot prediction fused with the estimated noise");
  d1->add_option("--ckpt", ds1.ckpt, "Stage-1 checkpoint")->required()->check(CLI::ExistingFile);
  d1->add_option("--in", ds1.in, "Noisy image")->required()->check(CLI::ExistingFile);
  d1->add_option("--out", ds1.out, "Denoised image")->required();
  d1->add_option("--id", ds1.id, "Estimator id (default: file stem)");
  d1->add_option("--sigma-out", ds1.sigma_out, "Save the per-pixel noise covariance map");
  d1->callback([&] { action = [&] { return cmd_denoise_stage1(ds1, out); }; });

  DistillPairsArgs dp;
  auto* p = app.add_subcommand("distill-pairs", "Build synthetic and pseudo-clean training pairs");
  p->add_option("--ckpt", dp.ckpt, "Stage-1 checkpoint")->required()->check(CLI::ExistingFile);
  p->add_option("--clean", dp.clean, "Clean images")->required()->check(CLI::ExistingFile);
  p->add_option("--noisy", dp.noisy, "Real noisy images")->required()->check(CLI::ExistingFile);
  p->add_option("--out-dir", dp.out_dir, "Output directory")->required();
  p->add_option("--seed", dp.seed, "Selection and noise seed");
  p->callback([&] { action = [&] { return cmd_distill_pairs(dp, out); }; });

  TrainStudentArgs tst;
  auto* st = app.add_subcommand("train-student", "Train the student denoiser on distillation pairs");
  st->add_option("--pairs", tst.pairs, "Directory written by distill-pairs")->required()->check(CLI::ExistingDirectory);
  st->add_option("--out", tst.out, "Student checkpoint path")->required();
  add_training_options(*st, tst.training);
  st->callback([&] { action = [&] { return cmd_train_student(tst, out); }; });

  DenoiseArgs dn;
  auto* d = app.add_subcommand("denoise", "Denoise with a student (or, with --real, the sub-image pipeline)");
  d->add_option("--ckpt", dn.ckpt, "Student or real-pipeline checkpoint")->required()->check(CLI::ExistingFile);
  d->add_option("--in", dn.in, "Noisy image")->required()->check(CLI::ExistingFile);
  d->add_option("--out", dn.out, "Denoised image")->required();
  d->add_option("--ref", dn.ref, "Clean reference; prints PSNR of input and output")->check(CLI::ExistingFile);
  d->add_option("--id", dn.id, "Image id for estimator lookup (with --real)");
  d->add_flag("--real", dn.real, "Pixel-shuffle, per-group blind-spot denoising, guided filter");
  d->callback([&] { action = [&] { return cmd_denoise(dn, out); }; });

  VerifyArgs va;
  auto* v = app.add_subcommand("verify-blindspot", "Check that no output depends on its own input pixel");
  v->add_option("--channels", va.channels, "Input channels")->check(CLI::IsMember({1, 3}));
  v->add_option("--base-channels", va.base, "Feature width");
  v->add_option("--mdc", va.modules, "Dilated modules per branch");
  v->callback([&] { action = [&] { return cmd_verify(va, out); }; });

  MetricsArgs ma;
  auto* m = app.add_subcommand("metrics", "PSNR and SSIM between two images");
  m->add_option("--ref", ma.ref, "Reference image")->required()->check(CLI::ExistingFile);
  m->add_option("--test", ma.test, "Test image")->required()->check(CLI::ExistingFile);
  m->callback([&] { action = [&] { return cmd_metrics(ma, out); }; });

  SelftestArgs sa;
  auto* t = app.add_subcommand("selftest", "Run the acceptance suite");
  t->add_option("--only", sa.only, "Criterion ids to run");
  t->add_option("--record", sa.record, "Also write results to this file");
  t->add_flag("-v,--verbose", sa.verbose, "Print diagnostics");
  t->callback([&] { action = [&] { return cmd_selftest(sa, out); }; });

  if (argc > 1 && argv[1][0] != '-') {
    const std::string name = argv[1];
    bool known = false;
    for (const CLI::App* sub : app.get_subcommands({})) known = known || sub->get_name() == name;
    if (!known) {
      err << "error: unknown subcommand '" << name << "'\n\n" << app.help();
      return kExitUser;
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUser;
  }

  try {
    return action();
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitInternal;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitUser;
  } catch (const std::invalid_argument& e) {  // ConfigError, DimensionError
    err << "error: " << e.what() << '\n';
    return kExitUser;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace blindspot::cli
