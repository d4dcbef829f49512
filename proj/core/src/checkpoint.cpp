#include "blindspot/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "blindspot/distill.hpp"
#include "blindspot/errors.hpp"
#include "blindspot/real_pipeline.hpp"

namespace blindspot {

namespace {

using Records = std::map<std::string, Tensor>;

constexpr char kStage1Magic[4] = {'D', 'B', 'S', 'N'};
constexpr char kRealMagic[4] = {'D', 'B', 'S', 'R'};
constexpr char kStudentMagic[4] = {'S', 'T', 'D', 'N'};

void write_magic(std::ostream& out, const char (&magic)[4]) {
  out.write(magic, 4);
  write_u32(out, kCheckpointVersion);
}

void read_magic(std::istream& in, const char (&magic)[4]) {
  char buf[4] = {};
  in.read(buf, 4);
  if (in.gcount() != 4 || std::memcmp(buf, magic, 4) != 0) {
    throw IoError("not a " + std::string(magic, 4) + " checkpoint");
  }
  const std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
}

void write_records(std::ostream& out, const std::vector<std::pair<std::string, const Tensor*>>& recs) {
  write_u32(out, static_cast<std::uint32_t>(recs.size()));
  for (const auto& [name, t] : recs) {
    write_string(out, name);
    write_tensor(out, *t);
  }
}

Records read_records(std::istream& in) {
  Records recs;
  const std::uint32_t n = read_u32(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = read_string(in);
    Tensor t = read_tensor(in);
    if (!recs.emplace(std::move(name), std::move(t)).second) throw IoError("duplicate checkpoint record");
  }
  return recs;
}

// Copies a record into an existing parameter, keeping its flags.
void fill(Tensor& dst, const Records& recs, const std::string& name) {
  const auto it = recs.find(name);
  if (it == recs.end()) throw IoError("checkpoint is missing record '" + name + "'");
  if (it->second.shape() != dst.shape()) {
    throw IoError("checkpoint record '" + name + "' has shape " + shape_to_string(it->second.shape()) +
                  ", expected " + shape_to_string(dst.shape()));
  }
  dst.storage() = it->second.storage();
}

void write_config(std::ostream& out, const DbsnConfig& c) {
  write_u32(out, static_cast<std::uint32_t>(c.in_channels));
  write_u32(out, static_cast<std::uint32_t>(c.base_channels));
  write_u32(out, static_cast<std::uint32_t>(c.mdc_per_branch));
}

DbsnConfig read_config(std::istream& in) {
  DbsnConfig c;
  c.in_channels = read_u32(in);
  c.base_channels = read_u32(in);
  c.mdc_per_branch = read_u32(in);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint header: ") + e.what());
  }
  return c;
}

// Mean-intensity scalars must outlive the record list.
void collect_stage1(const Stage1Model& m, const std::string& prefix,
                    std::vector<std::pair<std::string, const Tensor*>>& recs, std::vector<Tensor>& scratch) {
  for_each_param(m.dbsn, [&](const std::string& name, const Tensor& t) { recs.emplace_back(prefix + "dbsn/" + name, &t); });
  for (const auto& [id, est] : m.registry.estimators) {
    const std::string base = prefix + "est/" + id + "/";
    for_each_param(est, [&](const std::string& name, const Tensor& t) { recs.emplace_back(base + name, &t); });
    const auto mean = m.registry.mean_intensity.find(id);
    scratch.push_back(Tensor({1}, mean == m.registry.mean_intensity.end() ? 0.0 : mean->second));
  }
  std::size_t k = scratch.size() - m.registry.estimators.size();
  for (const auto& [id, est] : m.registry.estimators) recs.emplace_back(prefix + "est/" + id + "/mean", &scratch[k++]);
}

Stage1Model stage1_from_records(const Records& recs, const DbsnConfig& config, const std::string& prefix) {
  Stage1Model m;
  m.dbsn = zero_dbsn(config);
  for_each_param(m.dbsn, [&](const std::string& name, Tensor& t) {
    t.set_requires_grad(true);
    fill(t, recs, prefix + "dbsn/" + name);
  });
  const std::string est_prefix = prefix + "est/";
  const std::string suffix = "/mean";
  for (const auto& [name, t] : recs) {
    if (name.rfind(est_prefix, 0) != 0 || name.size() < est_prefix.size() + suffix.size() ||
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
      continue;
    }
    const std::string id = name.substr(est_prefix.size(), name.size() - est_prefix.size() - suffix.size());
    CnnEstParams est = make_cnn_est(config.in_channels, 0);
    for_each_param(est, [&](const std::string& pname, Tensor& p) { fill(p, recs, est_prefix + id + "/" + pname); });
    m.registry.estimators.emplace(id, std::move(est));
    m.registry.mean_intensity[id] = t.numel() == 1 ? t[0] : 0.0;
  }
  return m;
}

template <typename Writer>
void save_with(const std::filesystem::path& path, const Writer& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  w(out);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

template <typename Reader>
auto load_with(const std::filesystem::path& path, const Reader& r) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  try {
    return r(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace

void write_stage1(std::ostream& out, const Stage1Model& model) {
  write_magic(out, kStage1Magic);
  write_config(out, model.dbsn.config);
  std::vector<std::pair<std::string, const Tensor*>> recs;
  std::vector<Tensor> scratch;
  scratch.reserve(model.registry.estimators.size());
  collect_stage1(model, "", recs, scratch);
  write_records(out, recs);
}

Stage1Model read_stage1(std::istream& in) {
  read_magic(in, kStage1Magic);
  const DbsnConfig config = read_config(in);
  return stage1_from_records(read_records(in), config, "");
}

void save_stage1(const std::filesystem::path& path, const Stage1Model& model) {
  save_with(path, [&](std::ostream& o) { write_stage1(o, model); });
}

Stage1Model load_stage1(const std::filesystem::path& path) {
  return load_with(path, [](std::istream& i) { return read_stage1(i); });
}

void write_real_model(std::ostream& out, const RealModel& model) {
  if (model.groups.empty()) throw ConfigError("real model has no groups");
  write_magic(out, kRealMagic);
  write_config(out, model.groups.front().dbsn.config);
  write_u32(out, static_cast<std::uint32_t>(model.groups.size()));
  std::vector<std::pair<std::string, const Tensor*>> recs;
  std::vector<Tensor> scratch;
  std::size_t total = 0;
  for (const Stage1Model& g : model.groups) total += g.registry.estimators.size();
  scratch.reserve(total);
  for (std::size_t g = 0; g < model.groups.size(); ++g) {
    if (!(model.groups[g].dbsn.config == model.groups.front().dbsn.config)) {
      throw ConfigError("real model groups use different D-BSN configs");
    }
    collect_stage1(model.groups[g], "g" + std::to_string(g) + "/", recs, scratch);
  }
  write_records(out, recs);
}

RealModel read_real_model(std::istream& in) {
  read_magic(in, kRealMagic);
  const DbsnConfig config = read_config(in);
  const std::uint32_t groups = read_u32(in);
  if (groups != 1 && groups != 4) throw IoError("real model must have 1 or 4 groups");
  const Records recs = read_records(in);
  RealModel model;
  for (std::uint32_t g = 0; g < groups; ++g) {
    model.groups.push_back(stage1_from_records(recs, config, "g" + std::to_string(g) + "/"));
  }
  return model;
}

void save_real_model(const std::filesystem::path& path, const RealModel& model) {
  save_with(path, [&](std::ostream& o) { write_real_model(o, model); });
}

RealModel load_real_model(const std::filesystem::path& path) {
  return load_with(path, [](std::istream& i) { return read_real_model(i); });
}

void write_student(std::ostream& out, const StudentParams& params) {
  write_magic(out, kStudentMagic);
  write_u32(out, static_cast<std::uint32_t>(params.config.channels));
  write_u32(out, static_cast<std::uint32_t>(params.config.depth));
  write_u32(out, static_cast<std::uint32_t>(params.config.width));
  std::vector<std::pair<std::string, const Tensor*>> recs;
  for_each_param(params, [&](const std::string& name, const Tensor& t) { recs.emplace_back(name, &t); });
  write_records(out, recs);
}

StudentParams read_student(std::istream& in) {
  read_magic(in, kStudentMagic);
  StudentConfig c;
  c.channels = read_u32(in);
  c.depth = read_u32(in);
  c.width = read_u32(in);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw IoError(std::string("student header: ") + e.what());
  }
  const Records recs = read_records(in);
  StudentParams p = make_student(c, 0);
  for_each_param(p, [&](const std::string& name, Tensor& t) { fill(t, recs, name); });
  return p;
}

void save_student(const std::filesystem::path& path, const StudentParams& params) {
  save_with(path, [&](std::ostream& o) { write_student(o, params); });
}

StudentParams load_student(const std::filesystem::path& path) {
  return load_with(path, [](std::istream& i) { return read_student(i); });
}

}  // namespace blindspot
