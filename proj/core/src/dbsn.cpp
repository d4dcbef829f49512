#include "blindspot/dbsn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "blindspot/errors.hpp"

namespace blindspot {

DbsnConfig DbsnConfig::desk(std::size_t in_channels) {
  DbsnConfig c;
  c.in_channels = in_channels;
  c.base_channels = 16;
  c.mdc_per_branch = 1;
  return c;
}

void DbsnConfig::validate() const {
  if (in_channels != 1 && in_channels != 3) {
    throw ConfigError("D-BSN supports 1 or 3 input channels, got " + std::to_string(in_channels));
  }
  if (base_channels == 0) throw ConfigError("D-BSN base_channels must be positive");
}

Tensor center_mask(std::size_t k) {
  if (k % 2 == 0) throw ConfigError("mask size must be odd");
  Tensor m({k, k}, 1.0);
  m[(k / 2) * k + k / 2] = 0.0;
  return m;
}

namespace {

MdcParams make_mdc(std::size_t ch, std::mt19937_64& rng) {
  MdcParams m;
  m.reduce_a = make_conv(ch, ch, 1, rng);
  m.reduce_b = make_conv(ch, ch, 1, rng);
  m.reduce_c = make_conv(ch, ch, 1, rng);
  m.dilated_b = make_conv(ch, ch, 3, rng);
  m.dilated_c1 = make_conv(ch, ch, 3, rng);
  m.dilated_c2 = make_conv(ch, ch, 3, rng);
  // The merge output is added to the module input; start it small so deep
  // stacks begin close to identity.
  m.merge = make_conv(3 * ch, ch, 1, rng, 0.5);
  m.project = make_conv(ch, ch, 1, rng);
  return m;
}

MdcParams zero_mdc(std::size_t ch) {
  MdcParams m;
  for (ConvLayer* l : {&m.reduce_a, &m.reduce_b, &m.reduce_c, &m.project}) *l = zero_conv(ch, ch, 1);
  for (ConvLayer* l : {&m.dilated_b, &m.dilated_c1, &m.dilated_c2}) *l = zero_conv(ch, ch, 3);
  m.merge = zero_conv(3 * ch, ch, 1);
  return m;
}

template <typename Params, typename Visitor>
void visit_all(Params& p, const Visitor& fn) {
  visit_conv("entry", p.entry, fn);
  for (std::size_t b = 0; b < p.branches.size(); ++b) {
    auto& br = p.branches[b];
    const std::string prefix = "branch" + std::to_string(b);
    visit_conv(prefix + ".masked", br.masked, fn);
    for (std::size_t i = 0; i < br.modules.size(); ++i) {
      auto& m = br.modules[i];
      const std::string mp = prefix + ".mdc" + std::to_string(i);
      visit_conv(mp + ".reduce_a", m.reduce_a, fn);
      visit_conv(mp + ".reduce_b", m.reduce_b, fn);
      visit_conv(mp + ".reduce_c", m.reduce_c, fn);
      visit_conv(mp + ".dilated_b", m.dilated_b, fn);
      visit_conv(mp + ".dilated_c1", m.dilated_c1, fn);
      visit_conv(mp + ".dilated_c2", m.dilated_c2, fn);
      visit_conv(mp + ".merge", m.merge, fn);
      visit_conv(mp + ".project", m.project, fn);
    }
  }
  for (std::size_t h = 0; h < p.head.size(); ++h) visit_conv("head" + std::to_string(h), p.head[h], fn);
}

}  // namespace

DbsnParams make_dbsn(const DbsnConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t ch = config.base_channels;
  DbsnParams p;
  p.config = config;
  p.entry = make_conv(config.in_channels, ch, 1, rng);
  for (std::size_t b = 0; b < kDbsnBranches.size(); ++b) {
    BranchParams& br = p.branches[b];
    br.spec = kDbsnBranches[b];
    const auto k = static_cast<std::size_t>(br.spec.mask_size);
    br.mask = center_mask(k);
    // He scaling over the k*k - 1 live taps.
    br.masked = make_conv(ch, ch, k, rng,
                          std::sqrt(static_cast<double>(k * k) / static_cast<double>(k * k - 1)));
    for (std::size_t i = 0; i < config.mdc_per_branch; ++i) br.modules.push_back(make_mdc(ch, rng));
  }
  p.head[0] = make_conv(2 * ch, ch, 1, rng);
  p.head[1] = make_conv(ch, ch, 1, rng);
  p.head[2] = make_conv(ch, config.head_channels(), 1, rng, std::sqrt(0.5));
  // Shrink the covariance-factor rows so the initial Sigma_mu is small.
  const std::size_t per_out = ch;
  for (std::size_t o = config.in_channels; o < config.head_channels(); ++o) {
    for (std::size_t i = 0; i < per_out; ++i) p.head[2].weight[o * per_out + i] *= 0.1;
  }
  return p;
}

DbsnParams zero_dbsn(const DbsnConfig& config) {
  config.validate();
  const std::size_t ch = config.base_channels;
  DbsnParams p;
  p.config = config;
  p.entry = zero_conv(config.in_channels, ch, 1);
  for (std::size_t b = 0; b < kDbsnBranches.size(); ++b) {
    BranchParams& br = p.branches[b];
    br.spec = kDbsnBranches[b];
    const auto k = static_cast<std::size_t>(br.spec.mask_size);
    br.mask = center_mask(k);
    br.masked = zero_conv(ch, ch, k);
    for (std::size_t i = 0; i < config.mdc_per_branch; ++i) br.modules.push_back(zero_mdc(ch));
  }
  p.head[0] = zero_conv(2 * ch, ch, 1);
  p.head[1] = zero_conv(ch, ch, 1);
  p.head[2] = zero_conv(ch, config.head_channels(), 1);
  return p;
}

void for_each_param(DbsnParams& params, const ParamVisitor& fn) { visit_all(params, fn); }
void for_each_param(const DbsnParams& params, const ConstParamVisitor& fn) { visit_all(params, fn); }

std::size_t parameter_count(const DbsnParams& params) {
  std::size_t n = 0;
  for_each_param(params, [&n](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

Var mdc_forward(MdcParams& m, const Var& f, int dilation, const ParamBinder& bind) {
  const Var a = relu(apply_conv(m.reduce_a, f, bind));
  Var b = relu(apply_conv(m.reduce_b, f, bind));
  b = relu(apply_conv(m.dilated_b, b, bind, dilation));
  Var c = relu(apply_conv(m.reduce_c, f, bind));
  c = relu(apply_conv(m.dilated_c1, c, bind, dilation));
  c = relu(apply_conv(m.dilated_c2, c, bind, dilation));
  const Var parts[] = {a, b, c};
  const Var merged = relu(apply_conv(m.merge, concat_channels(std::span<const Var>(parts)), bind));
  return relu(apply_conv(m.project, add(merged, f), bind));
}

Tensor mdc_forward(const MdcParams& module, const Tensor& f, int dilation) {
  Tape tape;
  // Constant binding copies parameters and never writes through them.
  auto& m = const_cast<MdcParams&>(module);
  return mdc_forward(m, tape.constant(f), dilation, constant_binder(tape)).value();
}

DbsnVars dbsn_forward(Tape& /*tape*/, DbsnParams& p, const Var& y, const ParamBinder& bind) {
  require_rank3(y.value(), "dbsn_forward");
  const std::size_t c = p.config.in_channels;
  if (y.value().channels() != c) {
    throw DimensionError("dbsn_forward: model expects " + std::to_string(c) +
                         " channels, image has " + std::to_string(y.value().channels()));
  }
  const Var entry = relu(apply_conv(p.entry, y, bind));
  std::array<Var, 2> branch_out;
  for (std::size_t b = 0; b < p.branches.size(); ++b) {
    BranchParams& br = p.branches[b];
    Var f = relu(apply_conv(br.masked, entry, bind, 1, &br.mask));
    for (MdcParams& m : br.modules) f = mdc_forward(m, f, br.spec.dilation, bind);
    branch_out[b] = f;
  }
  Var h = concat_channels(branch_out[0], branch_out[1]);
  h = relu(apply_conv(p.head[0], h, bind));
  h = relu(apply_conv(p.head[1], h, bind));
  h = apply_conv(p.head[2], h, bind);
  DbsnVars out;
  out.mu = slice_channels(h, 0, c);
  out.sigma_mu = spd_from_factor(slice_channels(h, c, packed_size(c)));
  return out;
}

MuSigmaOutput dbsn_forward(const DbsnParams& params, const Tensor& y) {
  Tape tape;
  auto& p = const_cast<DbsnParams&>(params);
  const DbsnVars v = dbsn_forward(tape, p, tape.constant(y), constant_binder(tape));
  return MuSigmaOutput{v.mu.value(), CovField(v.sigma_mu.value())};
}

TaintNode dbsn_taint_graph(const DbsnConfig& config) {
  std::vector<TaintNode> branches;
  for (std::size_t b = 0; b < kDbsnBranches.size(); ++b) {
    const BranchSpec spec = kDbsnBranches[b];
    std::vector<TaintNode> stack{TaintNode::masked_conv(spec.mask_size, "masked")};
    for (std::size_t i = 0; i < config.mdc_per_branch; ++i) {
      const int d = spec.dilation;
      TaintNode subs = TaintNode::parallel({
          TaintNode::pointwise("reduce_a"),
          TaintNode::sequence({TaintNode::pointwise("reduce_b"), TaintNode::conv(3, d, "dilated_b")}),
          TaintNode::sequence({TaintNode::pointwise("reduce_c"), TaintNode::conv(3, d, "dilated_c1"),
                               TaintNode::conv(3, d, "dilated_c2")}),
      });
      TaintNode body = TaintNode::sequence({std::move(subs), TaintNode::pointwise("merge")});
      stack.push_back(TaintNode::sequence(
          {TaintNode::residual(std::move(body)), TaintNode::pointwise("project")},
          "mdc" + std::to_string(i)));
    }
    branches.push_back(TaintNode::sequence(
        std::move(stack), "branch" + std::to_string(b) + " (" + std::to_string(spec.mask_size) +
                              "x" + std::to_string(spec.mask_size) + " mask, dilation " +
                              std::to_string(spec.dilation) + ")"));
  }
  return TaintNode::sequence({TaintNode::pointwise("entry"), TaintNode::parallel(std::move(branches)),
                              TaintNode::pointwise("head0"), TaintNode::pointwise("head1"),
                              TaintNode::pointwise("head2")},
                             "D-BSN");
}

TaintReport verify_blindspot(const DbsnConfig& config) {
  return verify_blindspot(dbsn_taint_graph(config));
}

int dbsn_receptive_radius(const DbsnConfig& config) {
  // Per branch: mask half-width plus two dilated 3x3 convs per module.
  int radius = 0;
  for (const BranchSpec& spec : kDbsnBranches) {
    const int r = spec.mask_size / 2 + 2 * spec.dilation * static_cast<int>(config.mdc_per_branch);
    radius = std::max(radius, r);
  }
  return radius;
}

}  // namespace blindspot
