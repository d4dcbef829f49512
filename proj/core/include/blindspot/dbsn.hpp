#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "blindspot/autodiff.hpp"
#include "blindspot/layers.hpp"
#include "blindspot/spd.hpp"
#include "blindspot/taint.hpp"

namespace blindspot {

// A branch starts with a centrally masked conv of `mask_size` and stacks
// MDC modules whose 3x3 convs use `dilation`. Dilation 2 over a 3x3 mask and
// dilation 3 over a 5x5 mask never reach back to the masked center.
struct BranchSpec {
  int mask_size;
  int dilation;
};
inline constexpr std::array<BranchSpec, 2> kDbsnBranches{{{3, 2}, {5, 3}}};

struct DbsnConfig {
  std::size_t in_channels = 1;
  std::size_t base_channels = 32;
  std::size_t mdc_per_branch = 7;

  // Reduced widths/depth for CPU training runs.
  static DbsnConfig desk(std::size_t in_channels = 1);

  // mu channels plus packed factor channels of the C x C covariance.
  std::size_t head_channels() const { return in_channels + packed_size(in_channels); }
  void validate() const;
  bool operator==(const DbsnConfig&) const = default;
};

// Multiple dilated convolution module: three sub-branches (1x1; 1x1 + one
// dilated 3x3; 1x1 + two dilated 3x3), concatenated, merged by 1x1, added to
// the module input, then projected by a final 1x1.
struct MdcParams {
  ConvLayer reduce_a, reduce_b, reduce_c;
  ConvLayer dilated_b, dilated_c1, dilated_c2;
  ConvLayer merge;
  ConvLayer project;
};

struct BranchParams {
  BranchSpec spec{};
  ConvLayer masked;
  Tensor mask;  // [k,k], 0 at the center, 1 elsewhere
  std::vector<MdcParams> modules;
};

struct DbsnParams {
  DbsnConfig config;
  ConvLayer entry;
  std::array<BranchParams, 2> branches;
  std::array<ConvLayer, 3> head;  // last layer emits head_channels()
};

Tensor center_mask(std::size_t k);

DbsnParams make_dbsn(const DbsnConfig& config, std::uint64_t seed);
DbsnParams zero_dbsn(const DbsnConfig& config);

void for_each_param(DbsnParams& params, const ParamVisitor& fn);
void for_each_param(const DbsnParams& params, const ConstParamVisitor& fn);
std::size_t parameter_count(const DbsnParams& params);

struct DbsnVars {
  Var mu;        // [C,H,W]
  Var sigma_mu;  // packed [C(C+1)/2,H,W], L L^T + eps I
};

struct MuSigmaOutput {
  Tensor mu;
  CovField sigma_mu;
};

DbsnVars dbsn_forward(Tape& tape, DbsnParams& params, const Var& y, const ParamBinder& bind);
MuSigmaOutput dbsn_forward(const DbsnParams& params, const Tensor& y);

Var mdc_forward(MdcParams& module, const Var& f, int dilation, const ParamBinder& bind);
Tensor mdc_forward(const MdcParams& module, const Tensor& f, int dilation);

// Spatial structure of the network for influence analysis.
TaintNode dbsn_taint_graph(const DbsnConfig& config);
TaintReport verify_blindspot(const DbsnConfig& config);
// Largest offset reachable by the network (border width contaminated by padding).
int dbsn_receptive_radius(const DbsnConfig& config);

}  // namespace blindspot
