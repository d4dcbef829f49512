#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace blindspot {

// (row, column) displacement of an input pixel relative to an output pixel.
using Offset = std::pair<int, int>;
using OffsetSet = std::set<Offset>;

// Structural description of a convolutional stack for influence tracking.
// Only the spatial footprint matters; channel counts and weights do not.
struct TaintNode {
  enum class Kind { Conv, Sequence, Parallel };

  Kind kind = Kind::Conv;
  int kernel = 1;
  int dilation = 1;
  bool center_masked = false;
  std::string label;
  std::vector<TaintNode> children;

  static TaintNode conv(int kernel, int dilation = 1, std::string label = {});
  static TaintNode masked_conv(int kernel, std::string label = {});
  static TaintNode pointwise(std::string label = {});
  // Children applied in order (input first).
  static TaintNode sequence(std::vector<TaintNode> children, std::string label = {});
  // Children read the same input; their outputs are concatenated or summed.
  static TaintNode parallel(std::vector<TaintNode> children, std::string label = {});
  // Identity skip in parallel with `body`.
  static TaintNode residual(TaintNode body, std::string label = {});
};

// Set of input offsets that can influence one output position of an
// unbounded image.
OffsetSet receptive_offsets(const TaintNode& net);

// Input pixels influencing output pixel (row, col) of an H x W image with
// zero padding: intermediate positions outside the image carry no signal.
std::set<std::pair<int, int>> influencing_pixels(const TaintNode& net, int height, int width,
                                                 int row, int col);

int receptive_radius(const OffsetSet& offsets);

struct TaintReport {
  struct Entry {
    std::string name;
    OffsetSet offsets;
    bool includes_center = false;
    int radius = 0;
  };
  std::vector<Entry> entries;  // each branch, then the fused network
  bool blind = false;          // no entry includes (0, 0)

  std::string summary() const;
};

TaintReport verify_blindspot(const TaintNode& net);

}  // namespace blindspot
