#include "blindspot/taint.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

namespace blindspot {

TaintNode TaintNode::conv(int kernel, int dilation, std::string label) {
  TaintNode n;
  n.kind = Kind::Conv;
  n.kernel = kernel;
  n.dilation = dilation;
  n.label = std::move(label);
  return n;
}

TaintNode TaintNode::masked_conv(int kernel, std::string label) {
  TaintNode n = conv(kernel, 1, std::move(label));
  n.center_masked = true;
  return n;
}

TaintNode TaintNode::pointwise(std::string label) { return conv(1, 1, std::move(label)); }

TaintNode TaintNode::sequence(std::vector<TaintNode> children, std::string label) {
  TaintNode n;
  n.kind = Kind::Sequence;
  n.children = std::move(children);
  n.label = std::move(label);
  return n;
}

TaintNode TaintNode::parallel(std::vector<TaintNode> children, std::string label) {
  TaintNode n;
  n.kind = Kind::Parallel;
  n.children = std::move(children);
  n.label = std::move(label);
  return n;
}

TaintNode TaintNode::residual(TaintNode body, std::string label) {
  return parallel({pointwise("skip"), std::move(body)}, std::move(label));
}

namespace {

using PosSet = std::set<std::pair<int, int>>;

struct Bounds {
  int height, width;
  bool contains(int r, int c) const { return r >= 0 && r < height && c >= 0 && c < width; }
};

// Pulls a set of positions at a node's output back to the positions at its
// input that influence them.
PosSet pull_back(const TaintNode& node, const PosSet& out, const std::optional<Bounds>& bounds) {
  switch (node.kind) {
    case TaintNode::Kind::Conv: {
      PosSet in;
      const int half = node.kernel / 2;
      for (const auto& [r, c] : out) {
        for (int u = -half; u <= half; ++u) {
          for (int v = -half; v <= half; ++v) {
            if (node.center_masked && u == 0 && v == 0) continue;
            const int rr = r + u * node.dilation, cc = c + v * node.dilation;
            if (bounds && !bounds->contains(rr, cc)) continue;
            in.emplace(rr, cc);
          }
        }
      }
      return in;
    }
    case TaintNode::Kind::Sequence: {
      PosSet cur = out;
      for (auto it = node.children.rbegin(); it != node.children.rend(); ++it) {
        cur = pull_back(*it, cur, bounds);
      }
      return cur;
    }
    case TaintNode::Kind::Parallel: {
      PosSet in;
      for (const TaintNode& child : node.children) {
        const PosSet part = pull_back(child, out, bounds);
        in.insert(part.begin(), part.end());
      }
      return in;
    }
  }
  return {};
}

}  // namespace

OffsetSet receptive_offsets(const TaintNode& net) {
  return pull_back(net, PosSet{{0, 0}}, std::nullopt);
}

std::set<std::pair<int, int>> influencing_pixels(const TaintNode& net, int height, int width,
                                                 int row, int col) {
  const Bounds b{height, width};
  if (!b.contains(row, col)) return {};
  return pull_back(net, PosSet{{row, col}}, b);
}

int receptive_radius(const OffsetSet& offsets) {
  int r = 0;
  for (const auto& [dy, dx] : offsets) r = std::max({r, std::abs(dy), std::abs(dx)});
  return r;
}

TaintReport verify_blindspot(const TaintNode& net) {
  TaintReport report;
  auto add = [&](const std::string& name, const TaintNode& node) {
    TaintReport::Entry e;
    e.name = name;
    e.offsets = receptive_offsets(node);
    e.includes_center = e.offsets.contains({0, 0});
    e.radius = receptive_radius(e.offsets);
    report.entries.push_back(std::move(e));
  };
  // A network built as sequence(entry, parallel(branches...), head) reports
  // each branch separately as well.
  if (net.kind == TaintNode::Kind::Sequence) {
    for (const TaintNode& stage : net.children) {
      if (stage.kind != TaintNode::Kind::Parallel) continue;
      for (std::size_t b = 0; b < stage.children.size(); ++b) {
        add(stage.children[b].label.empty() ? "branch" + std::to_string(b) : stage.children[b].label,
            stage.children[b]);
      }
    }
  }
  add(net.label.empty() ? "network" : net.label, net);
  report.blind = std::none_of(report.entries.begin(), report.entries.end(),
                              [](const TaintReport::Entry& e) { return e.includes_center; });
  return report;
}

std::string TaintReport::summary() const {
  std::ostringstream os;
  for (const Entry& e : entries) {
    os << e.name << ": " << e.offsets.size() << " offsets, radius " << e.radius
       << (e.includes_center ? ", CENTER INCLUDED" : ", center excluded") << '\n';
  }
  os << "blind-spot: " << (blind ? "PASS" : "FAIL") << '\n';
  return os.str();
}

}  // namespace blindspot
