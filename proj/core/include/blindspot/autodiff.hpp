#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "blindspot/tensor.hpp"

namespace blindspot {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order of the graph; backward() walks it once in reverse.
// A tape is built for one forward pass and consumed by one backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A value that never receives a gradient.
  Var constant(Tensor value);
  // A parameter leaf: after backward(), d(root)/d(param) is added to
  // param.grad() when param.requires_grad() is set. The tensor must outlive
  // the backward pass.
  Var leaf(Tensor& param);
  // A gradient-tracking leaf owned by the tape (read back with grad()).
  Var variable(Tensor value);

  // Appends an operation result. `fn` is invoked during backward() only when
  // some input needs a gradient.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

  void backward(const Var& root);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  // Adjoint buffer of a node, allocated (zeroed) on first access.
  std::vector<double>& adjoint(std::size_t id);
  // Gradient of the last backward root wrt a node; zeros if unreached.
  std::vector<double> grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor* param = nullptr;
    bool needs_grad = false;
    std::vector<double> adjoint;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// --- Operations -----------------------------------------------------------

// Zero-padded "same" cross-correlation of input [C_in,H,W] with kernel
// [C_out,C_in,k,k] (k odd). When `mask` ([k,k], entries 0/1) is given, the
// kernel is multiplied elementwise by it; masked taps receive no gradient.
Var conv2d(const Var& input, const Var& kernel, int dilation = 1, const Tensor* mask = nullptr);
// Same, plus a per-output-channel bias [C_out].
Var conv2d(const Var& input, const Var& kernel, const Var& bias, int dilation = 1,
           const Tensor* mask = nullptr);

Var relu(const Var& x);

// While alive, folds the on/off pattern of every relu() evaluated on this
// thread into a fingerprint. Two evaluations with equal fingerprints took
// the same linear piece of every ReLU.
class ActivationProbe {
 public:
  ActivationProbe();
  ~ActivationProbe();
  ActivationProbe(const ActivationProbe&) = delete;
  ActivationProbe& operator=(const ActivationProbe&) = delete;

  std::uint64_t fingerprint() const { return hash_; }
  static void record(const std::vector<bool>& active);

 private:
  std::uint64_t hash_ = 1469598103934665603ULL;
  ActivationProbe* previous_ = nullptr;
};
Var concat_channels(const Var& a, const Var& b);
Var concat_channels(std::span<const Var> parts);
Var slice_channels(const Var& x, std::size_t begin, std::size_t count);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var sum(const Var& x);
Var mean(const Var& x);
// sum((pred - target)^2); target carries no gradient.
Var sum_squared_error(const Var& pred, const Tensor& target);

// Tape-free evaluation of the same correlation (used for inference and as
// the building block of the recorded op).
Tensor conv2d(const Tensor& input, const Tensor& kernel, int dilation = 1,
              const Tensor* mask = nullptr, const Tensor* bias = nullptr);

}  // namespace blindspot

namespace blindspot {

// Copy of `shape`-many elements starting at `offset` of x's flat storage,
// reshaped to `shape`. Lets one flat parameter vector feed many layers.
Var extract(const Var& x, std::size_t offset, Shape shape);

// Maps a model parameter tensor to the Var that stands for it on a tape.
using ParamBinder = std::function<Var(Tensor&)>;
// Binder that records each parameter as a tape leaf.
ParamBinder leaf_binder(Tape& tape);
// Binder that records each parameter as a constant (inference).
ParamBinder constant_binder(Tape& tape);

}  // namespace blindspot
