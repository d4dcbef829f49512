#include "blindspot/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <memory>
#include <string>

#include "blindspot/errors.hpp"

namespace blindspot {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

const Tensor& Var::value() const {
  if (!tape_) throw ConfigError("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::push(Node node) {
  if (consumed_) throw ConfigError("tape already consumed by backward(); build a new one");
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Tensor& param) {
  Node n;
  n.value = param;
  n.value.set_requires_grad(false);
  n.value.grad().clear();
  n.param = &param;
  n.needs_grad = param.requires_grad();
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (std::size_t id : inputs) {
    if (id >= nodes_.size()) throw ConfigError("record: input id not on this tape");
    n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
  }
  n.inputs = std::move(inputs);
  n.backward = std::move(fn);
  return push(std::move(n));
}

std::vector<double>& Tape::adjoint(std::size_t id) {
  Node& n = nodes_[id];
  if (n.adjoint.empty()) n.adjoint.assign(n.value.numel(), 0.0);
  return n.adjoint;
}

std::vector<double> Tape::grad(const Var& v) const {
  const Node& n = nodes_.at(v.id());
  if (n.adjoint.empty()) return std::vector<double>(n.value.numel(), 0.0);
  return n.adjoint;
}

void Tape::backward(const Var& root) {
  if (root.tape() != this) throw ConfigError("backward: root is not on this tape");
  if (nodes_[root.id()].value.numel() != 1) {
    throw DimensionError("backward: root must be a scalar, got shape " +
                         shape_to_string(nodes_[root.id()].value.shape()));
  }
  if (consumed_) throw ConfigError("backward: tape already consumed");
  consumed_ = true;
  adjoint(root.id())[0] = 1.0;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.adjoint.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param && n.param->requires_grad()) n.param->accumulate_grad(n.adjoint);
  }
}

// --- convolution ------------------------------------------------------------

namespace {

struct ConvGeometry {
  std::size_t c_in, c_out, h, w, k;
  int dilation;
  std::vector<std::size_t> taps;  // active (u*k+v) indices

  std::size_t rows() const { return c_in * taps.size(); }
  std::size_t pixels() const { return h * w; }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel, int dilation,
                           const Tensor* mask) {
  require_rank3(input, "conv2d input");
  if (kernel.rank() != 4) {
    throw DimensionError("conv2d kernel: expected [C_out,C_in,k,k], got " +
                         shape_to_string(kernel.shape()));
  }
  const std::size_t k = kernel.dim(2);
  if (kernel.dim(3) != k) throw DimensionError("conv2d kernel must be square");
  if (k % 2 == 0) throw ConfigError("conv2d kernel size must be odd, got " + std::to_string(k));
  if (dilation < 1) throw ConfigError("conv2d dilation must be positive");
  if (kernel.dim(1) != input.dim(0)) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                         " input channels, input has " + std::to_string(input.dim(0)));
  }
  ConvGeometry g{input.dim(0), kernel.dim(0), input.dim(1), input.dim(2), k, dilation, {}};
  if (mask) {
    if (mask->shape() != Shape{k, k}) {
      throw DimensionError("conv2d mask must be [k,k], got " + shape_to_string(mask->shape()));
    }
    for (std::size_t t = 0; t < k * k; ++t) {
      const double m = (*mask)[t];
      if (m != 0.0 && m != 1.0) throw ConfigError("conv2d mask entries must be 0 or 1");
      if (m != 0.0) g.taps.push_back(t);
    }
  } else {
    for (std::size_t t = 0; t < k * k; ++t) g.taps.push_back(t);
  }
  return g;
}

// Column matrix [c_in * taps, h * w] of zero-padded shifted inputs.
RowMat im2col(const ConvGeometry& g, const Tensor& input) {
  RowMat col = RowMat::Zero(static_cast<Eigen::Index>(g.rows()),
                            static_cast<Eigen::Index>(g.pixels()));
  const auto half = static_cast<std::ptrdiff_t>(g.k / 2);
  const auto hh = static_cast<std::ptrdiff_t>(g.h);
  const auto ww = static_cast<std::ptrdiff_t>(g.w);
  for (std::size_t c = 0; c < g.c_in; ++c) {
    const double* src = input.data().data() + c * g.pixels();
    for (std::size_t ti = 0; ti < g.taps.size(); ++ti) {
      const auto du = (static_cast<std::ptrdiff_t>(g.taps[ti] / g.k) - half) * g.dilation;
      const auto dv = (static_cast<std::ptrdiff_t>(g.taps[ti] % g.k) - half) * g.dilation;
      double* dst = col.data() + (c * g.taps.size() + ti) * g.pixels();
      const std::ptrdiff_t j0 = std::max<std::ptrdiff_t>(0, -dv);
      const std::ptrdiff_t j1 = std::min<std::ptrdiff_t>(ww, ww - dv);
      for (std::ptrdiff_t i = 0; i < hh; ++i) {
        const std::ptrdiff_t si = i + du;
        if (si < 0 || si >= hh || j0 >= j1) continue;
        std::copy(src + si * ww + j0 + dv, src + si * ww + j1 + dv, dst + i * ww + j0);
      }
    }
  }
  return col;
}

void col2im_add(const ConvGeometry& g, const RowMat& col, std::vector<double>& dinput) {
  const auto half = static_cast<std::ptrdiff_t>(g.k / 2);
  const auto hh = static_cast<std::ptrdiff_t>(g.h);
  const auto ww = static_cast<std::ptrdiff_t>(g.w);
  for (std::size_t c = 0; c < g.c_in; ++c) {
    double* dst = dinput.data() + c * g.pixels();
    for (std::size_t ti = 0; ti < g.taps.size(); ++ti) {
      const auto du = (static_cast<std::ptrdiff_t>(g.taps[ti] / g.k) - half) * g.dilation;
      const auto dv = (static_cast<std::ptrdiff_t>(g.taps[ti] % g.k) - half) * g.dilation;
      const double* src = col.data() + (c * g.taps.size() + ti) * g.pixels();
      const std::ptrdiff_t j0 = std::max<std::ptrdiff_t>(0, -dv);
      const std::ptrdiff_t j1 = std::min<std::ptrdiff_t>(ww, ww - dv);
      for (std::ptrdiff_t i = 0; i < hh; ++i) {
        const std::ptrdiff_t si = i + du;
        if (si < 0 || si >= hh) continue;
        for (std::ptrdiff_t j = j0; j < j1; ++j) dst[si * ww + j + dv] += src[i * ww + j];
      }
    }
  }
}

// Kernel restricted to active taps: [c_out, c_in * taps].
RowMat compact_kernel(const ConvGeometry& g, const Tensor& kernel) {
  RowMat w(static_cast<Eigen::Index>(g.c_out), static_cast<Eigen::Index>(g.rows()));
  const std::size_t kk = g.k * g.k;
  for (std::size_t o = 0; o < g.c_out; ++o) {
    for (std::size_t c = 0; c < g.c_in; ++c) {
      for (std::size_t ti = 0; ti < g.taps.size(); ++ti) {
        w(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c * g.taps.size() + ti)) =
            kernel[(o * g.c_in + c) * kk + g.taps[ti]];
      }
    }
  }
  return w;
}

bool is_pointwise(const ConvGeometry& g) { return g.k == 1; }

Tensor conv_forward(const ConvGeometry& g, const Tensor& input, const RowMat& w,
                    const RowMat* col, const Tensor* bias) {
  Tensor out({g.c_out, g.h, g.w});
  RowMap o(out.data().data(), static_cast<Eigen::Index>(g.c_out),
           static_cast<Eigen::Index>(g.pixels()));
  if (col) {
    o.noalias() = w * (*col);
  } else {
    ConstRowMap x(input.data().data(), static_cast<Eigen::Index>(g.c_in),
                  static_cast<Eigen::Index>(g.pixels()));
    o.noalias() = w * x;
  }
  if (bias) {
    for (std::size_t c = 0; c < g.c_out; ++c) o.row(static_cast<Eigen::Index>(c)).array() += (*bias)[c];
  }
  return out;
}

void check_bias(const Tensor& bias, std::size_t c_out) {
  if (bias.rank() != 1 || bias.dim(0) != c_out) {
    throw DimensionError("conv2d bias must be [" + std::to_string(c_out) + "], got " +
                         shape_to_string(bias.shape()));
  }
}

Var conv2d_impl(const Var& input, const Var& kernel, const Var* bias, int dilation,
                const Tensor* mask) {
  Tape* tape = input.tape();
  if (kernel.tape() != tape || (bias && bias->tape() != tape)) {
    throw ConfigError("conv2d: operands on different tapes");
  }
  const ConvGeometry g = conv_geometry(input.value(), kernel.value(), dilation, mask);
  if (bias) check_bias(bias->value(), g.c_out);

  auto w = std::make_shared<RowMat>(compact_kernel(g, kernel.value()));
  std::shared_ptr<RowMat> col;
  if (!is_pointwise(g)) col = std::make_shared<RowMat>(im2col(g, input.value()));
  Tensor out = conv_forward(g, input.value(), *w, col.get(), bias ? &bias->value() : nullptr);

  const bool kernel_grad = tape->needs_grad(kernel.id());
  // Pointwise convs read the input directly; keep a copy only when the kernel
  // gradient needs it.
  std::shared_ptr<Tensor> saved_input;
  if (is_pointwise(g) && kernel_grad) saved_input = std::make_shared<Tensor>(input.value());
  if (!kernel_grad && col) col.reset();

  std::vector<std::size_t> inputs{input.id(), kernel.id()};
  if (bias) inputs.push_back(bias->id());
  const std::size_t in_id = input.id(), k_id = kernel.id();
  const std::size_t b_id = bias ? bias->id() : 0;
  const bool has_bias = bias != nullptr;

  return tape->record(
      std::move(out), std::move(inputs),
      [g, w, col, saved_input, in_id, k_id, b_id, has_bias](Tape& t, std::size_t self) {
        const std::vector<double>& dout_v = t.adjoint(self);
        ConstRowMap dout(dout_v.data(), static_cast<Eigen::Index>(g.c_out),
                         static_cast<Eigen::Index>(g.pixels()));
        if (t.needs_grad(k_id)) {
          RowMat dw;
          if (col) {
            dw.noalias() = dout * col->transpose();
          } else {
            ConstRowMap x(saved_input->data().data(), static_cast<Eigen::Index>(g.c_in),
                          static_cast<Eigen::Index>(g.pixels()));
            dw.noalias() = dout * x.transpose();
          }
          std::vector<double>& dk = t.adjoint(k_id);
          const std::size_t kk = g.k * g.k;
          for (std::size_t o = 0; o < g.c_out; ++o) {
            for (std::size_t c = 0; c < g.c_in; ++c) {
              for (std::size_t ti = 0; ti < g.taps.size(); ++ti) {
                dk[(o * g.c_in + c) * kk + g.taps[ti]] +=
                    dw(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c * g.taps.size() + ti));
              }
            }
          }
        }
        if (has_bias && t.needs_grad(b_id)) {
          std::vector<double>& db = t.adjoint(b_id);
          for (std::size_t o = 0; o < g.c_out; ++o) db[o] += dout.row(static_cast<Eigen::Index>(o)).sum();
        }
        if (t.needs_grad(in_id)) {
          std::vector<double>& din = t.adjoint(in_id);
          if (is_pointwise(g)) {
            RowMap dx(din.data(), static_cast<Eigen::Index>(g.c_in),
                      static_cast<Eigen::Index>(g.pixels()));
            dx.noalias() += w->transpose() * dout;
          } else {
            const RowMat dcol = w->transpose() * dout;
            col2im_add(g, dcol, din);
          }
        }
      });
}

template <typename F>
Var unary(const Var& x, Tensor out, F&& backward_elem) {
  const std::size_t x_id = x.id();
  return x.tape()->record(std::move(out), {x_id},
                          [x_id, fn = std::forward<F>(backward_elem)](Tape& t, std::size_t self) {
                            const std::vector<double>& g = t.adjoint(self);
                            std::vector<double>& dx = t.adjoint(x_id);
                            fn(t, g, dx);
                          });
}

void require_same_tape(const Var& a, const Var& b, const char* what) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw ConfigError(std::string(what) + ": operands on different tapes");
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int dilation, const Tensor* mask,
              const Tensor* bias) {
  const ConvGeometry g = conv_geometry(input, kernel, dilation, mask);
  if (bias) check_bias(*bias, g.c_out);
  const RowMat w = compact_kernel(g, kernel);
  if (is_pointwise(g)) return conv_forward(g, input, w, nullptr, bias);
  const RowMat col = im2col(g, input);
  return conv_forward(g, input, w, &col, bias);
}

Var conv2d(const Var& input, const Var& kernel, int dilation, const Tensor* mask) {
  return conv2d_impl(input, kernel, nullptr, dilation, mask);
}

Var conv2d(const Var& input, const Var& kernel, const Var& bias, int dilation,
           const Tensor* mask) {
  return conv2d_impl(input, kernel, &bias, dilation, mask);
}

namespace {
thread_local ActivationProbe* active_probe = nullptr;
}  // namespace

ActivationProbe::ActivationProbe() : previous_(active_probe) { active_probe = this; }
ActivationProbe::~ActivationProbe() { active_probe = previous_; }

void ActivationProbe::record(const std::vector<bool>& active) {
  if (!active_probe) return;
  std::uint64_t h = active_probe->hash_;
  for (bool b : active) h = (h ^ (b ? 0x9fULL : 0x3bULL)) * 1099511628211ULL;
  active_probe->hash_ = h;
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  auto positive = std::make_shared<std::vector<bool>>(out.numel());
  for (std::size_t i = 0; i < out.numel(); ++i) (*positive)[i] = out[i] > 0.0;
  ActivationProbe::record(*positive);
  return unary(x, std::move(out),
               [positive](Tape&, const std::vector<double>& g, std::vector<double>& dx) {
                 for (std::size_t i = 0; i < g.size(); ++i) {
                   if ((*positive)[i]) dx[i] += g[i];
                 }
               });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  Tape* tape = parts.front().tape();
  const Tensor& first = parts.front().value();
  require_rank3(first, "concat_channels");
  std::size_t channels = 0;
  for (const Var& p : parts) {
    if (p.tape() != tape) throw ConfigError("concat_channels: operands on different tapes");
    require_rank3(p.value(), "concat_channels");
    if (p.value().dim(1) != first.dim(1) || p.value().dim(2) != first.dim(2)) {
      throw DimensionError("concat_channels: spatial mismatch " + shape_to_string(first.shape()) +
                           " vs " + shape_to_string(p.value().shape()));
    }
    channels += p.value().dim(0);
  }
  Tensor out({channels, first.dim(1), first.dim(2)});
  std::vector<std::size_t> ids, offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    ids.push_back(p.id());
    offsets.push_back(offset);
    offset += p.value().numel();
  }
  offsets.push_back(offset);
  return tape->record(std::move(out), ids, [ids, offsets](Tape& t, std::size_t self) {
    const std::vector<double>& g = t.adjoint(self);
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (!t.needs_grad(ids[p])) continue;
      std::vector<double>& dx = t.adjoint(ids[p]);
      for (std::size_t i = offsets[p]; i < offsets[p + 1]; ++i) dx[i - offsets[p]] += g[i];
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Var parts[] = {a, b};
  return concat_channels(std::span<const Var>(parts));
}

Var slice_channels(const Var& x, std::size_t begin, std::size_t count) {
  Tensor out = slice_channels(x.value(), begin, count);
  const std::size_t offset = begin * x.value().dim(1) * x.value().dim(2);
  return unary(x, std::move(out),
               [offset](Tape&, const std::vector<double>& g, std::vector<double>& dx) {
                 for (std::size_t i = 0; i < g.size(); ++i) dx[offset + i] += g[i];
               });
}

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record(std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    const std::vector<double> g = t.adjoint(self);
    for (std::size_t id : {ai, bi}) {
      if (!t.needs_grad(id)) continue;
      std::vector<double>& d = t.adjoint(id);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record(std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    const std::vector<double> g = t.adjoint(self);
    if (t.needs_grad(ai)) {
      std::vector<double>& d = t.adjoint(ai);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (t.needs_grad(bi)) {
      std::vector<double>& d = t.adjoint(bi);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  auto av = std::make_shared<Tensor>(a.value());
  auto bv = std::make_shared<Tensor>(b.value());
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record(std::move(out), {ai, bi}, [ai, bi, av, bv](Tape& t, std::size_t self) {
    const std::vector<double> g = t.adjoint(self);
    if (t.needs_grad(ai)) {
      std::vector<double>& d = t.adjoint(ai);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * (*bv)[i];
    }
    if (t.needs_grad(bi)) {
      std::vector<double>& d = t.adjoint(bi);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * (*av)[i];
    }
  });
}

Var scale(const Var& x, double s) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= s;
  return unary(x, std::move(out), [s](Tape&, const std::vector<double>& g, std::vector<double>& dx) {
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += s * g[i];
  });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return unary(x, Tensor({1}, total),
               [](Tape&, const std::vector<double>& g, std::vector<double>& dx) {
                 for (double& d : dx) d += g[0];
               });
}

Var mean(const Var& x) {
  const auto n = static_cast<double>(x.value().numel());
  return scale(sum(x), 1.0 / n);
}

Var sum_squared_error(const Var& pred, const Tensor& target) {
  require_same_shape(pred.value(), target, "sum_squared_error");
  auto residual = std::make_shared<std::vector<double>>(target.numel());
  double total = 0.0;
  for (std::size_t i = 0; i < target.numel(); ++i) {
    (*residual)[i] = pred.value()[i] - target[i];
    total += (*residual)[i] * (*residual)[i];
  }
  return unary(pred, Tensor({1}, total),
               [residual](Tape&, const std::vector<double>& g, std::vector<double>& dx) {
                 for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 2.0 * (*residual)[i] * g[0];
               });
}

}  // namespace blindspot

namespace blindspot {

Var extract(const Var& x, std::size_t offset, Shape shape) {
  const std::size_t n = shape_numel(shape);
  if (offset + n > x.value().numel()) throw DimensionError("extract: range out of bounds");
  std::vector<double> data(x.value().data().begin() + static_cast<std::ptrdiff_t>(offset),
                           x.value().data().begin() + static_cast<std::ptrdiff_t>(offset + n));
  const std::size_t x_id = x.id();
  return x.tape()->record(Tensor(std::move(shape), std::move(data)), {x_id},
                          [x_id, offset](Tape& t, std::size_t self) {
                            const std::vector<double>& g = t.adjoint(self);
                            std::vector<double>& dx = t.adjoint(x_id);
                            for (std::size_t i = 0; i < g.size(); ++i) dx[offset + i] += g[i];
                          });
}

ParamBinder leaf_binder(Tape& tape) {
  return [&tape](Tensor& p) { return tape.leaf(p); };
}

ParamBinder constant_binder(Tape& tape) {
  return [&tape](Tensor& p) { return tape.constant(p); };
}

}  // namespace blindspot
