#include "slicenet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "slicenet/error.hpp"
#include "slicenet/kernels.hpp"

namespace slicenet {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kMatMulNT: return "matmul_nt";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kNarrow: return "narrow";
    case OpKind::kConcat: return "concat";
    case OpKind::kReshape: return "reshape";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kGroupNorm: return "group_norm";
    case OpKind::kMaxPool: return "max_pool2d";
    case OpKind::kGlobalAvgPool: return "global_avg_pool";
    case OpKind::kEmbedding: return "embedding";
    case OpKind::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpKind::kSum: return "sum";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!tape_) throw UsageError("Var is not bound to a tape");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::kConstant, {}, std::move(value), nullptr, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  bound_.emplace(&p, nodes_.size());
  nodes_.push_back(Node{OpKind::kParameter, {}, p.value, nullptr, &p, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward) {
  bool needs = false;
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw UsageError("record: input node does not precede output");
    needs = needs || nodes_[in].requires_grad;
  }
  nodes_.push_back(Node{kind, std::move(inputs), std::move(value),
                        needs ? std::move(backward) : BackwardFn{}, nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw UsageError("backward: loss belongs to a different tape");
  const Node& root = nodes_.at(loss.id());
  if (root.value.size() != 1) {
    throw UsageError("backward: loss must be scalar, got shape " + to_string(root.value.shape()));
  }
  std::vector<Tensor> adjoint(loss.id() + 1);
  adjoint[loss.id()] = Tensor(root.value.shape(), 1.0);
  std::vector<Tensor*> slots;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || adjoint[i].empty()) continue;
    if (node.param) {
      if (node.param->grad.shape() != adjoint[i].shape()) {
        node.param->grad = Tensor(node.param->value.shape());
      }
      kernels::add_inplace(node.param->grad, adjoint[i]);
      continue;
    }
    if (!node.backward) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (adjoint[in].empty()) adjoint[in] = Tensor(nodes_[in].value.shape());
      slots[k] = &adjoint[in];
    }
    node.backward(*this, adjoint[i], slots);
    adjoint[i] = Tensor();
  }
}

namespace ops {
namespace {

Tape& tape_of(Var a) {
  if (!a.tape()) throw UsageError("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape() || !a.tape()) throw UsageError("operands belong to different tapes");
  return *a.tape();
}

bool is_scalar(const Tensor& t) { return t.size() == 1; }

void require_elementwise(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape() && !is_scalar(b)) {
    throw DimensionError(std::string(what) + ": incompatible shapes " + to_string(a.shape()) +
                         " and " + to_string(b.shape()) +
                         " (only equal shapes or a scalar right operand are supported)");
  }
}

template <typename F, typename D>
Var unary(Var a, OpKind kind, F forward, D derivative_from_output) {
  Tape& tape = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.data()) v = forward(v);
  const std::size_t out_id = tape.size();
  return tape.record(kind, {a.id()}, std::move(out),
                     [out_id, derivative_from_output](const Tape& t, const Tensor& g,
                                                      std::span<Tensor*> gi) {
                       const Tensor& y = t.value(out_id);
                       auto dst = gi[0]->data();
                       for (std::size_t i = 0; i < dst.size(); ++i) {
                         dst[i] += g[i] * derivative_from_output(y[i]);
                       }
                     });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  Tensor out = kernels::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(OpKind::kMatMul, {ia, ib}, std::move(out),
                     [ia, ib](const Tape& t, const Tensor& g, std::span<Tensor*> gi) {
                       if (gi[0]) {
                         kernels::add_inplace(*gi[0], kernels::matmul_nt(g, t.value(ib)));
                       }
                       if (gi[1]) {
                         kernels::add_inplace(
                             *gi[1], kernels::matmul(kernels::transpose(t.value(ia)), g));
                       }
                     });
}

Var matmul_nt(Var x, Var w) {
  Tape& tape = tape_of(x, w);
  Tensor out = kernels::matmul_nt(x.value(), w.value());
  const std::size_t ix = x.id(), iw = w.id();
  return tape.record(OpKind::kMatMulNT, {ix, iw}, std::move(out),
                     [ix, iw](const Tape& t, const Tensor& g, std::span<Tensor*> gi) {
                       // y = x w^T: dx = g w, dw = g^T x
                       if (gi[0]) kernels::add_inplace(*gi[0], kernels::matmul(g, t.value(iw)));
                       if (gi[1]) {
                         kernels::add_inplace(
                             *gi[1], kernels::matmul(kernels::transpose(g), t.value(ix)));
                       }
                     });
}

Var transpose(Var a) {
  Tape& tape = tape_of(a);
  return tape.record(OpKind::kTranspose, {a.id()}, kernels::transpose(a.value()),
                     [](const Tape&, const Tensor& g, std::span<Tensor*> gi) {
                       kernels::add_inplace(*gi[0], kernels::transpose(g));
                     });
}

Var narrow(Var a, std::size_t axis, std::size_t start, std::size_t length) {
  Tape& tape = tape_of(a);
  Tensor out = kernels::narrow(a.value(), axis, start, length);
  return tape.record(OpKind::kNarrow, {a.id()}, std::move(out),
                     [axis, start](const Tape&, const Tensor& g, std::span<Tensor*> gi) {
                       kernels::narrow_add(*gi[0], g, axis, start);
                     });
}

Var concat(Var a, Var b, std::size_t axis) {
  Tape& tape = tape_of(a, b);
  const std::size_t split = a.value().dim(axis);
  const std::size_t rest = b.value().dim(axis);
  return tape.record(OpKind::kConcat, {a.id(), b.id()},
                     kernels::concat(a.value(), b.value(), axis),
                     [axis, split, rest](const Tape&, const Tensor& g, std::span<Tensor*> gi) {
                       if (gi[0]) kernels::add_inplace(*gi[0], kernels::narrow(g, axis, 0, split));
                       if (gi[1]) {
                         kernels::add_inplace(*gi[1], kernels::narrow(g, axis, split, rest));
                       }
                     });
}

Var concat_all(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw UsageError("concat_all: no operands");
  Tape& tape = tape_of(parts.front());
  const Tensor& first = parts.front().value();
  if (axis >= first.rank()) throw DimensionError("concat_all: axis out of range");
  Shape shape = first.shape();
  shape[axis] = 0;
  std::vector<std::size_t> ids, offsets, lengths;
  for (const Var& p : parts) {
    tape_of(parts.front(), p);
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < first.rank(); ++i) {
      if (v.rank() != first.rank() || (i != axis && v.dim(i) != first.dim(i))) {
        throw DimensionError("concat_all: extents disagree, " + to_string(first.shape()) +
                             " and " + to_string(v.shape()));
      }
    }
    ids.push_back(p.id());
    offsets.push_back(shape[axis]);
    lengths.push_back(v.dim(axis));
    shape[axis] += v.dim(axis);
  }
  Tensor out(shape);
  for (std::size_t k = 0; k < parts.size(); ++k) kernels::narrow_add(out, parts[k].value(), axis, offsets[k]);
  return tape.record(OpKind::kConcat, ids, std::move(out),
                     [axis, offsets, lengths](const Tape&, const Tensor& g, std::span<Tensor*> gi) {
                       for (std::size_t k = 0; k < gi.size(); ++k) {
                         if (gi[k]) kernels::add_inplace(*gi[k], kernels::narrow(g, axis, offsets[k], lengths[k]));
                       }
                     });
}

Var reshape(Var a, Shape shape) {
  Tape& tape = tape_of(a);
  if (element_count(shape) != a.value().size()) {
    throw DimensionError("reshape: " + to_string(a.shape()) + " cannot become " +
                         to_string(shape));
  }
  return tape.record(OpKind::kReshape, {a.id()}, a.value().reshaped(std::move(shape)),
                     [](const Tape&, const Tensor& g, std::span<Tensor*> gi) {
                       auto dst = gi[0]->data();
                       for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
                     });
}

Var add(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  require_elementwise(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  const bool bcast = a.value().shape() != bv.shape();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bcast ? bv[0] : bv[i];
  return tape.record(OpKind::kAdd, {a.id(), b.id()}, std::move(out),
                     [bcast](const Tape&, const Tensor& g, std::span<Tensor*> gi) {
                       if (gi[0]) kernels::add_inplace(*gi[0], g);
                       if (gi[1]) {
                         if (bcast) {
                           double s = 0.0;
                           for (double v : g.data()) s += v;
                           (*gi[1])[0] += s;
                         } else {
                           kernels::add_inplace(*gi[1], g);
                         }
                       }
                     });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  require_elementwise(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  const bool bcast = a.value().shape() != bv.shape();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bcast ? bv[0] : bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(OpKind::kMul, {ia, ib}, std::move(out),
                     [ia, ib, bcast](const Tape& t, const Tensor& g, std::span<Tensor*> gi) {
                       const Tensor& av = t.value(ia);
                       const Tensor& bv = t.value(ib);
                       if (gi[0]) {
                         auto dst = gi[0]->data();
                         for (std::size_t i = 0; i < dst.size(); ++i) {
                           dst[i] += g[i] * (bcast ? bv[0] : bv[i]);
                         }
                       }
                       if (gi[1]) {
                         if (bcast) {
                           double s = 0.0;
                           for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * av[i];
                           (*gi[1])[0] += s;
                         } else {
                           auto dst = gi[1]->data();
                           for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * av[i];
                         }
                       }
                     });
}

Var scale(Var a, double factor) {
  Tape& tape = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return tape.record(OpKind::kScale, {a.id()}, std::move(out),
                     [factor](const Tape&, const Tensor& g, std::span<Tensor*> gi) {
                       auto dst = gi[0]->data();
                       for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * g[i];
                     });
}

Var relu(Var a) {
  return unary(
      a, OpKind::kRelu, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double y) { return y > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(
      a, OpKind::kSigmoid,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, OpKind::kTanh, [](double v) { return std::tanh(v); },
      [](double y) { return 1.0 - y * y; });
}

Var add_bias(Var x, Var bias) {
  Tape& tape = tape_of(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if ((xv.rank() != 2 && xv.rank() != 4) || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
    throw DimensionError("add_bias: bias " + to_string(bv.shape()) + " does not match axis 1 of " +
                         to_string(xv.shape()));
  }
  const std::size_t batch = xv.dim(0), channels = xv.dim(1);
  const std::size_t inner = xv.size() / (batch * channels);
  Tensor out = xv;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t s = 0; s < inner; ++s) out[(b * channels + c) * inner + s] += bv[c];
  return tape.record(OpKind::kAddBias, {x.id(), bias.id()}, std::move(out),
                     [batch, channels, inner](const Tape&, const Tensor& g, std::span<Tensor*> gi) {
                       if (gi[0]) kernels::add_inplace(*gi[0], g);
                       if (gi[1]) {
                         auto db = gi[1]->data();
                         for (std::size_t b = 0; b < batch; ++b)
                           for (std::size_t c = 0; c < channels; ++c)
                             for (std::size_t s = 0; s < inner; ++s)
                               db[c] += g[(b * channels + c) * inner + s];
                       }
                     });
}

Var conv2d(Var input, Var kernels, std::size_t stride, std::size_t padding) {
  Tape& tape = tape_of(input, kernels);
  const Tensor& kv = kernels.value();
  if (kv.rank() != 4 || kv.dim(2) != kv.dim(3) || kv.dim(2) % 2 == 0) {
    throw ConfigError("conv2d: kernels must be [N x M x k x k] with k odd, got " +
                      to_string(kv.shape()));
  }
  if (input.value().rank() == 3) {
    const Shape& s = input.value().shape();
    Var batched = reshape(input, {1, s[0], s[1], s[2]});
    Var out = conv2d(batched, kernels, stride, padding);
    const Shape& os = out.value().shape();
    return reshape(out, {os[1], os[2], os[3]});
  }
  Tensor out = kernels::conv2d(input.value(), kv, stride, padding);
  const std::size_t ix = input.id(), ik = kernels.id();
  return tape.record(OpKind::kConv2d, {ix, ik}, std::move(out),
                     [ix, ik, stride, padding](const Tape& t, const Tensor& g,
                                               std::span<Tensor*> gi) {
                       if (gi[0]) kernels::conv2d_backward_input(g, t.value(ik), stride, padding, *gi[0]);
                       if (gi[1]) kernels::conv2d_backward_kernel(g, t.value(ix), stride, padding, *gi[1]);
                     });
}

Var group_norm(Var x, Var gamma, Var beta, std::size_t group_size, double epsilon) {
  Tape& tape = tape_of(x, gamma);
  tape_of(x, beta);
  const Tensor& xv = x.value();
  if (xv.rank() != 2 && xv.rank() != 4) {
    throw DimensionError("group_norm: expected [B x C] or [B x C x H x W], got " +
                         to_string(xv.shape()));
  }
  const std::size_t batch = xv.dim(0), channels = xv.dim(1);
  if (group_size == 0 || channels % group_size != 0) {
    throw ConfigError("group_norm: " + std::to_string(channels) +
                      " channels do not split into groups of " + std::to_string(group_size));
  }
  if (gamma.value().shape() != Shape{channels} || beta.value().shape() != Shape{channels}) {
    throw DimensionError("group_norm: affine parameters must have shape [" +
                         std::to_string(channels) + "]");
  }
  if (!(epsilon > 0.0)) throw ConfigError("group_norm: epsilon must be positive");
  const std::size_t inner = xv.size() / (batch * channels);
  const std::size_t groups = channels / group_size;
  const std::size_t count = group_size * inner;
  Tensor normalized(xv.shape());
  std::vector<double> inv_std(batch * groups);
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor out(xv.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t grp = 0; grp < groups; ++grp) {
      const std::size_t base = (b * channels + grp * group_size) * inner;
      double mean = 0.0;
      for (std::size_t i = 0; i < count; ++i) mean += xv[base + i];
      mean /= static_cast<double>(count);
      double var = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        const double d = xv[base + i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(count);
      const double is = 1.0 / std::sqrt(var + epsilon);
      inv_std[b * groups + grp] = is;
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t c = grp * group_size + i / inner;
        const double xh = (xv[base + i] - mean) * is;
        normalized[base + i] = xh;
        out[base + i] = gv[c] * xh + bv[c];
      }
    }
  }
  const std::size_t ig = gamma.id();
  return tape.record(
      OpKind::kGroupNorm, {x.id(), gamma.id(), beta.id()}, std::move(out),
      [=, normalized = std::move(normalized), inv_std = std::move(inv_std)](
          const Tape& t, const Tensor& g, std::span<Tensor*> gi) {
        const Tensor& gv = t.value(ig);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t grp = 0; grp < groups; ++grp) {
            const std::size_t base = (b * channels + grp * group_size) * inner;
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (std::size_t i = 0; i < count; ++i) {
              const std::size_t c = grp * group_size + i / inner;
              const double dxh = g[base + i] * gv[c];
              sum_dxh += dxh;
              sum_dxh_xh += dxh * normalized[base + i];
              if (gi[1]) (*gi[1])[c] += g[base + i] * normalized[base + i];
              if (gi[2]) (*gi[2])[c] += g[base + i];
            }
            if (!gi[0]) continue;
            const double is = inv_std[b * groups + grp];
            const double n = static_cast<double>(count);
            for (std::size_t i = 0; i < count; ++i) {
              const std::size_t c = grp * group_size + i / inner;
              const double dxh = g[base + i] * gv[c];
              (*gi[0])[base + i] +=
                  is * (dxh - sum_dxh / n - normalized[base + i] * sum_dxh_xh / n);
            }
          }
        }
      });
}

Var max_pool2d(Var x, std::size_t window) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  if (xv.rank() != 4 || window == 0 || xv.dim(2) % window != 0 || xv.dim(3) % window != 0) {
    throw DimensionError("max_pool2d: window " + std::to_string(window) +
                         " does not tile input " + to_string(xv.shape()));
  }
  const std::size_t planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t ho = h / window, wo = w / window;
  Tensor out({xv.dim(0), xv.dim(1), ho, wo});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = p * h * w + oy * window * w + ox * window;
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t i = p * h * w + (oy * window + ky) * w + ox * window + kx;
            if (xv[i] > best) {
              best = xv[i];
              best_i = i;
            }
          }
        }
        const std::size_t o = (p * ho + oy) * wo + ox;
        out[o] = best;
        argmax[o] = best_i;
      }
    }
  }
  return tape.record(OpKind::kMaxPool, {x.id()}, std::move(out),
                     [argmax = std::move(argmax)](const Tape&, const Tensor& g,
                                                  std::span<Tensor*> gi) {
                       for (std::size_t o = 0; o < argmax.size(); ++o) (*gi[0])[argmax[o]] += g[o];
                     });
}

Var global_avg_pool(Var x) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  if (xv.rank() != 4) {
    throw DimensionError("global_avg_pool: expected rank 4, got " + to_string(xv.shape()));
  }
  const std::size_t planes = xv.dim(0) * xv.dim(1);
  const std::size_t area = xv.dim(2) * xv.dim(3);
  Tensor out({xv.dim(0), xv.dim(1)});
  for (std::size_t p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < area; ++i) s += xv[p * area + i];
    out[p] = s / static_cast<double>(area);
  }
  return tape.record(OpKind::kGlobalAvgPool, {x.id()}, std::move(out),
                     [planes, area](const Tape&, const Tensor& g, std::span<Tensor*> gi) {
                       const double inv = 1.0 / static_cast<double>(area);
                       for (std::size_t p = 0; p < planes; ++p)
                         for (std::size_t i = 0; i < area; ++i) (*gi[0])[p * area + i] += g[p] * inv;
                     });
}

Var embedding(Var table, std::span<const std::size_t> ids) {
  Tape& tape = tape_of(table);
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw DimensionError("embedding: table must be rank 2");
  const std::size_t vocab = tv.dim(0), width = tv.dim(1);
  if (ids.empty()) throw DataError("embedding: no indices");
  Tensor out({ids.size(), width});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= vocab) {
      throw DataError("embedding: index " + std::to_string(ids[r]) + " outside vocabulary of " +
                      std::to_string(vocab));
    }
    std::copy_n(tv.data().data() + ids[r] * width, width, out.data().data() + r * width);
  }
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  return tape.record(OpKind::kEmbedding, {table.id()}, std::move(out),
                     [rows = std::move(rows), width](const Tape&, const Tensor& g,
                                                     std::span<Tensor*> gi) {
                       for (std::size_t r = 0; r < rows.size(); ++r)
                         for (std::size_t j = 0; j < width; ++j)
                           (*gi[0])[rows[r] * width + j] += g[r * width + j];
                     });
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
  Tape& tape = tape_of(logits);
  const Tensor& lv = logits.value();
  if (lv.rank() != 2) {
    throw DimensionError("softmax_cross_entropy: logits must be [B x C], got " +
                         to_string(lv.shape()));
  }
  const std::size_t batch = lv.dim(0), classes = lv.dim(1);
  if (labels.size() != batch) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(batch) + " rows");
  }
  Tensor probs(lv.shape());
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= classes) {
      throw DataError("softmax_cross_entropy: label " + std::to_string(labels[b]) +
                      " outside [0, " + std::to_string(classes) + ")");
    }
    const double* row = lv.data().data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] = std::exp(row[c] - log_z);
    loss += log_z - row[labels[b]];
  }
  loss /= static_cast<double>(batch);
  std::vector<std::size_t> targets(labels.begin(), labels.end());
  return tape.record(
      OpKind::kSoftmaxCrossEntropy, {logits.id()}, Tensor::scalar(loss),
      [probs = std::move(probs), targets = std::move(targets), batch, classes](
          const Tape&, const Tensor& g, std::span<Tensor*> gi) {
        const double s = g[0] / static_cast<double>(batch);
        auto dst = gi[0]->data();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < classes; ++c) {
            const double onehot = c == targets[b] ? 1.0 : 0.0;
            dst[b * classes + c] += s * (probs[b * classes + c] - onehot);
          }
        }
      });
}

Var sum(Var a) {
  Tape& tape = tape_of(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return tape.record(OpKind::kSum, {a.id()}, Tensor::scalar(s),
                     [](const Tape&, const Tensor& g, std::span<Tensor*> gi) {
                       for (double& v : gi[0]->data()) v += g[0];
                     });
}

}  // namespace ops
}  // namespace slicenet
