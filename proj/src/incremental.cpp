#include "slicenet/incremental.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "slicenet/error.hpp"
#include "slicenet/kernels.hpp"

namespace slicenet {

namespace {

std::size_t checked_boundary(const GroupSpec& spec, double rate, const std::string& layer) {
  const std::size_t g = spec.slice_boundary(rate);
  if (spec.group_count() > 1 &&
      std::abs(rate * static_cast<double>(spec.total_width()) - static_cast<double>(g)) > 1e-9) {
    throw UsageError(layer + ": rate " + std::to_string(rate) + " is not a group boundary");
  }
  return g;
}

Tensor block(const Tensor& w, std::size_t row0, std::size_t rows, std::size_t col0,
             std::size_t cols) {
  Tensor t = kernels::narrow(w, 0, row0, rows);
  return kernels::narrow(t, 1, col0, cols);
}

Tensor product(const WeightPartition& p, const Tensor& w, const Tensor& x) {
  return p.conv ? kernels::conv2d(x, w, p.stride, p.padding) : kernels::matmul_nt(x, w);
}

// Multiply-accumulates per example for one output row and one input channel.
std::uint64_t unit_cost(bool conv, std::size_t k, std::size_t stride, std::size_t padding,
                        const Tensor& x) {
  if (!conv) return 1;
  const std::size_t ho = kernels::conv_output_extent(x.dim(2), k, stride, padding);
  const std::size_t wo = kernels::conv_output_extent(x.dim(3), k, stride, padding);
  return static_cast<std::uint64_t>(k * k * ho * wo);
}

std::uint64_t unit_cost(const WeightPartition& p, const Tensor& x) {
  return unit_cost(p.conv, p.conv ? p.w_a.dim(2) : 1, p.stride, p.padding, x);
}

void check_inputs(const WeightPartition& p, const Tensor& y_a, const Tensor& x_a,
                  const std::optional<Tensor>& x_b) {
  const std::size_t rank = p.conv ? 4 : 2;
  auto fail = [&](const std::string& what) {
    throw DimensionError(p.layer + ": " + what);
  };
  if (x_a.rank() != rank || y_a.rank() != rank) fail("inputs must have rank " + std::to_string(rank));
  if (x_a.dim(1) != p.in_a) {
    fail("base input width " + std::to_string(x_a.dim(1)) + ", expected " + std::to_string(p.in_a));
  }
  if (y_a.dim(1) != p.out_a || y_a.dim(0) != x_a.dim(0)) {
    fail("cached base output " + to_string(y_a.shape()) + " does not match the partition");
  }
  if (p.delta_in() > 0) {
    if (!x_b) fail("new input block missing");
    if (x_b->rank() != rank || x_b->dim(1) != p.delta_in() || x_b->dim(0) != x_a.dim(0)) {
      fail("new input block " + to_string(x_b->shape()) + " does not match the partition");
    }
  } else if (x_b) {
    fail("partition has no new input channels");
  }
}

WidenResult widen(const WeightPartition& p, const Tensor& y_a, const Tensor& x_a,
                  const std::optional<Tensor>& x_b, bool exact) {
  check_inputs(p, y_a, x_a, x_b);
  const std::uint64_t unit = unit_cost(p, x_a);
  WidenResult r;
  r.full_flops = unit * p.out_b * p.in_b;
  r.base = y_a;
  if (p.delta_in() > 0) {
    const Tensor bx = product(p, *p.b, *x_b);
    if (exact) {
      kernels::add_inplace(r.base, bx);
      r.flops += unit * p.out_a * p.delta_in();
    } else {
      double bound = 0.0;
      for (double v : bx.data()) bound = std::max(bound, std::abs(v));
      r.error_bound = bound;
    }
  }
  if (p.delta_out() > 0) {
    Tensor extra = product(p, *p.c, x_a);
    if (p.delta_in() > 0) kernels::add_inplace(extra, product(p, *p.d, *x_b));
    r.extra = std::move(extra);
    r.flops += unit * p.delta_out() * p.in_b;
  }
  return r;
}

// Applies the r_b rescaling factor and bias prefix to a raw product.
Tensor finish_linear(Tensor y, const Tensor& bias, double factor) {
  if (factor != 1.0) {
    for (double& v : y.data()) v *= factor;
  }
  const std::size_t channels = y.dim(1);
  const std::size_t inner = y.size() / (y.dim(0) * channels);
  auto data = y.data();
  for (std::size_t b = 0; b < y.dim(0); ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < inner; ++i) data[(b * channels + c) * inner + i] += bias[c];
  return y;
}

struct LinearView {
  const Tensor* weight;
  const Tensor* bias;
  const GroupSpec* in;
  const GroupSpec* out;
  bool conv;
  bool rescale;
  std::size_t stride, padding;
  const std::string* name;
};

std::optional<LinearView> linear_view(const SequentialLayer& layer) {
  if (const auto* d = std::get_if<SlicedDense>(&layer)) {
    return LinearView{&d->weight.value, &d->bias.value, &d->in_spec, &d->out_spec, false,
                      d->rescale, 1, 0, &d->name};
  }
  if (const auto* c = std::get_if<SlicedConv2D>(&layer)) {
    return LinearView{&c->kernels.value, &c->bias.value, &c->in_spec, &c->out_spec, true,
                      false, c->stride, c->padding, &c->name};
  }
  return std::nullopt;
}

Tensor prefix_weight(const LinearView& v, std::size_t rows, std::size_t cols) {
  return block(*v.weight, 0, rows, 0, cols);
}

double rescale_factor(const LinearView& v, std::size_t g_in) {
  if (!v.rescale || g_in == v.in->total_width()) return 1.0;
  return static_cast<double>(v.in->total_width()) / static_cast<double>(g_in);
}

Tensor raw_product(const LinearView& v, const Tensor& w, const Tensor& x) {
  return v.conv ? kernels::conv2d(x, w, v.stride, v.padding) : kernels::matmul_nt(x, w);
}

Tensor apply_other(Tape& tape, SequentialLayer& layer, const LayerPlan& plan, const Tensor& x,
                   double rate) {
  return forward_layer(tape, layer, plan, tape.constant(x), rate).value();
}

Tensor network_input(SequentialNetwork& net, const Tensor& features, double rate) {
  Tape tape;
  return net.input(tape, features, rate).value();
}

}  // namespace

WeightPartition partition_weight(const Tensor& weight, const GroupSpec& in, const GroupSpec& out,
                                 double r_a, double r_b, const std::string& layer) {
  validate_rate(r_a);
  validate_rate(r_b);
  if (!(r_a < r_b)) {
    throw UsageError(layer + ": base rate " + std::to_string(r_a) +
                     " must be below the target rate " + std::to_string(r_b));
  }
  if (weight.rank() != 2 && weight.rank() != 4) {
    throw DimensionError(layer + ": weight must be rank 2 or 4, got " + to_string(weight.shape()));
  }
  if (weight.dim(0) != out.total_width() || weight.dim(1) != in.total_width()) {
    throw DimensionError(layer + ": weight " + to_string(weight.shape()) +
                         " does not match its group specs");
  }
  WeightPartition p;
  p.layer = layer;
  p.conv = weight.rank() == 4;
  p.in_a = checked_boundary(in, r_a, layer);
  p.in_b = checked_boundary(in, r_b, layer);
  p.out_a = checked_boundary(out, r_a, layer);
  p.out_b = checked_boundary(out, r_b, layer);
  if (p.in_a == p.in_b && p.out_a == p.out_b) {
    throw UsageError(layer + ": rates " + std::to_string(r_a) + " and " + std::to_string(r_b) +
                     " select the same prefix");
  }
  p.w_a = block(weight, 0, p.out_a, 0, p.in_a);
  if (p.delta_in() > 0) p.b = block(weight, 0, p.out_a, p.in_a, p.delta_in());
  if (p.delta_out() > 0) p.c = block(weight, p.out_a, p.delta_out(), 0, p.in_a);
  if (p.delta_in() > 0 && p.delta_out() > 0) {
    p.d = block(weight, p.out_a, p.delta_out(), p.in_a, p.delta_in());
  }
  return p;
}

WeightPartition partition_weight(const SlicedDense& layer, double r_a, double r_b) {
  return partition_weight(layer.weight.value, layer.in_spec, layer.out_spec, r_a, r_b, layer.name);
}

WeightPartition partition_weight(const SlicedConv2D& layer, double r_a, double r_b) {
  WeightPartition p =
      partition_weight(layer.kernels.value, layer.in_spec, layer.out_spec, r_a, r_b, layer.name);
  p.stride = layer.stride;
  p.padding = layer.padding;
  return p;
}

Tensor reassemble(const WeightPartition& p) {
  Tensor top = p.b ? kernels::concat(p.w_a, *p.b, 1) : p.w_a;
  if (!p.c) return top;
  Tensor bottom = p.d ? kernels::concat(*p.c, *p.d, 1) : *p.c;
  return kernels::concat(top, bottom, 0);
}

Tensor WidenResult::combined() const {
  return extra ? kernels::concat(base, *extra, 1) : base;
}

WidenResult widen_exact(const WeightPartition& partition, const Tensor& y_a, const Tensor& x_a,
                        const std::optional<Tensor>& x_b) {
  return widen(partition, y_a, x_a, x_b, true);
}

WidenResult widen_approx(const WeightPartition& partition, const Tensor& y_a, const Tensor& x_a,
                         const std::optional<Tensor>& x_b) {
  return widen(partition, y_a, x_a, x_b, false);
}

void ActivationCache::check_token(std::uint64_t token) const {
  if (token != token_) {
    throw UsageError("activation cache holds batch " + std::to_string(token_) +
                     ", requested batch " + std::to_string(token));
  }
}

void ActivationCache::store(const std::string& layer, Entry entry) {
  entries_.insert_or_assign(layer, std::move(entry));
}

const ActivationCache::Entry& ActivationCache::lookup(const std::string& layer,
                                                      std::uint64_t token) const {
  check_token(token);
  const auto it = entries_.find(layer);
  if (it == entries_.end()) throw UsageError("activation cache has no entry for layer " + layer);
  return it->second;
}

const Tensor& ActivationCache::output(std::uint64_t token) const {
  check_token(token);
  if (!output_) throw UsageError("activation cache has no final output");
  return *output_;
}

ActivationCache run_and_cache(SequentialNetwork& net, const Tensor& features, double rate,
                              std::uint64_t token) {
  validate_rate(rate);
  ActivationCache cache(token, rate);
  Tensor x = network_input(net, features, rate);
  Tape tape;
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    SequentialLayer& layer = net.layers()[i];
    const LayerPlan& plan = net.plan()[i];
    if (const auto v = linear_view(layer)) {
      const std::size_t g_in = v->in->slice_boundary(rate);
      const std::size_t g_out = v->out->slice_boundary(rate);
      if (x.dim(1) != g_in) {
        throw DimensionError(*v->name + ": input width " + std::to_string(x.dim(1)) +
                             ", expected " + std::to_string(g_in));
      }
      Tensor prod = raw_product(*v, prefix_weight(*v, g_out, g_in), x);
      Tensor y = finish_linear(prod, kernels::narrow(*v->bias, 0, 0, g_out), rescale_factor(*v, g_in));
      cache.store(*v->name, {std::move(x), std::move(prod)});
      x = std::move(y);
    } else {
      x = apply_other(tape, layer, plan, x, rate);
    }
  }
  cache.set_output(std::move(x));
  return cache;
}

WidenOutcome widen_model(SequentialNetwork& net, const ActivationCache& cache,
                         const Tensor& features, std::uint64_t token, double r_b, WidenMode mode) {
  validate_rate(r_b);
  const double r_a = cache.rate();
  if (r_b < r_a) {
    throw UsageError("target rate " + std::to_string(r_b) + " is below the cached rate " +
                     std::to_string(r_a));
  }
  WidenOutcome out;
  if (r_b == r_a) {
    out.output = cache.output(token);
    return out;
  }
  Tensor x = network_input(net, features, r_b);
  Tape tape;
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    SequentialLayer& layer = net.layers()[i];
    const LayerPlan& plan = net.plan()[i];
    const auto v = linear_view(layer);
    if (!v) {
      x = apply_other(tape, layer, plan, x, r_b);
      continue;
    }
    const ActivationCache::Entry& entry = cache.lookup(*v->name, token);
    const std::size_t in_a = v->in->slice_boundary(r_a), in_b = v->in->slice_boundary(r_b);
    const std::size_t out_a = v->out->slice_boundary(r_a), out_b = v->out->slice_boundary(r_b);
    if (x.dim(1) != in_b) {
      throw DimensionError(*v->name + ": input width " + std::to_string(x.dim(1)) +
                           ", expected " + std::to_string(in_b));
    }
    const Tensor x_a = in_a == in_b ? x : kernels::narrow(x, 1, 0, in_a);
    std::optional<Tensor> x_b;
    if (in_b > in_a) x_b = kernels::narrow(x, 1, in_a, in_b - in_a);

    LayerWidenStats stats;
    stats.layer = *v->name;
    const bool same_input = x_a == entry.input;
    const bool approx = mode == WidenMode::kApprox && out_b > out_a;
    Tensor y_a = entry.product;
    std::uint64_t base_cost = 0;
    if (!same_input && !approx) {
      y_a = raw_product(*v, prefix_weight(*v, out_a, in_a), x_a);
      base_cost = out_a * in_a;
    }
    stats.reused = same_input || approx;

    Tensor prod;
    if (in_a == in_b && out_a == out_b) {
      prod = y_a;
      const std::uint64_t unit = unit_cost(v->conv, v->conv ? v->weight->dim(2) : 1, v->stride,
                                           v->padding, x);
      stats.flops = unit * base_cost;
      stats.full_flops = unit * out_b * in_b;
    } else {
      WeightPartition part =
          partition_weight(*v->weight, *v->in, *v->out, r_a, r_b, *v->name);
      part.stride = v->stride;
      part.padding = v->padding;
      const WidenResult w = approx ? widen_approx(part, y_a, x_a, x_b) : widen_exact(part, y_a, x_a, x_b);
      const std::uint64_t unit = unit_cost(part, x);
      stats.flops = w.flops + unit * base_cost;
      stats.full_flops = w.full_flops;
      stats.error_bound = w.error_bound;
      prod = w.combined();
    }
    out.flops += stats.flops;
    out.full_flops += stats.full_flops;
    out.max_error_bound = std::max(out.max_error_bound, stats.error_bound);
    out.layers.push_back(stats);
    x = finish_linear(std::move(prod), kernels::narrow(*v->bias, 0, 0, out_b), rescale_factor(*v, in_b));
  }
  out.output = std::move(x);
  return out;
}

}  // namespace slicenet
