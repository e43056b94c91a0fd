#include "slicenet/sliced_layers.hpp"

#include "slicenet/error.hpp"

namespace slicenet {

namespace {

Var narrow_if_needed(Var v, std::size_t axis, std::size_t start, std::size_t length) {
  if (start == 0 && v.value().dim(axis) == length) return v;
  return ops::narrow(v, axis, start, length);
}

void require_width(const std::string& layer, const char* what, std::size_t expected,
                   std::size_t actual) {
  if (expected != actual) {
    throw DimensionError(layer + ": " + what + " width expected " + std::to_string(expected) +
                         ", got " + std::to_string(actual));
  }
}

}  // namespace

SlicedDense::SlicedDense(std::string n, GroupSpec in, GroupSpec out, bool rescale_output)
    : name(std::move(n)),
      weight(name + ".weight", Tensor({out.total_width(), in.total_width()})),
      bias(name + ".bias", Tensor({out.total_width()})),
      in_spec(in),
      out_spec(out),
      rescale(rescale_output) {}

SlicedConv2D::SlicedConv2D(std::string n, GroupSpec in, GroupSpec out, std::size_t kernel,
                           std::size_t stride_, std::size_t padding_)
    : name(std::move(n)),
      kernels(name + ".kernels", Tensor({out.total_width(), in.total_width(), kernel, kernel})),
      bias(name + ".bias", Tensor({out.total_width()})),
      in_spec(in),
      out_spec(out),
      kernel_size(kernel),
      stride(stride_),
      padding(padding_) {
  if (kernel % 2 == 0) throw ConfigError(name + ": kernel size must be odd");
}

SlicedGroupNorm::SlicedGroupNorm(std::string n, GroupSpec s, double eps)
    : name(std::move(n)),
      gamma(name + ".gamma", Tensor({s.total_width()}, 1.0)),
      beta(name + ".beta", Tensor({s.total_width()})),
      spec(s),
      epsilon(eps) {
  if (!(eps > 0.0)) throw ConfigError(name + ": epsilon must be positive");
}

SlicedLSTM::SlicedLSTM(std::string n, GroupSpec in, GroupSpec hidden)
    : name(std::move(n)),
      w_input(name + ".w_input", Tensor({4 * hidden.total_width(), in.total_width()})),
      w_hidden(name + ".w_hidden", Tensor({4 * hidden.total_width(), hidden.total_width()})),
      bias(name + ".bias", Tensor({4 * hidden.total_width()})),
      in_spec(in),
      hidden_spec(hidden) {}

Var prefix(Tape& tape, Parameter& p, std::size_t rows, std::size_t cols) {
  Var v = tape.param(p);
  v = narrow_if_needed(v, 0, 0, rows);
  if (p.value.rank() >= 2) v = narrow_if_needed(v, 1, 0, cols);
  return v;
}

Var dense_forward(Tape& tape, SlicedDense& layer, Var x, double r_in, double r_out) {
  const std::size_t g_in = layer.in_spec.slice_boundary(r_in);
  const std::size_t g_out = layer.out_spec.slice_boundary(r_out);
  if (x.value().rank() != 2) {
    throw DimensionError(layer.name + ": expected [B x width] input, got " + to_string(x.shape()));
  }
  require_width(layer.name, "input", g_in, x.value().dim(1));
  Var y = ops::matmul_nt(x, prefix(tape, layer.weight, g_out, g_in));
  if (layer.rescale && g_in != layer.in_spec.total_width()) {
    y = ops::scale(y, static_cast<double>(layer.in_spec.total_width()) / static_cast<double>(g_in));
  }
  return ops::add_bias(y, prefix(tape, layer.bias, g_out));
}

Var conv_forward(Tape& tape, SlicedConv2D& layer, Var x, double r_in, double r_out) {
  const std::size_t g_in = layer.in_spec.slice_boundary(r_in);
  const std::size_t g_out = layer.out_spec.slice_boundary(r_out);
  if (x.value().rank() != 4) {
    throw DimensionError(layer.name + ": expected [B x C x H x W] input, got " +
                         to_string(x.shape()));
  }
  require_width(layer.name, "input channel", g_in, x.value().dim(1));
  Var k = tape.param(layer.kernels);
  k = narrow_if_needed(k, 0, 0, g_out);
  k = narrow_if_needed(k, 1, 0, g_in);
  Var y = ops::conv2d(x, k, layer.stride, layer.padding);
  return ops::add_bias(y, prefix(tape, layer.bias, g_out));
}

Var groupnorm_forward(Tape& tape, SlicedGroupNorm& layer, Var x, double rate) {
  if (x.value().rank() != 2 && x.value().rank() != 4) {
    throw DimensionError(layer.name + ": expected [B x C] or [B x C x H x W], got " +
                         to_string(x.shape()));
  }
  const std::size_t width = x.value().dim(1);
  if (!layer.spec.on_boundary(width)) {
    throw ConfigError(layer.name + ": width " + std::to_string(width) +
                      " is not on a group boundary (group size " +
                      std::to_string(layer.spec.group_size()) + ")");
  }
  require_width(layer.name, "input channel", layer.spec.slice_boundary(rate), width);
  return ops::group_norm(x, prefix(tape, layer.gamma, width), prefix(tape, layer.beta, width),
                         layer.spec.group_size(), layer.epsilon);
}

std::array<Var, 4> lstm_gate_preactivations(Tape& tape, SlicedLSTM& layer, Var x_t, Var h_prev,
                                            double rate) {
  const std::size_t g_in = layer.in_spec.slice_boundary(rate);
  const std::size_t g_h = layer.hidden_spec.slice_boundary(rate);
  const std::size_t hidden = layer.hidden_spec.total_width();
  if (x_t.value().rank() != 2 || h_prev.value().rank() != 2 ||
      x_t.value().dim(0) != h_prev.value().dim(0)) {
    throw DimensionError(layer.name + ": inputs must be [B x width] with equal batch, got " +
                         to_string(x_t.shape()) + " and " + to_string(h_prev.shape()));
  }
  require_width(layer.name, "input", g_in, x_t.value().dim(1));
  require_width(layer.name, "hidden state", g_h, h_prev.value().dim(1));
  Var wx = tape.param(layer.w_input);
  Var wh = tape.param(layer.w_hidden);
  Var b = tape.param(layer.bias);
  std::array<Var, 4> gates;
  for (std::size_t k = 0; k < 4; ++k) {
    Var wx_k = narrow_if_needed(narrow_if_needed(wx, 0, k * hidden, g_h), 1, 0, g_in);
    Var wh_k = narrow_if_needed(narrow_if_needed(wh, 0, k * hidden, g_h), 1, 0, g_h);
    Var b_k = narrow_if_needed(b, 0, k * hidden, g_h);
    Var pre = ops::add(ops::matmul_nt(x_t, wx_k), ops::matmul_nt(h_prev, wh_k));
    gates[k] = ops::add_bias(pre, b_k);
  }
  return gates;
}

LstmState lstm_step(Tape& tape, SlicedLSTM& layer, Var x_t, Var h_prev, Var c_prev, double rate) {
  if (c_prev.shape() != h_prev.shape()) {
    throw DimensionError(layer.name + ": memory state " + to_string(c_prev.shape()) +
                         " disagrees with hidden state " + to_string(h_prev.shape()));
  }
  const auto gates = lstm_gate_preactivations(tape, layer, x_t, h_prev, rate);
  Var i = ops::sigmoid(gates[kInputGate]);
  Var f = ops::sigmoid(gates[kForgetGate]);
  Var g = ops::tanh(gates[kCellGate]);
  Var o = ops::sigmoid(gates[kOutputGate]);
  Var c = ops::add(ops::mul(f, c_prev), ops::mul(i, g));
  Var h = ops::mul(o, ops::tanh(c));
  return {h, c};
}

LstmState lstm_zero_state(Tape& tape, const SlicedLSTM& layer, std::size_t batch, double rate) {
  const std::size_t g_h = layer.hidden_spec.slice_boundary(rate);
  return {tape.constant(Tensor({batch, g_h})), tape.constant(Tensor({batch, g_h}))};
}

void init_uniform(Parameter& p, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : p.value.data()) v = dist(rng);
}

}  // namespace slicenet
