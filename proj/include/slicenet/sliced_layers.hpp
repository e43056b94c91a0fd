#pragma once

// Width-sliceable layers. Each layer stores full-width parameters; a forward
// pass at slice rate r reads only the leading groups selected by r on every
// sliced axis. Slicing is a pure index restriction: parameters outside the
// active prefix are never read, and after backward their gradients are zero.

#include <array>
#include <cstddef>
#include <random>
#include <string>

#include "slicenet/autodiff.hpp"
#include "slicenet/group_spec.hpp"

namespace slicenet {

struct SlicedDense {
  SlicedDense(std::string name, GroupSpec in, GroupSpec out, bool rescale = false);

  std::string name;
  Parameter weight;  // [N x M]
  Parameter bias;    // [N]
  GroupSpec in_spec;
  GroupSpec out_spec;
  /// Multiplies the pre-bias output by M / g_in.
  bool rescale;
};

struct SlicedConv2D {
  SlicedConv2D(std::string name, GroupSpec in, GroupSpec out, std::size_t kernel,
               std::size_t stride, std::size_t padding);

  std::string name;
  Parameter kernels;  // [N x M x k x k]
  Parameter bias;     // [N]
  GroupSpec in_spec;
  GroupSpec out_spec;
  std::size_t kernel_size;
  std::size_t stride;
  std::size_t padding;
};

/// Group normalization whose statistics groups are exactly the slicing groups.
struct SlicedGroupNorm {
  SlicedGroupNorm(std::string name, GroupSpec spec, double epsilon = 1e-5);

  std::string name;
  Parameter gamma;
  Parameter beta;
  GroupSpec spec;
  double epsilon;
};

/// LSTM cell. Gate rows are stacked in the order input, forget, cell, output.
/// The gate axis slices per gate: at width g_h each gate keeps its leading g_h units.
struct SlicedLSTM {
  SlicedLSTM(std::string name, GroupSpec in, GroupSpec hidden);

  std::string name;
  Parameter w_input;   // [4H x M]
  Parameter w_hidden;  // [4H x H]
  Parameter bias;      // [4H]
  GroupSpec in_spec;
  GroupSpec hidden_spec;
};

Var dense_forward(Tape& tape, SlicedDense& layer, Var x, double r_in, double r_out);
Var conv_forward(Tape& tape, SlicedConv2D& layer, Var x, double r_in, double r_out);
Var groupnorm_forward(Tape& tape, SlicedGroupNorm& layer, Var x, double rate);

struct LstmState {
  Var h;
  Var c;
};

enum LstmGate : std::size_t { kInputGate = 0, kForgetGate = 1, kCellGate = 2, kOutputGate = 3 };

/// Pre-activation of the four gates at rate r, each [B x g_h].
std::array<Var, 4> lstm_gate_preactivations(Tape& tape, SlicedLSTM& layer, Var x_t, Var h_prev,
                                            double rate);
LstmState lstm_step(Tape& tape, SlicedLSTM& layer, Var x_t, Var h_prev, Var c_prev, double rate);
/// Zero (h, c) at the hidden width selected by `rate`.
LstmState lstm_zero_state(Tape& tape, const SlicedLSTM& layer, std::size_t batch, double rate);

/// Leading [rows x cols] block of a rank-2 parameter (or leading entries of a vector).
Var prefix(Tape& tape, Parameter& p, std::size_t rows, std::size_t cols = 0);

void init_uniform(Parameter& p, double bound, std::mt19937_64& rng);

}  // namespace slicenet
