#pragma once

// Exact parameter and operation counts for any subnet.
//
// Convention: one multiply-accumulate counts as one operation. Biases,
// normalization and activations contribute no operations. Parameter counts
// include biases and normalization affine parameters.

#include <cstdint>
#include <string>
#include <vector>

#include "slicenet/model.hpp"
#include "slicenet/scheduler.hpp"

namespace slicenet {

struct CostRow {
  std::string layer;
  std::string kind;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  bool sliced_in = false;   // input axis has more than one group
  bool sliced_out = false;  // output axis has more than one group
};

struct CostReport {
  double rate = 1.0;
  std::vector<CostRow> rows;
  std::uint64_t total_params = 0;
  std::uint64_t total_flops = 0;
  double params_ratio = 1.0;  // relative to the full network
  double flops_ratio = 1.0;
  /// Operation ratio restricted to layers sliced on both axes.
  double sliced_flops_ratio = 1.0;
};

/// Per-layer costs of Subnet-r. Layers without parameters or operations are omitted.
std::vector<CostRow> cost_rows(const ModelSpec& spec, double rate);
CostReport cost_report(const ModelSpec& spec, double rate);

std::uint64_t count_params(const ModelSpec& spec, double rate);
std::uint64_t count_flops(const ModelSpec& spec, double rate);
/// Same, with the model's input shape replaced by `input_shape`.
std::uint64_t count_flops(const ModelSpec& spec, double rate, const Shape& input_shape);

/// Largest r in L with r <= min(sqrt(budget / full_cost), 1). Throws
/// BudgetInfeasibleError when even the lowest rate exceeds the bound.
double max_rate_for_budget(double budget, double full_cost, const SliceRateList& rates);

/// VGG-13 for 32x32 RGB inputs and 10 classes, with group normalization after
/// every convolution.
ModelSpec vgg13_spec(std::size_t groups = 8);

}  // namespace slicenet
