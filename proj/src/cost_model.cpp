#include "slicenet/cost_model.hpp"

#include <cmath>

#include "slicenet/error.hpp"

namespace slicenet {

std::vector<CostRow> cost_rows(const ModelSpec& spec, double rate) {
  validate_rate(rate);
  std::vector<CostRow> rows;
  for (const LayerPlan& p : resolve_architecture(spec)) {
    const std::uint64_t g_in = p.in_spec.slice_boundary(rate);
    const std::uint64_t g_out = p.out_spec.slice_boundary(rate);
    CostRow row;
    row.layer = p.name;
    row.kind = layer_kind_name(p.kind);
    row.sliced_in = p.in_spec.group_count() > 1;
    row.sliced_out = p.out_spec.group_count() > 1;
    switch (p.kind) {
      case LayerKind::kDense:
        row.params = g_in * g_out + g_out;
        row.flops = g_in * g_out * p.steps;
        break;
      case LayerKind::kConv: {
        const std::uint64_t k2 = p.kernel * p.kernel;
        row.params = g_in * g_out * k2 + g_out;
        row.flops = g_in * g_out * k2 * p.out_h * p.out_w;
        break;
      }
      case LayerKind::kGroupNorm:
        row.params = 2 * g_out;
        break;
      case LayerKind::kEmbedding:
        row.params = p.in_spec.total_width() * g_out;
        break;
      case LayerKind::kLstm:
        row.params = 4 * g_out * (g_in + g_out) + 4 * g_out;
        row.flops = 4 * g_out * (g_in + g_out) * p.steps;
        break;
      default:
        continue;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

CostReport cost_report(const ModelSpec& spec, double rate) {
  CostReport report;
  report.rate = rate;
  report.rows = cost_rows(spec, rate);
  const auto full = cost_rows(spec, 1.0);
  std::uint64_t full_params = 0, full_flops = 0, sliced = 0, sliced_full = 0;
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const CostRow& r = report.rows[i];
    report.total_params += r.params;
    report.total_flops += r.flops;
    full_params += full[i].params;
    full_flops += full[i].flops;
    if (r.sliced_in && r.sliced_out) {
      sliced += r.flops;
      sliced_full += full[i].flops;
    }
  }
  auto ratio = [](std::uint64_t a, std::uint64_t b) {
    return b == 0 ? 1.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  report.params_ratio = ratio(report.total_params, full_params);
  report.flops_ratio = ratio(report.total_flops, full_flops);
  report.sliced_flops_ratio = ratio(sliced, sliced_full);
  return report;
}

std::uint64_t count_params(const ModelSpec& spec, double rate) {
  std::uint64_t total = 0;
  for (const CostRow& r : cost_rows(spec, rate)) total += r.params;
  return total;
}

std::uint64_t count_flops(const ModelSpec& spec, double rate) {
  std::uint64_t total = 0;
  for (const CostRow& r : cost_rows(spec, rate)) total += r.flops;
  return total;
}

std::uint64_t count_flops(const ModelSpec& spec, double rate, const Shape& input_shape) {
  ModelSpec copy = spec;
  copy.input_shape = input_shape;
  return count_flops(copy, rate);
}

double max_rate_for_budget(double budget, double full_cost, const SliceRateList& rates) {
  if (!(budget > 0.0) || !(full_cost > 0.0)) {
    throw ConfigError("compute budget and full-network cost must be positive");
  }
  const double bound_sq = std::min(budget / full_cost, 1.0);
  // Relative slack absorbs the rounding of the cost ratio itself.
  const double limit = bound_sq * (1.0 + 1e-12);
  for (std::size_t i = rates.size(); i-- > 0;) {
    if (rates[i] * rates[i] <= limit) return rates[i];
  }
  throw BudgetInfeasibleError("budget ratio " + std::to_string(budget / full_cost) +
                              " is below the base network cost ratio " +
                              std::to_string(rates.lower_bound() * rates.lower_bound()));
}

ModelSpec vgg13_spec(std::size_t groups) {
  ModelSpec spec;
  spec.arch = "sequential";
  spec.input_shape = {3, 32, 32};
  spec.classes = 10;
  spec.groups = groups;
  auto block = [&](std::size_t channels, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      spec.layers.push_back("conv:" + std::to_string(channels) + ":3");
      spec.layers.push_back("gn");
      spec.layers.push_back("relu");
    }
  };
  block(64, 2);
  block(128, 2);
  spec.layers.push_back("maxpool:2");
  block(256, 2);
  spec.layers.push_back("maxpool:2");
  block(512, 4);
  spec.layers.push_back("gap");
  return spec;
}

}  // namespace slicenet
