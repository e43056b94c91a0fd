#pragma once

// System harnesses built on sliced models: a latency-bounded serving simulator
// and a cascade-ranking evaluator.

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "slicenet/scheduler.hpp"

namespace slicenet {

/// Query arrival times in seconds, nondecreasing.
struct QueryStream {
  std::vector<double> arrivals;
  std::string source;

  std::size_t size() const noexcept { return arrivals.size(); }
  /// Throws DataError on negative, non-finite or decreasing timestamps.
  void validate() const;
};

/// `per_window` evenly spaced arrivals in each window of length `window`.
QueryStream constant_stream(std::size_t per_window, double window, std::size_t windows);

/// Like constant_stream, but windows [burst_start, burst_start + burst_windows)
/// receive `per_window * burst_factor` arrivals.
QueryStream burst_stream(std::size_t per_window, double window, std::size_t windows,
                         std::size_t burst_factor, std::size_t burst_start,
                         std::size_t burst_windows);

/// Poisson arrivals at `rate` per second over [0, duration).
QueryStream poisson_stream(double rate, double duration, std::uint64_t seed);

/// One timestamp per line; blank lines, '#' comments and a non-numeric header are skipped.
QueryStream read_trace(const std::filesystem::path& path);
void write_trace(const std::filesystem::path& path, const QueryStream& stream);

struct LatencyPolicy {
  double latency = 1.0;      // T, seconds
  double sample_time = 0.0;  // t, full-model seconds per query
  SliceRateList rates = SliceRateList({0.25, 0.5, 0.75, 1.0});

  double interval() const noexcept { return latency / 2.0; }
  void validate() const;
};

struct RateChoice {
  bool dispatched = false;  // false for an empty batch
  double rate = 0.0;
  /// Sizes of the serial sub-batches; a single entry unless overloaded.
  std::vector<std::size_t> sub_batches;
  bool overloaded = false;  // even the lowest rate exceeds the interval
};

/// Largest r in L with n r^2 t <= T/2. When even r_1 is infeasible the batch is
/// split into the largest sub-batches feasible at r_1.
RateChoice choose_rate_for_batch(const LatencyPolicy& policy, std::size_t n);

struct BatchEvent {
  std::size_t batch_id = 0;
  double close_time = 0.0;
  std::size_t n = 0;
  double rate = 0.0;
  double proc_time = 0.0;
  double start_time = 0.0;
  double max_latency = 0.0;
};

struct SimulationSummary {
  std::size_t queries = 0;
  std::size_t batches = 0;
  double max_latency = 0.0;
  double mean_latency = 0.0;
  std::size_t violations = 0;  // queries whose latency exceeds T
  std::size_t overloaded_windows = 0;
  double busy_time = 0.0;
};

struct SimulationResult {
  std::vector<BatchEvent> events;
  SimulationSummary summary;
};

/// Batches close every T/2; processing takes n r^2 t and batches run one at a
/// time. A query's latency runs from its arrival to the end of its batch.
SimulationResult simulate_workload(const QueryStream& stream, const LatencyPolicy& policy);

/// Predictions of one stage over every evaluation item.
struct CascadeStage {
  double rate = 1.0;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  std::vector<std::size_t> predictions;
};

struct StageMetrics {
  std::size_t stage = 0;  // 1-based
  double rate = 1.0;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  double precision = 0.0;         // correct fraction among items kept by this stage
  double accuracy = 0.0;          // correct fraction over all items
  double aggregate_recall = 0.0;  // correct at every stage so far, over all items
  std::size_t survivors = 0;      // items kept by this stage
};

/// An item stays in the cascade while each stage predicts the same class as the
/// stage before it. Throws ConfigError on misaligned predictions or decreasing rates.
std::vector<StageMetrics> cascade_evaluate(const std::vector<CascadeStage>& stages,
                                           const std::vector<std::size_t>& labels);

std::set<std::size_t> error_set(const std::vector<std::size_t>& predictions,
                                const std::vector<std::size_t>& labels);

/// |small ∩ large| / |small|, or 1 when `errors_small` is empty.
double inclusion_coefficient(const std::set<std::size_t>& errors_small,
                             const std::set<std::size_t>& errors_large);

}  // namespace slicenet
