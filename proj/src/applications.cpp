#include "slicenet/applications.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <utility>

#include "slicenet/error.hpp"

namespace slicenet {

namespace {

constexpr double kTolerance = 1e-9;

bool fits(double work, double budget) { return work <= budget * (1.0 + kTolerance); }

void append_window(std::vector<double>& out, double start, double window, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(start + window * (static_cast<double>(i) + 0.5) / static_cast<double>(count));
  }
}

}  // namespace

void QueryStream::validate() const {
  for (std::size_t i = 0; i < arrivals.size(); ++i) {
    const double a = arrivals[i];
    if (!std::isfinite(a) || a < 0.0) {
      throw DataError("arrival " + std::to_string(i) + " is not a finite nonnegative time");
    }
    if (i > 0 && a < arrivals[i - 1]) {
      throw DataError("arrival times decrease at entry " + std::to_string(i));
    }
  }
}

QueryStream constant_stream(std::size_t per_window, double window, std::size_t windows) {
  return burst_stream(per_window, window, windows, 1, 0, 0);
}

QueryStream burst_stream(std::size_t per_window, double window, std::size_t windows,
                         std::size_t burst_factor, std::size_t burst_start,
                         std::size_t burst_windows) {
  if (!(window > 0.0)) throw ConfigError("window length must be positive");
  if (burst_factor == 0) throw ConfigError("burst factor must be positive");
  QueryStream s;
  s.source = "burst";
  for (std::size_t k = 0; k < windows; ++k) {
    const bool burst = k >= burst_start && k < burst_start + burst_windows;
    append_window(s.arrivals, static_cast<double>(k) * window, window,
                  burst ? per_window * burst_factor : per_window);
  }
  return s;
}

QueryStream poisson_stream(double rate, double duration, std::uint64_t seed) {
  if (!(rate > 0.0) || !(duration > 0.0)) throw ConfigError("rate and duration must be positive");
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gap(rate);
  QueryStream s;
  s.source = "poisson";
  for (double t = gap(rng); t < duration; t += gap(rng)) s.arrivals.push_back(t);
  return s;
}

QueryStream read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read trace file " + path.string());
  QueryStream s;
  s.source = path.string();
  std::string line;
  std::size_t line_no = 0;
  bool header_allowed = true;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line.substr(first));
    double t = 0.0;
    const bool parsed = static_cast<bool>(fields >> t);
    const bool was_first = std::exchange(header_allowed, false);
    if (!parsed) {
      if (was_first) continue;  // header
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": not a timestamp");
    }
    s.arrivals.push_back(t);
  }
  s.validate();
  return s;
}

void write_trace(const std::filesystem::path& path, const QueryStream& stream) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace file " + path.string());
  out << std::setprecision(17);
  for (double t : stream.arrivals) out << t << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void LatencyPolicy::validate() const {
  if (!(latency > 0.0)) throw ConfigError("latency constraint T must be positive");
  if (!(sample_time > 0.0)) throw ConfigError("per-sample time t must be positive");
}

RateChoice choose_rate_for_batch(const LatencyPolicy& policy, std::size_t n) {
  policy.validate();
  RateChoice choice;
  if (n == 0) return choice;
  choice.dispatched = true;
  const double budget = policy.interval();
  const double count = static_cast<double>(n);
  const auto& rates = policy.rates.rates();
  for (auto it = rates.rbegin(); it != rates.rend(); ++it) {
    if (fits(count * *it * *it * policy.sample_time, budget)) {
      choice.rate = *it;
      choice.sub_batches = {n};
      return choice;
    }
  }
  const double r1 = rates.front();
  choice.rate = r1;
  choice.overloaded = true;
  const double per_query = r1 * r1 * policy.sample_time;
  auto capacity = static_cast<std::size_t>(std::floor(budget / per_query * (1.0 + kTolerance)));
  capacity = std::max<std::size_t>(capacity, 1);
  for (std::size_t left = n; left > 0;) {
    const std::size_t take = std::min(capacity, left);
    choice.sub_batches.push_back(take);
    left -= take;
  }
  return choice;
}

SimulationResult simulate_workload(const QueryStream& stream, const LatencyPolicy& policy) {
  policy.validate();
  stream.validate();
  SimulationResult result;
  const double interval = policy.interval();
  double busy_until = 0.0;
  double latency_sum = 0.0;
  std::size_t next = 0;
  while (next < stream.arrivals.size()) {
    // Window k collects arrivals in [k I, (k+1) I) and closes at (k+1) I.
    const auto k = static_cast<std::size_t>(std::floor(stream.arrivals[next] / interval));
    const double close = static_cast<double>(k + 1) * interval;
    std::size_t end = next;
    while (end < stream.arrivals.size() && stream.arrivals[end] < close) ++end;
    const RateChoice choice = choose_rate_for_batch(policy, end - next);
    if (choice.overloaded) ++result.summary.overloaded_windows;
    for (std::size_t part : choice.sub_batches) {
      BatchEvent e;
      e.batch_id = result.events.size();
      e.close_time = close;
      e.n = part;
      e.rate = choice.rate;
      e.proc_time = static_cast<double>(part) * choice.rate * choice.rate * policy.sample_time;
      e.start_time = std::max(close, busy_until);
      const double finish = e.start_time + e.proc_time;
      busy_until = finish;
      for (std::size_t q = next; q < next + part; ++q) {
        const double latency = finish - stream.arrivals[q];
        e.max_latency = std::max(e.max_latency, latency);
        latency_sum += latency;
        if (!fits(latency, policy.latency)) ++result.summary.violations;
      }
      result.summary.max_latency = std::max(result.summary.max_latency, e.max_latency);
      result.summary.busy_time += e.proc_time;
      next += part;
      result.events.push_back(e);
    }
  }
  result.summary.queries = stream.arrivals.size();
  result.summary.batches = result.events.size();
  if (result.summary.queries > 0) {
    result.summary.mean_latency = latency_sum / static_cast<double>(result.summary.queries);
  }
  return result;
}

std::vector<StageMetrics> cascade_evaluate(const std::vector<CascadeStage>& stages,
                                           const std::vector<std::size_t>& labels) {
  if (stages.empty()) throw ConfigError("cascade needs at least one stage");
  const std::size_t items = labels.size();
  if (items == 0) throw DataError("cascade evaluation set is empty");
  for (std::size_t k = 0; k < stages.size(); ++k) {
    if (stages[k].predictions.size() != items) {
      throw ConfigError("stage " + std::to_string(k + 1) + " produced " +
                        std::to_string(stages[k].predictions.size()) + " predictions for " +
                        std::to_string(items) + " items");
    }
    if (k > 0 && stages[k].rate < stages[k - 1].rate) {
      throw ConfigError("cascade stage rates must be nondecreasing");
    }
  }
  std::vector<bool> alive(items, true);
  std::vector<bool> correct_so_far(items, true);
  std::vector<StageMetrics> out;
  for (std::size_t k = 0; k < stages.size(); ++k) {
    const auto& pred = stages[k].predictions;
    StageMetrics m;
    m.stage = k + 1;
    m.rate = stages[k].rate;
    m.params = stages[k].params;
    m.flops = stages[k].flops;
    std::size_t kept_correct = 0, correct = 0, recall = 0;
    for (std::size_t i = 0; i < items; ++i) {
      const bool ok = pred[i] == labels[i];
      correct += ok;
      if (k > 0 && pred[i] != stages[k - 1].predictions[i]) alive[i] = false;
      correct_so_far[i] = correct_so_far[i] && ok;
      recall += correct_so_far[i];
      if (alive[i]) {
        ++m.survivors;
        kept_correct += ok;
      }
    }
    const double total = static_cast<double>(items);
    m.precision = m.survivors == 0 ? 0.0 : static_cast<double>(kept_correct) / static_cast<double>(m.survivors);
    m.accuracy = static_cast<double>(correct) / total;
    m.aggregate_recall = static_cast<double>(recall) / total;
    out.push_back(m);
  }
  return out;
}

std::set<std::size_t> error_set(const std::vector<std::size_t>& predictions,
                                const std::vector<std::size_t>& labels) {
  if (predictions.size() != labels.size()) {
    throw DimensionError("predictions and labels differ in length");
  }
  std::set<std::size_t> errors;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] != labels[i]) errors.insert(i);
  }
  return errors;
}

double inclusion_coefficient(const std::set<std::size_t>& errors_small,
                             const std::set<std::size_t>& errors_large) {
  if (errors_small.empty()) return 1.0;
  std::size_t shared = 0;
  for (std::size_t id : errors_small) shared += errors_large.count(id);
  return static_cast<double>(shared) / static_cast<double>(errors_small.size());
}

}  // namespace slicenet
