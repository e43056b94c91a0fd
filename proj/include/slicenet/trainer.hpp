#pragma once

// Multi-subnet training: each iteration draws a list of slice rates, runs one
// forward/backward per scheduled subnet into shared gradient slots, then applies
// a single optimizer update with the summed gradient.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "slicenet/dataset.hpp"
#include "slicenet/model.hpp"
#include "slicenet/scheduler.hpp"

namespace slicenet {

/// Step decay: the rate is multiplied by `factor` at each milestone, expressed
/// as a fraction of the total epoch count.
struct LrSchedule {
  double initial = 0.1;
  std::vector<double> milestones{0.5, 0.75};
  double factor = 0.1;

  double at(std::size_t epoch, std::size_t total_epochs) const;

  bool operator==(const LrSchedule&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  LrSchedule lr;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;
  std::string scheme = "R-weighted-3";
  std::vector<double> slice_rates{0.25, 0.5, 0.75, 1.0};
  /// Per-rate loss multipliers aligned with `slice_rates`; empty means all 1.
  std::vector<double> rate_loss_weights;
  /// Divide each scheduled loss by |L_t| instead of summing raw gradients.
  bool average_over_schedule = false;
  /// Skip weight decay for gradient entries that are exactly zero this step.
  bool decay_touched_only = false;

  /// Throws ConfigError on non-positive learning rate, bad milestones, etc.
  void validate() const;
  double loss_weight(const SliceRateList& rates, double rate) const;

  bool operator==(const TrainConfig&) const = default;
};

/// Classical momentum SGD with L2 weight decay:
///   v <- momentum * v + (g + weight_decay * p);  p <- p - lr * v
void sgd_update(std::span<Parameter* const> params, std::vector<Tensor>& velocity, double lr,
                double momentum, double weight_decay, bool decay_touched_only = false);

class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Parameter*> params, double momentum, double weight_decay,
               bool decay_touched_only = false);

  void step(double lr);
  std::vector<Tensor>& velocity() noexcept { return velocity_; }
  const std::vector<Tensor>& velocity() const noexcept { return velocity_; }
  const std::vector<Parameter*>& parameters() const noexcept { return params_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> velocity_;
  double momentum_;
  double weight_decay_;
  bool decay_touched_only_;
};

struct RateLoss {
  double rate;
  double loss;
};

struct StepOptions {
  std::span<const double> loss_weights;  // aligned with the scheduled rates; empty means 1
  bool average_over_schedule = false;
  std::mt19937_64* rng = nullptr;        // dropout
};

/// Zeroes gradients, then adds one backward pass per scheduled rate. Throws
/// NumericError carrying the rate whose loss is non-finite.
std::vector<RateLoss> accumulate_gradients(Network& net, const Batch& batch,
                                           std::span<const double> schedule,
                                           const StepOptions& options = {});

/// accumulate_gradients followed by exactly one optimizer update.
std::vector<RateLoss> train_step(Network& net, const Batch& batch, std::span<const double> schedule,
                                 SgdOptimizer& optimizer, double lr,
                                 const StepOptions& options = {});

struct EvalMetrics {
  double rate = 1.0;
  double loss = 0.0;        // mean per-target negative log-likelihood
  double accuracy = 0.0;    // fraction of targets predicted correctly
  double perplexity = 0.0;  // exp(loss)
  std::size_t targets = 0;
};

/// Deterministic single pass of Subnet-r over the dataset.
EvalMetrics evaluate(Network& net, double rate, const Dataset& data, std::size_t batch_size = 256);

/// Arg-max class per logits row for every example of the dataset.
std::vector<std::size_t> predict(Network& net, double rate, const Dataset& data,
                                 std::size_t batch_size = 256);

struct EpochMetrics {
  std::size_t epoch;
  double rate;
  double loss;
  double accuracy;
  double perplexity;
  double wall_seconds;
};

/// Mutable training progress; everything needed to resume bit-exactly.
struct TrainState {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::mt19937_64 data_rng;
  std::mt19937_64 schedule_rng;
};

class Trainer {
 public:
  using MetricsSink = std::function<void(const EpochMetrics&)>;

  Trainer(Network& net, TrainConfig config);

  /// Trains until `config.epochs` epochs have completed (or `max_epochs` more,
  /// whichever comes first). After each epoch every rate of L is evaluated on
  /// `metrics_data` (defaults to the training set) and reported to `sink`.
  void run(const Dataset& train, const MetricsSink& sink = {}, const Dataset* metrics_data = nullptr,
           std::size_t max_epochs = SIZE_MAX);

  TrainState& state() noexcept { return state_; }
  const TrainState& state() const noexcept { return state_; }
  SgdOptimizer& optimizer() noexcept { return optimizer_; }
  const SgdOptimizer& optimizer() const noexcept { return optimizer_; }
  const SliceRateList& rates() const noexcept { return rates_; }
  const SchedulingScheme& scheme() const noexcept { return scheme_; }
  const TrainConfig& config() const noexcept { return config_; }

 private:
  Network& net_;
  TrainConfig config_;
  SliceRateList rates_;
  SchedulingScheme scheme_;
  SgdOptimizer optimizer_;
  TrainState state_;
};

}  // namespace slicenet
