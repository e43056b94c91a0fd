#include "slicenet/trainer.hpp"

#include <chrono>
#include <cmath>

#include "slicenet/error.hpp"

namespace slicenet {

double LrSchedule::at(std::size_t epoch, std::size_t total_epochs) const {
  double lr = initial;
  for (double m : milestones) {
    if (static_cast<double>(epoch) >= m * static_cast<double>(total_epochs)) lr *= factor;
  }
  return lr;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(lr.initial > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(lr.factor > 0.0)) throw ConfigError("learning-rate decay factor must be positive");
  for (std::size_t i = 0; i < lr.milestones.size(); ++i) {
    const double m = lr.milestones[i];
    if (!(m > 0.0 && m < 1.0)) throw ConfigError("learning-rate milestones must lie in (0, 1)");
    if (i > 0 && !(m > lr.milestones[i - 1])) {
      throw ConfigError("learning-rate milestones must be strictly increasing");
    }
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be nonnegative");
  const SliceRateList rates(slice_rates);
  if (!rate_loss_weights.empty() && rate_loss_weights.size() != rates.size()) {
    throw ConfigError("rate loss weights must align with the slice rate list");
  }
  preset(scheme, rates);
}

double TrainConfig::loss_weight(const SliceRateList& rates, double rate) const {
  if (rate_loss_weights.empty()) return 1.0;
  return rate_loss_weights.at(rates.index_of(rate));
}

void sgd_update(std::span<Parameter* const> params, std::vector<Tensor>& velocity, double lr,
                double momentum, double weight_decay, bool decay_touched_only) {
  if (velocity.size() != params.size()) {
    velocity.clear();
    for (const Parameter* p : params) velocity.emplace_back(p->value.shape());
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    if (p.grad.shape() != p.value.shape() || velocity[k].shape() != p.value.shape()) {
      throw DimensionError("sgd_update: shape mismatch for " + p.name);
    }
    auto value = p.value.data();
    auto grad = p.grad.data();
    auto vel = velocity[k].data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      double g = grad[i];
      if (weight_decay != 0.0 && !(decay_touched_only && g == 0.0)) g += weight_decay * value[i];
      vel[i] = momentum * vel[i] + g;
      value[i] -= lr * vel[i];
    }
  }
}

SgdOptimizer::SgdOptimizer(std::vector<Parameter*> params, double momentum, double weight_decay,
                           bool decay_touched_only)
    : params_(std::move(params)),
      momentum_(momentum),
      weight_decay_(weight_decay),
      decay_touched_only_(decay_touched_only) {
  for (const Parameter* p : params_) velocity_.emplace_back(p->value.shape());
}

void SgdOptimizer::step(double lr) {
  sgd_update(params_, velocity_, lr, momentum_, weight_decay_, decay_touched_only_);
}

std::vector<RateLoss> accumulate_gradients(Network& net, const Batch& batch,
                                           std::span<const double> schedule,
                                           const StepOptions& options) {
  if (schedule.empty()) throw UsageError("slice rate schedule is empty");
  if (!options.loss_weights.empty() && options.loss_weights.size() != schedule.size()) {
    throw UsageError("loss weights must align with the schedule");
  }
  for (double r : schedule) validate_rate(r);
  net.zero_grad();
  std::vector<RateLoss> losses;
  const ForwardOptions fwd{true, options.rng};
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const double r = schedule[i];
    Tape tape;
    Var logits = net.forward(tape, batch, r, fwd);
    Var loss = ops::softmax_cross_entropy(logits, batch.labels);
    const double raw = loss.value()[0];
    if (!std::isfinite(raw)) {
      throw NumericError("non-finite loss at slice rate " + std::to_string(r), r);
    }
    double weight = options.loss_weights.empty() ? 1.0 : options.loss_weights[i];
    if (options.average_over_schedule) weight /= static_cast<double>(schedule.size());
    if (weight != 1.0) loss = ops::scale(loss, weight);
    tape.backward(loss);
    losses.push_back({r, raw});
  }
  return losses;
}

std::vector<RateLoss> train_step(Network& net, const Batch& batch, std::span<const double> schedule,
                                 SgdOptimizer& optimizer, double lr, const StepOptions& options) {
  auto losses = accumulate_gradients(net, batch, schedule, options);
  optimizer.step(lr);
  return losses;
}

namespace {

template <typename F>
void for_each_eval_batch(const Dataset& data, std::size_t batch_size, F&& f) {
  if (data.size() == 0) throw DataError("cannot evaluate on an empty dataset");
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    f(data.batch(idx));
  }
}

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t c = logits.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j) {
    if (logits[row * c + j] > logits[row * c + best]) best = j;
  }
  return best;
}

}  // namespace

EvalMetrics evaluate(Network& net, double rate, const Dataset& data, std::size_t batch_size) {
  validate_rate(rate);
  EvalMetrics m;
  m.rate = rate;
  double nll = 0.0;
  std::size_t correct = 0;
  for_each_eval_batch(data, batch_size, [&](const Batch& batch) {
    Tape tape;
    Var logits = net.forward(tape, batch, rate);
    Var loss = ops::softmax_cross_entropy(logits, batch.labels);
    const std::size_t rows = batch.labels.size();
    nll += loss.value()[0] * static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) correct += argmax_row(logits.value(), r) == batch.labels[r];
    m.targets += rows;
  });
  m.loss = nll / static_cast<double>(m.targets);
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.targets);
  m.perplexity = std::exp(m.loss);
  return m;
}

std::vector<std::size_t> predict(Network& net, double rate, const Dataset& data,
                                 std::size_t batch_size) {
  std::vector<std::size_t> out;
  for_each_eval_batch(data, batch_size, [&](const Batch& batch) {
    Tape tape;
    Var logits = net.forward(tape, batch, rate);
    for (std::size_t r = 0; r < logits.value().dim(0); ++r) out.push_back(argmax_row(logits.value(), r));
  });
  return out;
}

Trainer::Trainer(Network& net, TrainConfig config)
    : net_(net),
      config_(std::move(config)),
      rates_((config_.validate(), config_.slice_rates)),
      scheme_(preset(config_.scheme, rates_)),
      optimizer_(net.parameters(), config_.momentum, config_.weight_decay,
                 config_.decay_touched_only) {
  rates_.require_boundaries(GroupSpec(net.spec().groups, net.spec().groups));
  std::seed_seq data_seed{config_.seed, std::uint64_t{0x5eed0001}};
  std::seed_seq schedule_seed{config_.seed, std::uint64_t{0x5eed0002}};
  state_.data_rng.seed(data_seed);
  state_.schedule_rng.seed(schedule_seed);
}

void Trainer::run(const Dataset& train, const MetricsSink& sink, const Dataset* metrics_data,
                  std::size_t max_epochs) {
  const Dataset& eval_data = metrics_data ? *metrics_data : train;
  std::size_t ran = 0;
  while (state_.epoch < config_.epochs && ran < max_epochs) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = config_.lr.at(state_.epoch, config_.epochs);
    const auto order = shuffled_indices(train.size(), state_.data_rng);
    for (const auto& idx : make_batches(order, config_.batch_size)) {
      const Batch batch = train.batch(idx);
      const auto schedule = next_slice_rate_batch(scheme_, rates_, state_.schedule_rng);
      std::vector<double> weights;
      for (double r : schedule) weights.push_back(config_.loss_weight(rates_, r));
      StepOptions opts;
      opts.loss_weights = weights;
      opts.average_over_schedule = config_.average_over_schedule;
      opts.rng = &state_.data_rng;
      train_step(net_, batch, schedule, optimizer_, lr, opts);
      ++state_.step;
    }
    ++state_.epoch;
    ++ran;
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (sink) {
      for (double r : rates_.rates()) {
        const EvalMetrics m = evaluate(net_, r, eval_data);
        sink(EpochMetrics{state_.epoch, r, m.loss, m.accuracy, m.perplexity, seconds});
      }
    }
  }
}

}  // namespace slicenet
