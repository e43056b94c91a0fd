#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "slicenet/data.hpp"
#include "slicenet/error.hpp"
#include "slicenet/trainer.hpp"
#include "test_support.hpp"

namespace slicenet {
namespace {

ModelSpec small_spec() {
  ModelSpec s;
  s.input_shape = {2};
  s.layers = {"dense:8", "tanh", "dense:8", "tanh"};
  s.classes = 2;
  s.groups = 4;
  return s;
}

std::vector<Tensor> snapshot_grads(Network& net) {
  std::vector<Tensor> out;
  for (Parameter* p : net.parameters()) out.push_back(p->grad);
  return out;
}

std::vector<Tensor> snapshot_values(Network& net) {
  std::vector<Tensor> out;
  for (Parameter* p : net.parameters()) out.push_back(p->value);
  return out;
}

TEST(Sgd, MatchesHandComputedMomentumWithDecay) {
  Parameter p("p", Tensor::vector({1.0}));
  std::vector<Parameter*> params{&p};
  std::vector<Tensor> velocity;
  p.grad = Tensor::vector({0.5});
  sgd_update(params, velocity, 0.1, 0.9, 0.1);
  EXPECT_NEAR(velocity[0][0], 0.6, 1e-15);
  EXPECT_NEAR(p.value[0], 0.94, 1e-15);
  sgd_update(params, velocity, 0.1, 0.9, 0.1);
  // v = 0.9 * 0.6 + (0.5 + 0.1 * 0.94) = 1.134
  EXPECT_NEAR(velocity[0][0], 1.134, 1e-15);
  EXPECT_NEAR(p.value[0], 0.94 - 0.1134, 1e-15);
}

TEST(Sgd, DecayTouchedOnlySkipsZeroGradients) {
  Parameter p("p", Tensor::vector({1.0, 1.0}));
  std::vector<Parameter*> params{&p};
  std::vector<Tensor> velocity;
  p.grad = Tensor::vector({0.5, 0.0});
  sgd_update(params, velocity, 0.1, 0.9, 0.1, true);
  EXPECT_EQ(p.value[1], 1.0);
  EXPECT_LT(p.value[0], 1.0);
}

TEST(LrSchedule, StepDecayAtMilestones) {
  const LrSchedule s{0.1, {0.5, 0.75}, 0.1};
  EXPECT_DOUBLE_EQ(s.at(0, 8), 0.1);
  EXPECT_DOUBLE_EQ(s.at(3, 8), 0.1);
  EXPECT_NEAR(s.at(4, 8), 0.01, 1e-15);
  EXPECT_NEAR(s.at(6, 8), 0.001, 1e-16);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  auto expect_bad = [](auto mutate) {
    TrainConfig bad;
    mutate(bad);
    EXPECT_THROW(bad.validate(), ConfigError);
  };
  expect_bad([](TrainConfig& t) { t.epochs = 0; });
  expect_bad([](TrainConfig& t) { t.lr.initial = 0.0; });
  expect_bad([](TrainConfig& t) { t.lr.milestones = {0.75, 0.5}; });
  expect_bad([](TrainConfig& t) { t.momentum = 1.0; });
  expect_bad([](TrainConfig& t) { t.scheme = "nope"; });
  expect_bad([](TrainConfig& t) { t.slice_rates = {0.5}; });
  expect_bad([](TrainConfig& t) { t.rate_loss_weights = {1.0}; });
}

TEST(TrainConfig, RatesMustBeGroupBoundaries) {
  auto net = make_network(small_spec(), 1);
  TrainConfig c;
  c.slice_rates = {0.3, 1.0};
  EXPECT_THROW(Trainer(*net, c), ConfigError);
}

// The gradient of a multi-rate step is the sum of the per-rate gradients.
TEST(Accumulate, GradientIsSumOverSchedule) {
  auto net = make_network(small_spec(), 3);
  const auto data = make_spirals(16, 1);
  const std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7};
  const Batch batch = data.batch(idx);
  const std::vector<double> both{1.0, 0.5}, full{1.0}, half{0.5};
  accumulate_gradients(*net, batch, full);
  const auto g_full = snapshot_grads(*net);
  accumulate_gradients(*net, batch, half);
  const auto g_half = snapshot_grads(*net);
  accumulate_gradients(*net, batch, both);
  const auto g_both = snapshot_grads(*net);
  for (std::size_t k = 0; k < g_both.size(); ++k)
    for (std::size_t i = 0; i < g_both[k].size(); ++i)
      EXPECT_NEAR(g_both[k][i], g_full[k][i] + g_half[k][i], 1e-14);

  StepOptions avg;
  avg.average_over_schedule = true;
  accumulate_gradients(*net, batch, both, avg);
  const auto g_avg = snapshot_grads(*net);
  for (std::size_t k = 0; k < g_avg.size(); ++k)
    for (std::size_t i = 0; i < g_avg[k].size(); ++i)
      EXPECT_NEAR(g_avg[k][i], 0.5 * g_both[k][i], 1e-14);
}

TEST(Accumulate, SmallSubnetLeavesOuterGradientsAtZero) {
  auto net = make_network(small_spec(), 3);
  const auto data = make_spirals(8, 1);
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  const std::vector<double> quarter{0.25};
  accumulate_gradients(*net, data.batch(idx), quarter);
  auto& seq = dynamic_cast<SequentialNetwork&>(*net);
  const auto& hidden = std::get<SlicedDense>(seq.layers()[2]);
  // 8x8 hidden layer at rate 0.25 touches only the leading 2x2 block.
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c)
      if (r >= 2 || c >= 2) EXPECT_EQ(hidden.weight.grad[r * 8 + c], 0.0);
}

TEST(Accumulate, NonFiniteLossReportsRate) {
  auto net = make_network(small_spec(), 3);
  auto& seq = dynamic_cast<SequentialNetwork&>(*net);
  auto& out = std::get<SlicedDense>(seq.layers().back());
  // Last input column of the classifier is read only by the full network.
  for (std::size_t r = 0; r < 2; ++r) out.weight.value[r * 8 + 7] = std::numeric_limits<double>::quiet_NaN();
  const auto data = make_spirals(8, 1);
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  const std::vector<double> half{0.5}, mixed{0.5, 1.0};
  EXPECT_NO_THROW(accumulate_gradients(*net, data.batch(idx), half));
  try {
    accumulate_gradients(*net, data.batch(idx), mixed);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.rate(), 1.0);
  }
  EXPECT_THROW(accumulate_gradients(*net, data.batch(idx), std::vector<double>{}), UsageError);
}

// With L = {1.0} the trainer must reduce to plain minibatch SGD on the full
// network: same shuffles, same updates, bit for bit.
TEST(Trainer, SingleRateEqualsConventionalLoop) {
  const auto data = make_spirals(96, 4);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.lr = LrSchedule{0.05, {0.5}, 0.1};
  cfg.weight_decay = 1e-4;
  cfg.seed = 21;
  cfg.slice_rates = {1.0};
  for (const std::string scheme : {"Static", "R-uniform-1", "R-weighted-2", "R-min-max"}) {
    cfg.scheme = scheme;
    auto sliced = make_network(small_spec(), 8);
    Trainer trainer(*sliced, cfg);
    trainer.run(data);

    auto plain = make_network(small_spec(), 8);
    const auto params = plain->parameters();
    std::vector<Tensor> velocity;
    std::seed_seq seed{cfg.seed, std::uint64_t{0x5eed0001}};
    std::mt19937_64 rng(seed);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      const double lr = cfg.lr.at(epoch, cfg.epochs);
      for (const auto& idx : make_batches(shuffled_indices(data.size(), rng), cfg.batch_size)) {
        const Batch batch = data.batch(idx);
        plain->zero_grad();
        Tape tape;
        tape.backward(ops::softmax_cross_entropy(plain->forward(tape, batch, 1.0, {true, &rng}),
                                                 batch.labels));
        sgd_update(params, velocity, lr, cfg.momentum, cfg.weight_decay);
      }
    }
    const auto a = snapshot_values(*sliced), b = snapshot_values(*plain);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], b[k]) << scheme;
  }
}

TEST(Trainer, ReportsEveryRateEveryEpochAndLearns) {
  const auto data = make_spirals(200, 2);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.lr = LrSchedule{0.05, {}, 0.1};
  cfg.scheme = "Static";
  auto net = make_network(small_spec(), 2);
  const double before = evaluate(*net, 1.0, data).loss;
  Trainer trainer(*net, cfg);
  std::vector<EpochMetrics> seen;
  trainer.run(data, [&](const EpochMetrics& m) { seen.push_back(m); });
  ASSERT_EQ(seen.size(), 16u);
  EXPECT_EQ(seen.back().epoch, 4u);
  EXPECT_EQ(seen.back().rate, 1.0);
  EXPECT_LT(evaluate(*net, 1.0, data).loss, before);
  EXPECT_EQ(trainer.state().step, 4u * 7u);
}

TEST(Trainer, MaxEpochsSplitsRunWithoutChangingResult) {
  const auto data = make_spirals(64, 2);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 16;
  auto a = make_network(small_spec(), 5), b = make_network(small_spec(), 5);
  Trainer ta(*a, cfg), tb(*b, cfg);
  ta.run(data);
  tb.run(data, {}, nullptr, 1);
  EXPECT_EQ(tb.state().epoch, 1u);
  tb.run(data, {}, nullptr, 10);
  EXPECT_EQ(tb.state().epoch, 4u);
  const auto va = snapshot_values(*a), vb = snapshot_values(*b);
  for (std::size_t k = 0; k < va.size(); ++k) EXPECT_EQ(va[k], vb[k]);
}

TEST(Evaluate, PredictMatchesAccuracy) {
  const auto data = make_spirals(50, 3);
  auto net = make_network(small_spec(), 1);
  const auto m = evaluate(*net, 0.5, data, 7);
  const auto pred = predict(*net, 0.5, data, 7);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels()[i];
  EXPECT_EQ(m.targets, 50u);
  EXPECT_DOUBLE_EQ(m.accuracy, correct / 50.0);
  EXPECT_NEAR(m.perplexity, std::exp(m.loss), 1e-12);
}

}  // namespace
}  // namespace slicenet
