#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "slicenet/applications.hpp"
#include "slicenet/error.hpp"

namespace slicenet {
namespace {

namespace fs = std::filesystem;

LatencyPolicy policy() {
  LatencyPolicy p;
  p.latency = 2.0;
  p.sample_time = 0.01;
  return p;
}

TEST(ChooseRate, LargestFeasibleRate) {
  const auto p = policy();
  EXPECT_EQ(choose_rate_for_batch(p, 25).rate, 1.0);
  EXPECT_EQ(choose_rate_for_batch(p, 100).rate, 1.0);
  EXPECT_EQ(choose_rate_for_batch(p, 101).rate, 0.75);
  EXPECT_EQ(choose_rate_for_batch(p, 400).rate, 0.5);
  EXPECT_EQ(choose_rate_for_batch(p, 1600).rate, 0.25);
  EXPECT_FALSE(choose_rate_for_batch(p, 0).dispatched);
}

TEST(ChooseRate, OverloadSplitsAtLowestRate) {
  const auto c = choose_rate_for_batch(policy(), 2000);
  EXPECT_TRUE(c.overloaded);
  EXPECT_EQ(c.rate, 0.25);
  EXPECT_EQ(c.sub_batches, (std::vector<std::size_t>{1600, 400}));
}

TEST(Policy, Validation) {
  LatencyPolicy p = policy();
  p.latency = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = policy();
  p.sample_time = -1.0;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Streams, ConstantAndBurstCounts) {
  const auto c = constant_stream(10, 1.0, 3);
  EXPECT_EQ(c.size(), 30u);
  EXPECT_NEAR(c.arrivals.front(), 0.05, 1e-15);
  const auto b = burst_stream(10, 1.0, 5, 16, 2, 2);
  EXPECT_EQ(b.size(), 10u * 3 + 160u * 2);
  EXPECT_NO_THROW(b.validate());
}

TEST(Streams, PoissonDeterministicAndOrdered) {
  const auto a = poisson_stream(50.0, 20.0, 3), b = poisson_stream(50.0, 20.0, 3);
  EXPECT_EQ(a.arrivals, b.arrivals);
  EXPECT_NO_THROW(a.validate());
  EXPECT_NEAR(static_cast<double>(a.size()), 1000.0, 150.0);
  EXPECT_NE(a.arrivals, poisson_stream(50.0, 20.0, 4).arrivals);
}

TEST(Simulate, ConstantLoadRunsFullModel) {
  const auto r = simulate_workload(constant_stream(100, 1.0, 6), policy());
  EXPECT_EQ(r.summary.queries, 600u);
  EXPECT_EQ(r.summary.batches, 6u);
  EXPECT_EQ(r.summary.violations, 0u);
  EXPECT_LE(r.summary.max_latency, 2.0);
  for (const auto& e : r.events) {
    EXPECT_EQ(e.rate, 1.0);
    EXPECT_LE(e.proc_time, 1.0 + 1e-9);
  }
}

TEST(Simulate, BurstDropsRateByFactorFour) {
  const auto r = simulate_workload(burst_stream(100, 1.0, 10, 16, 4, 2), policy());
  ASSERT_EQ(r.events.size(), 10u);
  for (const auto& e : r.events) {
    const bool burst = e.batch_id == 4 || e.batch_id == 5;
    EXPECT_EQ(e.rate, burst ? 0.25 : 1.0) << e.batch_id;
    EXPECT_LE(e.n * e.rate * e.rate * 0.01, 1.0 + 1e-9);
  }
  EXPECT_EQ(r.summary.violations, 0u);
  EXPECT_EQ(r.summary.overloaded_windows, 0u);
}

TEST(Simulate, OverloadProducesViolations) {
  const auto r = simulate_workload(constant_stream(3200, 1.0, 5), policy());
  EXPECT_EQ(r.summary.overloaded_windows, 5u);
  EXPECT_GT(r.summary.violations, 0u);
  EXPECT_GT(r.summary.max_latency, 2.0);
}

TEST(Simulate, EmptyStream) {
  const auto r = simulate_workload(QueryStream{}, policy());
  EXPECT_EQ(r.summary.batches, 0u);
  EXPECT_EQ(r.summary.violations, 0u);
}

TEST(Simulate, LatencyIsFinishMinusArrival) {
  // Two queries in the first window, closed at 1.0, processed for 2 * 0.01 s.
  QueryStream s{{0.25, 0.75}, "hand"};
  const auto r = simulate_workload(s, policy());
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_NEAR(r.events[0].close_time, 1.0, 1e-15);
  EXPECT_NEAR(r.events[0].max_latency, 1.02 - 0.25, 1e-12);
  EXPECT_NEAR(r.summary.mean_latency, ((1.02 - 0.25) + (1.02 - 0.75)) / 2.0, 1e-12);
}

class TraceFiles : public ::testing::Test {
 protected:
  fs::path dir = fs::temp_directory_path() / ("slicenet_trace_" + std::to_string(::getpid()));
  void SetUp() override { fs::create_directories(dir); }
  void TearDown() override { fs::remove_all(dir); }
  fs::path write(const std::string& name, const std::string& body) {
    std::ofstream(dir / name) << body;
    return dir / name;
  }
};

TEST_F(TraceFiles, RoundTripIsExact) {
  const auto s = poisson_stream(10.0, 3.0, 1);
  write_trace(dir / "t.csv", s);
  EXPECT_EQ(read_trace(dir / "t.csv").arrivals, s.arrivals);
}

TEST_F(TraceFiles, CommentsHeaderAndErrors) {
  EXPECT_EQ(read_trace(write("ok.csv", "# c\narrival\n0.5\n\n1.5\n")).arrivals,
            (std::vector<double>{0.5, 1.5}));
  EXPECT_THROW(read_trace(write("bad.csv", "0.5\nabc\n")), DataError);
  EXPECT_THROW(read_trace(write("dec.csv", "1.0\n0.5\n")), DataError);
  EXPECT_THROW(read_trace(write("neg.csv", "-1.0\n")), DataError);
  EXPECT_THROW(read_trace(dir / "missing.csv"), IoError);
}

TEST(Cascade, HandExample) {
  const std::vector<std::size_t> labels{0, 0, 0, 0};
  const std::vector<CascadeStage> stages{{0.5, 10, 100, {0, 0, 1, 1}}, {1.0, 40, 400, {0, 1, 1, 0}}};
  const auto m = cascade_evaluate(stages, labels);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].survivors, 4u);
  EXPECT_DOUBLE_EQ(m[0].precision, 0.5);
  EXPECT_DOUBLE_EQ(m[0].aggregate_recall, 0.5);
  EXPECT_EQ(m[1].survivors, 2u);
  EXPECT_DOUBLE_EQ(m[1].precision, 0.5);
  EXPECT_DOUBLE_EQ(m[1].accuracy, 0.5);
  EXPECT_DOUBLE_EQ(m[1].aggregate_recall, 0.25);
  EXPECT_EQ(m[1].flops, 400u);
}

TEST(Cascade, AggregateRecallNonIncreasingOnRandomRuns) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> cls(0, 2);
  for (int run = 0; run < 50; ++run) {
    std::vector<std::size_t> labels(40);
    for (auto& l : labels) l = cls(rng);
    std::vector<CascadeStage> stages;
    for (double r : {0.25, 0.5, 0.75, 1.0}) {
      CascadeStage s{r, 0, 0, labels};
      for (auto& p : s.predictions)
        if (cls(rng) == 0) p = cls(rng);
      stages.push_back(s);
    }
    const auto m = cascade_evaluate(stages, labels);
    for (std::size_t k = 1; k < m.size(); ++k) {
      EXPECT_LE(m[k].aggregate_recall, m[k - 1].aggregate_recall);
      EXPECT_LE(m[k].survivors, m[k - 1].survivors);
    }
  }
}

TEST(Cascade, Errors) {
  const std::vector<std::size_t> labels{0, 1};
  EXPECT_THROW(cascade_evaluate({{1.0, 0, 0, {0}}}, labels), ConfigError);
  EXPECT_THROW(cascade_evaluate({{1.0, 0, 0, {0, 1}}, {0.5, 0, 0, {0, 1}}}, labels), ConfigError);
}

TEST(Inclusion, Properties) {
  const std::set<std::size_t> a{1, 2, 3}, b{4, 5};
  EXPECT_EQ(inclusion_coefficient(a, a), 1.0);
  EXPECT_EQ(inclusion_coefficient(a, b), 0.0);
  EXPECT_EQ(inclusion_coefficient({}, b), 1.0);
  EXPECT_EQ(inclusion_coefficient({1, 2, 3, 4}, {2, 3}), 0.5);
  EXPECT_EQ(error_set({0, 1, 2, 2}, {0, 2, 2, 1}), (std::set<std::size_t>{1, 3}));
}

}  // namespace
}  // namespace slicenet
