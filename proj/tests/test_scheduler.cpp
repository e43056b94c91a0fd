#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>

#include "slicenet/error.hpp"
#include "slicenet/scheduler.hpp"

namespace slicenet {
namespace {

const SliceRateList kFour({0.25, 0.5, 0.75, 1.0});

TEST(SliceRateList, SortsAndValidates) {
  EXPECT_EQ(SliceRateList({0.5, 0.25, 1.0}).rates(), (std::vector<double>{0.25, 0.5, 1.0}));
  EXPECT_THROW(SliceRateList({0.5, 0.5, 1.0}), ConfigError);
  EXPECT_THROW(SliceRateList({0.25, 0.5}), ConfigError);
  EXPECT_THROW(SliceRateList({}), ConfigError);
  EXPECT_EQ(kFour.index_of(0.75), 2u);
  EXPECT_TRUE(kFour.contains(0.5));
  EXPECT_FALSE(kFour.contains(0.6));
}

TEST(SliceRateList, FromGroupsRespectsLowerBound) {
  const auto l = SliceRateList::from_groups(GroupSpec(16, 8), 0.375);
  EXPECT_EQ(l.rates(), (std::vector<double>{0.375, 0.5, 0.625, 0.75, 0.875, 1.0}));
  EXPECT_NO_THROW(l.require_boundaries(GroupSpec(16, 8)));
  EXPECT_THROW(l.require_boundaries(GroupSpec(16, 4)), ConfigError);
}

TEST(Distribution, UniformCdfAtMidpoints) {
  const auto p = probabilities_from_distribution([](double r) { return r; }, kFour);
  const std::vector<double> expected{0.375, 0.25, 0.25, 0.125};
  ASSERT_EQ(p.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p[i], expected[i], 1e-15);
}

TEST(Distribution, DecreasingCdfRejected) {
  EXPECT_THROW(probabilities_from_distribution([](double r) { return 1.0 - r; }, kFour), ConfigError);
}

TEST(Importance, WeightedListsSumToOne) {
  EXPECT_EQ(weighted_importance(4), (std::vector<double>{0.25, 0.125, 0.125, 0.5}));
  for (std::size_t g = 1; g <= 9; ++g) {
    const auto w = weighted_importance(g);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12) << g;
    EXPECT_EQ(std::max_element(w.begin(), w.end()) - w.begin(), static_cast<long>(g - 1));
  }
}

class PresetProperty : public ::testing::TestWithParam<std::string> {};

// Every iteration's L_t is a non-empty, strictly descending subset of L with the
// preset's nominal size.
TEST_P(PresetProperty, BatchesAreDescendingSubsetsOfL) {
  for (const auto& rates : {kFour, SliceRateList({0.5, 1.0}), SliceRateList({1.0}),
                            SliceRateList::from_groups(GroupSpec(16, 8), 0.125)}) {
    const auto scheme = preset(GetParam(), rates);
    std::mt19937_64 rng(42);
    for (int it = 0; it < 300; ++it) {
      const auto lt = next_slice_rate_batch(scheme, rates, rng);
      ASSERT_FALSE(lt.empty());
      EXPECT_EQ(lt.size(), scheme.nominal_size(rates));
      EXPECT_TRUE(std::is_sorted(lt.begin(), lt.end(), std::greater<>()));
      EXPECT_EQ(std::adjacent_find(lt.begin(), lt.end()), lt.end());
      for (double r : lt) EXPECT_TRUE(rates.contains(r));
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Presets, PresetProperty,
                         ::testing::Values("Static", "R-uniform-1", "R-uniform-2", "R-uniform-3",
                                           "R-weighted-1", "R-weighted-3", "R-min", "R-max",
                                           "R-min-max"),
                         [](const auto& info) {
                           std::string s = info.param;
                           std::replace(s.begin(), s.end(), '-', '_');
                           return s;
                         });

TEST(Presets, FixedMembers) {
  std::mt19937_64 rng(3);
  for (int it = 0; it < 100; ++it) {
    const auto mn = next_slice_rate_batch(preset("R-min", kFour), kFour, rng);
    const auto mx = next_slice_rate_batch(preset("R-max", kFour), kFour, rng);
    const auto both = next_slice_rate_batch(preset("R-min-max", kFour), kFour, rng);
    EXPECT_EQ(mn.back(), 0.25);
    EXPECT_EQ(mx.front(), 1.0);
    EXPECT_EQ(both.front(), 1.0);
    EXPECT_EQ(both.back(), 0.25);
    EXPECT_EQ(both.size(), 3u);
  }
  EXPECT_EQ(next_slice_rate_batch(preset("Static", kFour), kFour, rng),
            (std::vector<double>{1.0, 0.75, 0.5, 0.25}));
}

TEST(Presets, SizesAndErrors) {
  EXPECT_EQ(preset("R-uniform-2", kFour).nominal_size(kFour), 2u);
  EXPECT_EQ(preset("R-weighted-9", kFour).nominal_size(kFour), 4u);
  EXPECT_EQ(preset("r-min-max", kFour).nominal_size(kFour), 3u);
  EXPECT_THROW(preset("R-fancy", kFour), ConfigError);
  EXPECT_THROW(preset("R-uniform-0", kFour), ConfigError);
  EXPECT_THROW(preset("R-uniform-x", kFour), ConfigError);
}

TEST(Scheme, ValidatesProbabilities) {
  EXPECT_THROW(SchedulingScheme("bad", RandomScheduling{{0.5, 0.5, 0.5, 0.5}, 1}, kFour), ConfigError);
  EXPECT_THROW(SchedulingScheme("bad", RandomScheduling{{0.5, 0.5}, 1}, kFour), ConfigError);
  EXPECT_THROW(SchedulingScheme("bad", RandomStaticScheduling{{}, {0.25, 0.25, 0.25, 0.25}, 1}, kFour),
               ConfigError);
  EXPECT_THROW(SchedulingScheme("bad", RandomStaticScheduling{{7}, {0.5, 0.25, 0.25}, 1}, kFour),
               ConfigError);
}

TEST(Sampling, SingleDrawFrequenciesMatchWeights) {
  const auto scheme = preset("R-weighted-1", kFour);
  std::mt19937_64 rng(11);
  std::map<double, int> counts;
  const int n = 40000;
  for (int it = 0; it < n; ++it) ++counts[next_slice_rate_batch(scheme, kFour, rng).front()];
  const auto w = weighted_importance(4);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(counts[kFour[i]] / static_cast<double>(n), w[i], 0.01) << kFour[i];
  }
}

TEST(Sampling, ZeroWeightRateNeverDrawn) {
  const SchedulingScheme scheme("skip", RandomScheduling{{0.5, 0.0, 0.25, 0.25}, 3}, kFour);
  std::mt19937_64 rng(5);
  for (int it = 0; it < 200; ++it) {
    const auto lt = next_slice_rate_batch(scheme, kFour, rng);
    EXPECT_EQ(std::count(lt.begin(), lt.end(), 0.5), 0);
    EXPECT_EQ(lt.size(), 3u);
  }
}

TEST(Sampling, DeterministicForFixedSeed) {
  const auto scheme = preset("R-weighted-3", kFour);
  std::mt19937_64 a(9), b(9);
  for (int it = 0; it < 50; ++it) {
    EXPECT_EQ(next_slice_rate_batch(scheme, kFour, a), next_slice_rate_batch(scheme, kFour, b));
  }
}

TEST(Sampling, CategoricalDraw) {
  std::mt19937_64 rng(1);
  const std::vector<double> p{0.0, 1.0, 0.0};
  for (int i = 0; i < 20; ++i) EXPECT_EQ(draw_categorical(p, rng), 1u);
}

}  // namespace
}  // namespace slicenet
