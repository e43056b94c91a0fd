#include <gtest/gtest.h>

#include <cmath>

#include "slicenet/cost_model.hpp"
#include "slicenet/error.hpp"

namespace slicenet {
namespace {

// VGG-13 (GN, 32x32, 10 classes, 8 groups). Params are exact; operations are
// multiply-accumulates of conv and dense layers only, computed by hand from the
// layer table: sum over convs of k^2 * c_in * c_out * H * W plus the classifier.
struct VggRow {
  double rate;
  std::uint64_t params;
  std::uint64_t flops;
};
constexpr VggRow kVgg[] = {
    {0.375, 1327810, 143992704}, {0.5, 2357930, 255691264},   {0.625, 3681810, 399240320},
    {0.75, 5299450, 574639872},  {0.875, 7210850, 781889920}, {1.0, 9416010, 1020990464},
};

TEST(Vgg13, ExactCountsAtEveryWidth) {
  const ModelSpec spec = vgg13_spec();
  for (const auto& row : kVgg) {
    EXPECT_EQ(count_params(spec, row.rate), row.params) << row.rate;
    EXPECT_EQ(count_flops(spec, row.rate), row.flops) << row.rate;
  }
}

TEST(Vgg13, FirstLayerHandCount) {
  const auto rows = cost_rows(vgg13_spec(), 1.0);
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0].kind, "conv");
  EXPECT_EQ(rows[0].params, 3u * 64 * 9 + 64);
  EXPECT_EQ(rows[0].flops, 3u * 64 * 9 * 32 * 32);
  EXPECT_FALSE(rows[0].sliced_in);
  EXPECT_TRUE(rows[0].sliced_out);
}

TEST(CostReport, TotalsAreSumsOfRowsAndRatiosAgree) {
  const ModelSpec spec = vgg13_spec();
  for (double r : {0.375, 0.75, 1.0}) {
    const auto rep = cost_report(spec, r);
    std::uint64_t p = 0, f = 0;
    for (const auto& row : rep.rows) {
      p += row.params;
      f += row.flops;
    }
    EXPECT_EQ(rep.total_params, p);
    EXPECT_EQ(rep.total_flops, f);
    EXPECT_DOUBLE_EQ(rep.params_ratio, static_cast<double>(p) / 9416010.0);
    EXPECT_DOUBLE_EQ(rep.flops_ratio, static_cast<double>(f) / 1020990464.0);
  }
}

ModelSpec dense_stack(std::size_t groups) {
  ModelSpec s;
  s.input_shape = {16};
  s.layers = {"dense:32", "relu", "dense:32", "relu", "dense:32"};
  s.classes = 4;
  s.groups = groups;
  return s;
}

// Layers sliced on both axes scale exactly with r^2.
TEST(CostLaw, QuadraticOnDoublySlicedLayers) {
  const ModelSpec spec = dense_stack(16);
  for (std::size_t k = 1; k <= 16; ++k) {
    const double r = k / 16.0;
    EXPECT_NEAR(cost_report(spec, r).sliced_flops_ratio, r * r, 1e-15) << r;
  }
}

TEST(CostLaw, MonotoneInRate) {
  const ModelSpec spec = dense_stack(8);
  std::uint64_t prev_p = 0, prev_f = 0;
  for (std::size_t k = 1; k <= 8; ++k) {
    const double r = k / 8.0;
    EXPECT_GT(count_params(spec, r), prev_p);
    EXPECT_GT(count_flops(spec, r), prev_f);
    prev_p = count_params(spec, r);
    prev_f = count_flops(spec, r);
  }
}

TEST(CostLaw, DenseHandCount) {
  // r = 0.5 with 8 groups: 16 -> 16 -> 16 -> 16 -> 4.
  const ModelSpec spec = dense_stack(8);
  EXPECT_EQ(count_params(spec, 0.5), (16u * 16 + 16) * 3 + (16 * 4 + 4));
  EXPECT_EQ(count_flops(spec, 0.5), 16u * 16 * 3 + 16 * 4);
}

TEST(CostLaw, CharLstmHandCount) {
  ModelSpec s;
  s.arch = "char_lstm";
  s.input_shape = {16};
  s.classes = 16;
  s.groups = 4;
  s.embed = 16;
  s.hidden = 32;
  // Half width: hidden 16, embedding left at full width.
  const std::uint64_t lstm_p = 4 * 16 * (16 + 16) + 4 * 16;
  const std::uint64_t out_p = 16 * 16 + 16;
  EXPECT_EQ(count_params(s, 0.5), 16u * 16 + lstm_p + out_p);
  EXPECT_EQ(count_flops(s, 0.5), (4u * 16 * (16 + 16) + 16 * 16) * 16);
}

TEST(CostLaw, ConvInputShapeOverride) {
  ModelSpec s;
  s.input_shape = {1, 8, 8};
  s.layers = {"conv:8:3", "gap"};
  s.classes = 2;
  s.groups = 4;
  EXPECT_EQ(count_flops(s, 1.0), 8u * 9 * 64 + 8 * 2);
  EXPECT_EQ(count_flops(s, 1.0, {1, 4, 4}), 8u * 9 * 16 + 8 * 2);
}

TEST(Budget, PicksLargestAffordableRate) {
  const SliceRateList l({0.25, 0.5, 0.75, 1.0});
  EXPECT_EQ(max_rate_for_budget(30.0, 100.0, l), 0.5);
  EXPECT_EQ(max_rate_for_budget(56.25, 100.0, l), 0.75);
  EXPECT_EQ(max_rate_for_budget(100.0, 100.0, l), 1.0);
  EXPECT_EQ(max_rate_for_budget(500.0, 100.0, l), 1.0);
  EXPECT_EQ(max_rate_for_budget(6.25, 100.0, l), 0.25);
  EXPECT_THROW(max_rate_for_budget(6.0, 100.0, l), BudgetInfeasibleError);
  EXPECT_THROW(max_rate_for_budget(10.0, 0.0, l), ConfigError);
}

}  // namespace
}  // namespace slicenet
