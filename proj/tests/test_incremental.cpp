#include <gtest/gtest.h>

#include "slicenet/error.hpp"
#include "slicenet/incremental.hpp"
#include "slicenet/kernels.hpp"
#include "test_support.hpp"

namespace slicenet {
namespace {

using testing::random_tensor;

Tensor prefix2(const Tensor& w, std::size_t rows, std::size_t cols) {
  return kernels::narrow(kernels::narrow(w, 0, 0, rows), 1, 0, cols);
}

TEST(Partition, TwoByTwoBlocks) {
  const Tensor w = Tensor::matrix({{1, 2}, {3, 4}});
  const auto p = partition_weight(w, GroupSpec(2, 2), GroupSpec(2, 2), 0.5, 1.0, "toy");
  EXPECT_EQ(p.w_a, Tensor::matrix({{1}}));
  EXPECT_EQ(*p.b, Tensor::matrix({{2}}));
  EXPECT_EQ(*p.c, Tensor::matrix({{3}}));
  EXPECT_EQ(*p.d, Tensor::matrix({{4}}));
  EXPECT_EQ(reassemble(p), w);
}

TEST(WidenExact, TwoByTwoMatchesFullProduct) {
  const Tensor w = Tensor::matrix({{1, 2}, {3, 4}});
  const auto p = partition_weight(w, GroupSpec(2, 2), GroupSpec(2, 2), 0.5, 1.0);
  const Tensor x_a = Tensor::matrix({{1}}), x_b = Tensor::matrix({{1}});
  const Tensor y_a = kernels::matmul_nt(x_a, p.w_a);
  EXPECT_EQ(y_a, Tensor::matrix({{1}}));
  const auto r = widen_exact(p, y_a, x_a, x_b);
  EXPECT_EQ(r.base, Tensor::matrix({{3}}));
  EXPECT_EQ(*r.extra, Tensor::matrix({{7}}));
  EXPECT_EQ(r.combined(), Tensor::matrix({{3, 7}}));
}

TEST(WidenExact, ZeroResidualInputKeepsBase) {
  std::mt19937_64 rng(1);
  const Tensor w = random_tensor({8, 8}, rng);
  const auto p = partition_weight(w, GroupSpec(8, 4), GroupSpec(8, 4), 0.5, 1.0);
  const Tensor x_a = random_tensor({3, 4}, rng);
  const Tensor y_a = kernels::matmul_nt(x_a, p.w_a);
  const auto r = widen_exact(p, y_a, x_a, Tensor({3, 4}));
  EXPECT_EQ(r.base, y_a);
  EXPECT_EQ(*r.extra, kernels::matmul_nt(x_a, *p.c));
}

TEST(Partition, RandomReassemblyIsBitExact) {
  std::mt19937_64 rng(2);
  const Tensor w = random_tensor({8, 8}, rng);
  const auto p = partition_weight(w, GroupSpec(8, 4), GroupSpec(8, 4), 0.5, 0.75);
  EXPECT_EQ(p.in_a, 4u);
  EXPECT_EQ(p.in_b, 6u);
  EXPECT_EQ(p.c->shape(), (Shape{2, 4}));
  EXPECT_EQ(reassemble(p), prefix2(w, 6, 6));
}

TEST(Partition, Errors) {
  const Tensor w({8, 8});
  const GroupSpec s(8, 4);
  EXPECT_THROW(partition_weight(w, s, s, 0.75, 0.5), UsageError);
  EXPECT_THROW(partition_weight(w, s, s, 0.5, 0.5), UsageError);
  EXPECT_THROW(partition_weight(w, s, s, 0.5, 0.5 + 1e-9), UsageError);
  EXPECT_THROW(partition_weight(w, s, s, 0.3, 1.0), UsageError);
  EXPECT_THROW(partition_weight(w, GroupSpec::fixed(8), GroupSpec::fixed(8), 0.5, 1.0), UsageError);
}

// Random layers: widen_exact concatenation equals the direct r_b product.
TEST(WidenExact, RandomDenseLayersMatchDirectForward) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> pick_g(1, 6), pick_unit(1, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t g = pick_g(rng);
    const GroupSpec in(g * pick_unit(rng), g), out(g * pick_unit(rng), g);
    std::uniform_int_distribution<std::size_t> pick_k(1, g);
    std::size_t ka = pick_k(rng), kb = pick_k(rng);
    if (ka == kb) continue;
    if (ka > kb) std::swap(ka, kb);
    const double ra = static_cast<double>(ka) / g, rb = static_cast<double>(kb) / g;
    const Tensor w = random_tensor({out.total_width(), in.total_width()}, rng);
    const auto p = partition_weight(w, in, out, ra, rb);
    const Tensor x = random_tensor({2, p.in_b}, rng);
    const Tensor x_a = kernels::narrow(x, 1, 0, p.in_a);
    const Tensor x_b = kernels::narrow(x, 1, p.in_a, p.delta_in());
    const auto r = widen_exact(p, kernels::matmul_nt(x_a, p.w_a), x_a, x_b);
    const Tensor direct = kernels::matmul_nt(x, prefix2(w, p.out_b, p.in_b));
    EXPECT_LE(max_abs_diff(r.combined(), direct), 1e-12);
    EXPECT_EQ(reassemble(p), prefix2(w, p.out_b, p.in_b));
  }
}

TEST(WidenExact, RandomConvLayersMatchDirectForward) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    SlicedConv2D layer("c", GroupSpec(8, 4), GroupSpec(8, 4), 3, 1 + trial % 2, 1);
    layer.kernels.value = random_tensor(layer.kernels.value.shape(), rng);
    const double ra = 0.25 * (1 + trial % 3);
    const auto p = partition_weight(layer, ra, 1.0);
    EXPECT_TRUE(p.conv);
    const Tensor x = random_tensor({2, 8, 5, 5}, rng);
    const Tensor x_a = kernels::narrow(x, 1, 0, p.in_a);
    const Tensor x_b = kernels::narrow(x, 1, p.in_a, p.delta_in());
    const Tensor y_a = kernels::conv2d(x_a, p.w_a, p.stride, p.padding);
    const auto r = widen_exact(p, y_a, x_a, x_b);
    const Tensor direct = kernels::conv2d(x, layer.kernels.value, p.stride, p.padding);
    EXPECT_LE(max_abs_diff(r.combined(), direct), 1e-12);
  }
}

TEST(WidenExact, WidthMismatch) {
  const auto p = partition_weight(Tensor({8, 8}), GroupSpec(8, 4), GroupSpec(8, 4), 0.5, 1.0);
  EXPECT_THROW(widen_exact(p, Tensor({1, 4}), Tensor({1, 3}), Tensor({1, 4})), DimensionError);
  EXPECT_THROW(widen_exact(p, Tensor({1, 4}), Tensor({1, 4}), std::nullopt), DimensionError);
}

TEST(WidenApprox, FlopsRatioForSquareLayer) {
  const auto p = partition_weight(Tensor({8, 8}), GroupSpec(8, 8), GroupSpec(8, 8), 0.5, 0.625);
  const Tensor x_a({1, 4}), x_b({1, 1});
  const auto r = widen_approx(p, Tensor({1, 4}), x_a, x_b);
  EXPECT_EQ(r.flops, 5u);
  EXPECT_EQ(r.full_flops, 25u);
  EXPECT_DOUBLE_EQ(static_cast<double>(r.flops) / r.full_flops, 0.2);
}

TEST(WidenApprox, BaseRowsBitIdenticalAndErrorBound) {
  std::mt19937_64 rng(5);
  const Tensor w = random_tensor({8, 8}, rng);
  const auto p = partition_weight(w, GroupSpec(8, 4), GroupSpec(8, 4), 0.5, 1.0);
  const Tensor x_a = random_tensor({3, 4}, rng), x_b = random_tensor({3, 4}, rng);
  const Tensor y_a = kernels::matmul_nt(x_a, p.w_a);
  const auto approx = widen_approx(p, y_a, x_a, x_b);
  const auto exact = widen_exact(p, y_a, x_a, x_b);
  EXPECT_EQ(approx.base, y_a);
  EXPECT_EQ(*approx.extra, *exact.extra);
  EXPECT_NEAR(approx.error_bound, max_abs_diff(approx.base, exact.base), 1e-14);
  EXPECT_LT(approx.flops, exact.flops);
}

TEST(WidenApprox, ZeroCrossBlockEqualsExact) {
  std::mt19937_64 rng(6);
  Tensor w = random_tensor({8, 8}, rng);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 4; c < 8; ++c) w[r * 8 + c] = 0.0;
  const auto p = partition_weight(w, GroupSpec(8, 4), GroupSpec(8, 4), 0.5, 1.0);
  const Tensor x_a = random_tensor({2, 4}, rng), x_b = random_tensor({2, 4}, rng);
  const Tensor y_a = kernels::matmul_nt(x_a, p.w_a);
  EXPECT_EQ(widen_approx(p, y_a, x_a, x_b).combined(), widen_exact(p, y_a, x_a, x_b).combined());
  EXPECT_EQ(widen_approx(p, y_a, x_a, x_b).error_bound, 0.0);
}

ModelSpec dense_gn_stack() {
  ModelSpec s;
  s.input_shape = {8};
  s.layers = {"dense:16", "gn", "relu", "dense:16", "gn", "tanh"};
  s.classes = 3;
  s.groups = 4;
  s.slice_input = true;
  return s;
}

Tensor direct_forward(Network& net, const Tensor& features, double rate) {
  Batch b;
  b.features = features;
  b.batch_size = features.dim(0);
  Tape tape;
  return net.forward(tape, b, rate).value();
}

TEST(WidenModel, ExactModeMatchesDirectForward) {
  auto net = make_network(dense_gn_stack(), 7);
  auto& seq = dynamic_cast<SequentialNetwork&>(*net);
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({5, 8}, rng);
  for (double ra : {0.25, 0.5}) {
    const auto cache = run_and_cache(seq, x, ra, 11);
    EXPECT_LE(max_abs_diff(cache.output(11), direct_forward(*net, x, ra)), 0.0);
    for (double rb : {0.75, 1.0}) {
      const auto out = widen_model(seq, cache, x, 11, rb, WidenMode::kExact);
      EXPECT_LE(max_abs_diff(out.output, direct_forward(*net, x, rb)), 1e-10) << ra << "->" << rb;
      EXPECT_LT(out.flops, out.full_flops + 1);
      EXPECT_EQ(out.max_error_bound, 0.0);
    }
  }
}

TEST(WidenModel, ApproxModeReportsBoundAndSavesWork) {
  auto net = make_network(dense_gn_stack(), 7);
  auto& seq = dynamic_cast<SequentialNetwork&>(*net);
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor({5, 8}, rng);
  const auto cache = run_and_cache(seq, x, 0.5, 1);
  const auto out = widen_model(seq, cache, x, 1, 1.0, WidenMode::kApprox);
  EXPECT_EQ(out.output.shape(), (Shape{5, 3}));
  EXPECT_LT(out.flops, out.full_flops);
  EXPECT_GT(out.max_error_bound, 0.0);
  EXPECT_TRUE(all_finite(out.output));
}

TEST(WidenModel, SameRateReturnsCachedOutput) {
  auto net = make_network(dense_gn_stack(), 7);
  auto& seq = dynamic_cast<SequentialNetwork&>(*net);
  std::mt19937_64 rng(9);
  const Tensor x = random_tensor({2, 8}, rng);
  const auto cache = run_and_cache(seq, x, 0.5, 3);
  EXPECT_EQ(widen_model(seq, cache, x, 3, 0.5, WidenMode::kExact).output, cache.output(3));
  EXPECT_THROW(widen_model(seq, cache, x, 3, 0.25, WidenMode::kExact), UsageError);
}

TEST(ActivationCache, StaleTokenAndMissingLayer) {
  auto net = make_network(dense_gn_stack(), 7);
  auto& seq = dynamic_cast<SequentialNetwork&>(*net);
  std::mt19937_64 rng(10);
  const Tensor x = random_tensor({2, 8}, rng);
  const auto cache = run_and_cache(seq, x, 0.5, 3);
  EXPECT_THROW(widen_model(seq, cache, x, 4, 1.0, WidenMode::kExact), UsageError);
  EXPECT_THROW(cache.output(4), UsageError);
  try {
    cache.lookup("no_such_layer", 3);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("no_such_layer"), std::string::npos);
  }
}

}  // namespace
}  // namespace slicenet
