#pragma once

// Widening a cached base subnet to a larger one by computing only the new
// weight blocks. With the prefix weight at r_b split as
//
//   [ W_a  B ]   rows: base outputs (g_out_a), new outputs (delta_out)
//   [ C    D ]   cols: base inputs  (g_in_a),  new inputs  (delta_in)
//
// and the cached base product Y_a = W_a x_a, the r_b product is
//   base rows  Y_a + B x_b
//   new rows   C x_a + D x_b
// Approximate mode keeps Y_a for the base rows and skips B x_b.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "slicenet/model.hpp"

namespace slicenet {

struct WeightPartition {
  std::string layer;
  std::size_t in_a = 0, in_b = 0, out_a = 0, out_b = 0;
  bool conv = false;
  std::size_t stride = 1, padding = 0;
  Tensor w_a;                // [out_a x in_a (x k x k)]
  std::optional<Tensor> b;   // [out_a x delta_in]; absent when delta_in = 0
  std::optional<Tensor> c;   // [delta_out x in_a]; absent when delta_out = 0
  std::optional<Tensor> d;   // [delta_out x delta_in]

  std::size_t delta_in() const noexcept { return in_b - in_a; }
  std::size_t delta_out() const noexcept { return out_b - out_a; }
};

/// Splits the [g_out_b x g_in_b] prefix of a rank-2 weight (or the channel
/// axes of a rank-4 kernel). Throws UsageError unless r_a < r_b select distinct
/// boundary prefixes on at least one axis.
WeightPartition partition_weight(const Tensor& weight, const GroupSpec& in, const GroupSpec& out,
                                 double r_a, double r_b, const std::string& layer = "");
WeightPartition partition_weight(const SlicedDense& layer, double r_a, double r_b);
WeightPartition partition_weight(const SlicedConv2D& layer, double r_a, double r_b);

/// The [out_b x in_b] prefix rebuilt from the four blocks.
Tensor reassemble(const WeightPartition& partition);

struct WidenResult {
  Tensor base;                 // rows [0, out_a)
  std::optional<Tensor> extra; // rows [out_a, out_b)
  /// Multiply-accumulates per example spent on widening.
  std::uint64_t flops = 0;
  /// Multiply-accumulates per example of a direct r_b product.
  std::uint64_t full_flops = 0;
  /// max |B x_b|: how far the approximate base rows are from exact (0 when exact).
  double error_bound = 0.0;

  Tensor combined() const;
};

/// Dense inputs are [batch x width]; conv inputs are [batch x C x H x W].
/// `x_b` must be present exactly when the partition's delta_in is positive.
WidenResult widen_exact(const WeightPartition& partition, const Tensor& y_a, const Tensor& x_a,
                        const std::optional<Tensor>& x_b);
WidenResult widen_approx(const WeightPartition& partition, const Tensor& y_a, const Tensor& x_a,
                         const std::optional<Tensor>& x_b);

/// Per-layer base activations of one input batch at one rate. Each linear
/// layer stores its input and its raw product W x (before rescaling and bias).
class ActivationCache {
 public:
  struct Entry {
    Tensor input;
    Tensor product;
  };

  ActivationCache(std::uint64_t token, double rate) : token_(token), rate_(rate) {}

  std::uint64_t token() const noexcept { return token_; }
  double rate() const noexcept { return rate_; }

  void store(const std::string& layer, Entry entry);
  /// Throws UsageError on a token mismatch or a missing layer.
  const Entry& lookup(const std::string& layer, std::uint64_t token) const;

  void set_output(Tensor output) { output_ = std::move(output); }
  const Tensor& output(std::uint64_t token) const;

 private:
  void check_token(std::uint64_t token) const;

  std::uint64_t token_;
  double rate_;
  std::map<std::string, Entry> entries_;
  std::optional<Tensor> output_;
};

/// Inference at rate `rate`, recording every linear layer into a fresh cache.
ActivationCache run_and_cache(SequentialNetwork& net, const Tensor& features, double rate,
                              std::uint64_t token);

enum class WidenMode { kExact, kApprox };

struct LayerWidenStats {
  std::string layer;
  std::uint64_t flops = 0;
  std::uint64_t full_flops = 0;
  double error_bound = 0.0;
  bool reused = false;  // cached base product used
};

struct WidenOutcome {
  Tensor output;
  std::vector<LayerWidenStats> layers;
  std::uint64_t flops = 0;       // linear-layer MACs per example
  std::uint64_t full_flops = 0;  // same for a direct r_b forward
  double max_error_bound = 0.0;
};

/// Output of Subnet-r_b computed layer by layer from the cache.
///
/// Exact mode reuses a cached base product only when the layer's base input is
/// bit-identical to the cached one, and recomputes it otherwise, so the result
/// matches a direct forward. Approximate mode keeps the cached base rows of
/// every layer whose output axis grows; layers with a fixed output width (the
/// classifier) are widened exactly.
WidenOutcome widen_model(SequentialNetwork& net, const ActivationCache& cache,
                         const Tensor& features, std::uint64_t token, double r_b, WidenMode mode);

}  // namespace slicenet
