#pragma once

// Slice-rate scheduling: which subnets are trained on each iteration.

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "slicenet/group_spec.hpp"

namespace slicenet {

/// Ascending list of trainable slice rates r_1 < ... < r_G = 1.0.
class SliceRateList {
 public:
  explicit SliceRateList(std::vector<double> rates);

  /// Every boundary rate of `spec` that is >= lower_bound.
  static SliceRateList from_groups(const GroupSpec& spec, double lower_bound);

  const std::vector<double>& rates() const noexcept { return rates_; }
  std::size_t size() const noexcept { return rates_.size(); }
  double operator[](std::size_t i) const { return rates_[i]; }
  double lower_bound() const noexcept { return rates_.front(); }
  bool contains(double rate) const;
  std::size_t index_of(double rate) const;

  /// Throws ConfigError unless every rate is a boundary rate of `spec`.
  void require_boundaries(const GroupSpec& spec) const;

 private:
  std::vector<double> rates_;
};

/// p(r_i) from a cumulative distribution function, evaluated at the midpoints
/// between consecutive rates. Throws ConfigError if the sampled CDF decreases
/// or leaves [0, 1].
std::vector<double> probabilities_from_distribution(const std::function<double(double)>& cdf,
                                                    const SliceRateList& rates);

/// Index drawn from a categorical distribution.
std::size_t draw_categorical(std::span<const double> probabilities, std::mt19937_64& rng);

struct RandomScheduling {
  std::vector<double> probabilities;  // one per rate of L
  std::size_t draws = 1;
};

struct StaticScheduling {};

struct RandomStaticScheduling {
  std::vector<std::size_t> fixed;     // indices into L, always scheduled
  std::vector<double> probabilities;  // over the remaining indices, ascending order
  std::size_t draws = 1;
};

class SchedulingScheme {
 public:
  using Variant = std::variant<RandomScheduling, StaticScheduling, RandomStaticScheduling>;

  /// Validates the variant against L: probabilities nonnegative and summing to 1
  /// within 1e-12, fixed set non-empty and in range.
  SchedulingScheme(std::string name, Variant variant, const SliceRateList& rates);

  const std::string& name() const noexcept { return name_; }
  const Variant& variant() const noexcept { return variant_; }
  /// Number of subnets scheduled per iteration when enough rates have nonzero weight.
  std::size_t nominal_size(const SliceRateList& rates) const;

 private:
  std::string name_;
  Variant variant_;
};

/// L_t for one iteration: sorted descending, no duplicates, a subset of L.
/// Random draws are taken without replacement.
std::vector<double> next_slice_rate_batch(const SchedulingScheme& scheme, const SliceRateList& rates,
                                          std::mt19937_64& rng);

/// Named schemes: Static, R-uniform-k, R-weighted-k, R-min, R-max, R-min-max.
SchedulingScheme preset(const std::string& name, const SliceRateList& rates);
std::vector<std::string> preset_names();

/// The R-weighted importance list, ascending by rate. For four rates this is
/// (0.25, 0.125, 0.125, 0.5): the full network gets half the mass, the base a
/// quarter, the middle rates share the rest.
std::vector<double> weighted_importance(std::size_t count);

}  // namespace slicenet
