#include "slicenet/scheduler.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "slicenet/error.hpp"

namespace slicenet {

namespace {

constexpr double kProbabilityTolerance = 1e-12;
constexpr double kRateTolerance = 1e-9;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

void validate_probabilities(std::span<const double> p, const std::string& what) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError(what + ": probabilities must be nonnegative and finite");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > kProbabilityTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << what << ": probabilities sum to " << total << ", expected 1";
    throw ConfigError(os.str());
  }
}

/// Draws up to `draws` distinct positions of `weights` without replacement.
std::vector<std::size_t> draw_distinct(std::vector<double> weights, std::size_t draws,
                                       std::mt19937_64& rng) {
  std::vector<std::size_t> picked;
  for (std::size_t d = 0; d < draws; ++d) {
    const double mass = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(mass > 0.0)) break;
    std::vector<double> normalized(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) normalized[i] = weights[i] / mass;
    const std::size_t idx = draw_categorical(normalized, rng);
    picked.push_back(idx);
    weights[idx] = 0.0;
  }
  return picked;
}

}  // namespace

SliceRateList::SliceRateList(std::vector<double> rates) : rates_(std::move(rates)) {
  if (rates_.empty()) throw ConfigError("slice rate list is empty");
  std::sort(rates_.begin(), rates_.end());
  for (std::size_t i = 0; i < rates_.size(); ++i) {
    validate_rate(rates_[i]);
    if (i > 0 && rates_[i] - rates_[i - 1] <= kRateTolerance) {
      throw ConfigError("slice rate list contains duplicate rate " + std::to_string(rates_[i]));
    }
  }
  if (std::abs(rates_.back() - 1.0) > kRateTolerance) {
    throw ConfigError("slice rate list must end at 1.0");
  }
  rates_.back() = 1.0;
}

SliceRateList SliceRateList::from_groups(const GroupSpec& spec, double lower_bound) {
  std::vector<double> rates;
  for (double r : spec.rates()) {
    if (r + kRateTolerance >= lower_bound) rates.push_back(r);
  }
  return SliceRateList(std::move(rates));
}

bool SliceRateList::contains(double rate) const {
  return std::any_of(rates_.begin(), rates_.end(),
                     [&](double r) { return std::abs(r - rate) <= kRateTolerance; });
}

std::size_t SliceRateList::index_of(double rate) const {
  for (std::size_t i = 0; i < rates_.size(); ++i) {
    if (std::abs(rates_[i] - rate) <= kRateTolerance) return i;
  }
  throw ConfigError("rate " + std::to_string(rate) + " is not in the slice rate list");
}

void SliceRateList::require_boundaries(const GroupSpec& spec) const {
  for (double r : rates_) {
    const double scaled = r * static_cast<double>(spec.group_count());
    if (std::abs(scaled - std::round(scaled)) > 1e-9) {
      throw ConfigError("slice rate " + std::to_string(r) + " is not a group boundary for " +
                        std::to_string(spec.group_count()) + " groups");
    }
  }
}

std::vector<double> probabilities_from_distribution(const std::function<double(double)>& cdf,
                                                    const SliceRateList& rates) {
  const std::size_t g = rates.size();
  if (g == 1) return {1.0};
  std::vector<double> at_mid(g - 1);
  for (std::size_t i = 0; i + 1 < g; ++i) {
    const double v = cdf(0.5 * (rates[i] + rates[i + 1]));
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ConfigError("cdf value " + std::to_string(v) + " outside [0, 1]");
    }
    if (i > 0 && v < at_mid[i - 1]) throw ConfigError("cdf is decreasing between rate midpoints");
    at_mid[i] = v;
  }
  std::vector<double> p(g);
  p[0] = at_mid[0];
  for (std::size_t i = 1; i + 1 < g; ++i) p[i] = at_mid[i] - at_mid[i - 1];
  p[g - 1] = 1.0 - at_mid[g - 2];
  return p;
}

std::size_t draw_categorical(std::span<const double> probabilities, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (probabilities[i] <= 0.0) continue;
    acc += probabilities[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

SchedulingScheme::SchedulingScheme(std::string name, Variant variant, const SliceRateList& rates)
    : name_(std::move(name)), variant_(std::move(variant)) {
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, RandomScheduling>) {
          if (v.probabilities.size() != rates.size()) {
            throw ConfigError(name_ + ": needs one probability per slice rate");
          }
          if (v.draws == 0) throw ConfigError(name_ + ": needs at least one draw");
          validate_probabilities(v.probabilities, name_);
        } else if constexpr (std::is_same_v<T, RandomStaticScheduling>) {
          if (v.fixed.empty()) throw ConfigError(name_ + ": fixed set is empty");
          for (std::size_t idx : v.fixed) {
            if (idx >= rates.size()) throw ConfigError(name_ + ": fixed index out of range");
          }
          std::vector<std::size_t> sorted = v.fixed;
          std::sort(sorted.begin(), sorted.end());
          if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw ConfigError(name_ + ": fixed set repeats a rate");
          }
          const std::size_t remaining = rates.size() - v.fixed.size();
          if (v.probabilities.size() != remaining) {
            throw ConfigError(name_ + ": needs one probability per non-fixed rate");
          }
          if (remaining > 0 && v.draws > 0) validate_probabilities(v.probabilities, name_);
        }
      },
      variant_);
}

std::size_t SchedulingScheme::nominal_size(const SliceRateList& rates) const {
  return std::visit(
      [&](const auto& v) -> std::size_t {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, RandomScheduling>) {
          return std::min(v.draws, rates.size());
        } else if constexpr (std::is_same_v<T, StaticScheduling>) {
          return rates.size();
        } else {
          return v.fixed.size() + std::min(v.draws, rates.size() - v.fixed.size());
        }
      },
      variant_);
}

std::vector<double> next_slice_rate_batch(const SchedulingScheme& scheme, const SliceRateList& rates,
                                          std::mt19937_64& rng) {
  std::vector<std::size_t> chosen;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, RandomScheduling>) {
          chosen = draw_distinct(v.probabilities, v.draws, rng);
        } else if constexpr (std::is_same_v<T, StaticScheduling>) {
          chosen.resize(rates.size());
          std::iota(chosen.begin(), chosen.end(), 0);
        } else {
          chosen = v.fixed;
          std::vector<std::size_t> remainder;
          for (std::size_t i = 0; i < rates.size(); ++i) {
            if (std::find(v.fixed.begin(), v.fixed.end(), i) == v.fixed.end()) remainder.push_back(i);
          }
          for (std::size_t pick : draw_distinct(v.probabilities, v.draws, rng)) {
            chosen.push_back(remainder[pick]);
          }
        }
      },
      scheme.variant());
  std::sort(chosen.begin(), chosen.end(), std::greater<>());
  chosen.erase(std::unique(chosen.begin(), chosen.end()), chosen.end());
  std::vector<double> out;
  out.reserve(chosen.size());
  for (std::size_t idx : chosen) out.push_back(rates[idx]);
  return out;
}

std::vector<double> weighted_importance(std::size_t count) {
  if (count == 0) return {};
  if (count == 1) return {1.0};
  if (count == 2) return {1.0 / 3.0, 2.0 / 3.0};
  std::vector<double> w(count, 0.25 / static_cast<double>(count - 2));
  w.front() = 0.25;
  w.back() = 0.5;
  return w;
}

std::vector<std::string> preset_names() {
  return {"Static", "R-uniform-k", "R-weighted-k", "R-min", "R-max", "R-min-max"};
}

SchedulingScheme preset(const std::string& name, const SliceRateList& rates) {
  const std::string key = lower(name);
  const std::size_t g = rates.size();
  auto uniform = [](std::size_t n) {
    return n == 0 ? std::vector<double>{} : std::vector<double>(n, 1.0 / static_cast<double>(n));
  };
  auto parse_k = [&](const std::string& prefix) -> std::size_t {
    const std::string digits = key.substr(prefix.size());
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) {
      throw ConfigError("preset '" + name + "' needs a positive draw count suffix");
    }
    const std::size_t k = std::stoul(digits);
    if (k == 0) throw ConfigError("preset '" + name + "' needs a positive draw count");
    return k;
  };
  if (key == "static") return SchedulingScheme(name, StaticScheduling{}, rates);
  if (key.rfind("r-uniform-", 0) == 0) {
    return SchedulingScheme(name, RandomScheduling{uniform(g), parse_k("r-uniform-")}, rates);
  }
  if (key.rfind("r-weighted-", 0) == 0) {
    return SchedulingScheme(name, RandomScheduling{weighted_importance(g), parse_k("r-weighted-")},
                            rates);
  }
  if (key == "r-min" || key == "r-max" || key == "r-min-max") {
    std::vector<std::size_t> fixed;
    if (key != "r-max") fixed.push_back(0);
    if (key != "r-min" && (fixed.empty() || g > 1)) fixed.push_back(g - 1);
    const std::size_t remaining = g - fixed.size();
    return SchedulingScheme(name, RandomStaticScheduling{fixed, uniform(remaining), 1}, rates);
  }
  std::string valid;
  for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown scheduling preset '" + name + "' (valid: " + valid + ")");
}

}  // namespace slicenet
