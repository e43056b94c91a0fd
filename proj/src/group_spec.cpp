#include "slicenet/group_spec.hpp"

#include <cmath>
#include <string>

#include "slicenet/error.hpp"

namespace slicenet {

void validate_rate(double rate) {
  if (!(rate > 0.0) || rate > 1.0) {
    throw ConfigError("slice rate must lie in (0, 1], got " + std::to_string(rate));
  }
}

GroupSpec::GroupSpec(std::size_t total_width, std::size_t group_count)
    : total_width_(total_width), group_count_(group_count) {
  if (total_width == 0 || group_count == 0) {
    throw ConfigError("group spec needs positive width and group count");
  }
  if (total_width % group_count != 0) {
    throw ConfigError("width " + std::to_string(total_width) + " is not divisible into " +
                      std::to_string(group_count) + " uniform groups");
  }
}

std::size_t GroupSpec::boundary(std::size_t i) const {
  if (i == 0 || i > group_count_) {
    throw ConfigError("group index " + std::to_string(i) + " outside [1, " +
                      std::to_string(group_count_) + "]");
  }
  return i * group_size();
}

std::vector<std::size_t> GroupSpec::boundaries() const {
  std::vector<std::size_t> out;
  out.reserve(group_count_);
  for (std::size_t i = 1; i <= group_count_; ++i) out.push_back(i * group_size());
  return out;
}

std::vector<double> GroupSpec::rates() const {
  std::vector<double> out;
  out.reserve(group_count_);
  for (std::size_t i = 1; i <= group_count_; ++i) {
    out.push_back(static_cast<double>(i) / static_cast<double>(group_count_));
  }
  return out;
}

bool GroupSpec::on_boundary(std::size_t width) const noexcept {
  return width > 0 && width <= total_width_ && width % group_size() == 0;
}

std::size_t GroupSpec::slice_boundary(double rate) const {
  validate_rate(rate);
  const auto target = static_cast<std::size_t>(std::llround(rate * static_cast<double>(total_width_)));
  const std::size_t groups = target / group_size();
  return (groups == 0 ? 1 : groups) * group_size();
}

}  // namespace slicenet
