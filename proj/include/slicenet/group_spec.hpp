#pragma once

#include <cstddef>
#include <vector>

namespace slicenet {

/// Uniform partition of a layer axis of `total_width` components into
/// `group_count` ordered, contiguous groups. Boundary g_i = i * M / G is the
/// exclusive end of the first i groups; the slice rate of boundary i is g_i / M.
///
/// A spec with a single group is unsliceable: every rate resolves to the full width.
class GroupSpec {
 public:
  GroupSpec(std::size_t total_width, std::size_t group_count);

  /// Unsliceable axis of the given width.
  static GroupSpec fixed(std::size_t total_width) { return GroupSpec(total_width, 1); }

  std::size_t total_width() const noexcept { return total_width_; }
  std::size_t group_count() const noexcept { return group_count_; }
  std::size_t group_size() const noexcept { return total_width_ / group_count_; }

  /// g_i for 1 <= i <= G.
  std::size_t boundary(std::size_t i) const;
  std::vector<std::size_t> boundaries() const;
  std::vector<double> rates() const;
  bool on_boundary(std::size_t width) const noexcept;

  /// Active width at rate r: the largest boundary not exceeding round(r * M),
  /// never less than the first boundary. Throws ConfigError unless 0 < r <= 1.
  std::size_t slice_boundary(double rate) const;

  bool operator==(const GroupSpec&) const = default;

 private:
  std::size_t total_width_;
  std::size_t group_count_;
};

/// Throws ConfigError unless 0 < rate <= 1.
void validate_rate(double rate);

}  // namespace slicenet
