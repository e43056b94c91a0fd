#pragma once

// Experiment configuration stored as an INI file:
//
//   [experiment]  task, seed, data_size, output_dir
//   [model]       arch, input_shape, layers, classes, groups, ...
//   [train]       epochs, batch_size, lr, scheme, slice_rates, lower_bound, ...
//
// Lists are space separated. `slice_rates` may be left empty to take every
// group boundary at or above `lower_bound`.

#include <cstdint>
#include <filesystem>
#include <string>

#include "slicenet/data.hpp"
#include "slicenet/model.hpp"
#include "slicenet/trainer.hpp"

namespace slicenet {

struct ExperimentConfig {
  std::string task = "spirals";
  std::uint64_t seed = 1;
  std::size_t data_size = 1000;
  std::string output_dir;
  ModelSpec model;
  TrainConfig train;
  double lower_bound = 0.25;

  /// The slice rate list in effect (explicit list, or derived from groups).
  SliceRateList slice_rates() const;
  /// Full feasibility check: model resolves, rates lie on group boundaries,
  /// preset exists. Throws ConfigError.
  void validate() const;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Defaults for each bundled task.
ExperimentConfig default_config(Task task);

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& config);
void save_config(const std::filesystem::path& path, const ExperimentConfig& config);

}  // namespace slicenet
