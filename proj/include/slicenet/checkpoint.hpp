#pragma once

// Checkpoint directory layout:
//
//   manifest.json  format version, model spec, config text, training progress,
//                  and for every array its name, shape and offset (in values)
//   params.bin     all arrays back to back as little-endian f64
//
// Arrays are the network parameters in Network::parameters() order, followed
// by the optimizer momentum buffers when a trainer is saved.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "slicenet/config.hpp"
#include "slicenet/model.hpp"
#include "slicenet/trainer.hpp"

namespace slicenet {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointProgress {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::string data_rng;      // std::mt19937_64 stream state
  std::string schedule_rng;
};

struct LoadedCheckpoint {
  ModelSpec spec;
  std::unique_ptr<Network> network;
  std::optional<ExperimentConfig> config;
  std::optional<CheckpointProgress> progress;
  std::vector<Tensor> velocity;  // empty unless saved with a trainer

  /// Restores optimizer buffers and rng streams into a trainer built on `network`.
  void restore(Trainer& trainer) const;
};

void save_checkpoint(const std::filesystem::path& dir, const Network& net,
                     const ExperimentConfig* config = nullptr, const Trainer* trainer = nullptr);
/// Throws IoError for missing files and DataError for malformed contents.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace slicenet
