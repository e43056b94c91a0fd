#pragma once

// CLI verbs as library calls. Every command writes its CSV files plus a
// `<verb>.json` summary into the output directory and returns the summary.
// The output directory is the explicit option if given, else $SLICENET_OUTPUT_DIR,
// else the config's output_dir, else ./slicenet_out.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "slicenet/config.hpp"
#include "slicenet/dataset.hpp"

namespace slicenet {

inline constexpr const char* kOutputDirEnv = "SLICENET_OUTPUT_DIR";

std::filesystem::path resolve_output_dir(const std::string& option,
                                         const std::string& config_dir = "");

/// Loads `path`, or generates the task from the config's seed and size when empty.
std::unique_ptr<Dataset> load_task_data(const ExperimentConfig& config, const std::string& path);

struct GenDataOptions {
  std::string task = "spirals";
  std::uint64_t seed = 1;
  std::size_t size = 1000;
  std::string out;
};
nlohmann::json cmd_gen_data(const GenDataOptions& o);

struct TrainOptions {
  std::string config;      // INI path; optional when resuming
  std::string data;        // dataset file; generated from the config when empty
  std::string out;
  std::string resume;      // checkpoint directory
  std::size_t max_epochs = 0;  // stop after this many epochs in this run (0 = no limit)
};
nlohmann::json cmd_train(const TrainOptions& o);

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::vector<double> rates;  // empty = every rate of the training list
  std::string out;
};
nlohmann::json cmd_eval(const EvalOptions& o);

struct SweepOptions {
  std::string checkpoint;  // trained model, or
  std::string config;      // model spec only, or
  std::string model;       // built-in fixture name ("vgg13")
  std::size_t groups = 8;  // groups for the built-in fixture
  std::string data;
  std::vector<double> rates;
  std::string out;
};
nlohmann::json cmd_sweep(const SweepOptions& o);

struct CostOptions {
  std::string config;
  std::string model;
  std::size_t groups = 8;
  std::vector<double> rates;
  std::string out;
};
nlohmann::json cmd_cost(const CostOptions& o);

struct SimulateOptions {
  std::string trace;  // CSV of arrival times
  double latency = 2.0;
  double sample_time = 0.01;
  std::vector<double> rates{0.25, 0.5, 0.75, 1.0};
  std::string out;
};
nlohmann::json cmd_simulate(const SimulateOptions& o);

struct CascadeOptions {
  std::string checkpoint;                // sliced model
  std::vector<double> rates;             // one stage per rate
  std::vector<std::string> independent;  // optional fixed models, one per stage
  std::string data;
  std::string out;
};
nlohmann::json cmd_cascade(const CascadeOptions& o);

struct WidenOptions {
  std::string checkpoint;
  std::string data;
  double from = 0.5;
  double to = 1.0;
  std::string mode = "exact";
  std::string out;
};
nlohmann::json cmd_widen(const WidenOptions& o);

}  // namespace slicenet
