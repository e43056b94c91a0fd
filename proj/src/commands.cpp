#include "slicenet/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "slicenet/applications.hpp"
#include "slicenet/checkpoint.hpp"
#include "slicenet/cost_model.hpp"
#include "slicenet/data.hpp"
#include "slicenet/error.hpp"
#include "slicenet/incremental.hpp"

namespace slicenet {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class CsvWriter {
 public:
  /// With `append`, rows go after the existing contents and no header is written.
  CsvWriter(const fs::path& path, const std::vector<std::string>& header, bool append = false)
      : path_(path) {
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw IoError("cannot write " + path.string());
    out_ << std::setprecision(12);
    if (append) return;
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
  }

  template <typename... Ts>
  void row(const Ts&... cells) {
    std::size_t i = 0;
    ((out_ << (i++ ? "," : "") << cells), ...);
    out_ << '\n';
    if (!out_) throw IoError("failed writing " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path prepare_dir(const std::string& option, const std::string& config_dir = "") {
  const fs::path dir = resolve_output_dir(option, config_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

LoadedCheckpoint require_checkpoint(const std::string& path) {
  if (path.empty()) throw UsageError("a checkpoint directory is required");
  return load_checkpoint(path);
}

ExperimentConfig checkpoint_config(const LoadedCheckpoint& ck) {
  if (ck.config) return *ck.config;
  ExperimentConfig c;
  c.model = ck.spec;
  return c;
}

std::string metric_name(const Dataset& data) { return data.is_sequence() ? "perplexity" : "accuracy"; }

double metric_value(const Dataset& data, const EvalMetrics& m) {
  return data.is_sequence() ? m.perplexity : m.accuracy;
}

const ClassificationDataset& require_classification(const Dataset& data, const char* verb) {
  const auto* c = dynamic_cast<const ClassificationDataset*>(&data);
  if (!c) throw ConfigError(std::string(verb) + " needs a classification task");
  return *c;
}

ModelSpec fixture_spec(const std::string& name, std::size_t groups) {
  if (name == "vgg13") return vgg13_spec(groups);
  throw UsageError("unknown built-in model '" + name + "' (expected vgg13)");
}

std::vector<double> fixture_rates() { return {0.375, 0.5, 0.625, 0.75, 0.875, 1.0}; }

}  // namespace

fs::path resolve_output_dir(const std::string& option, const std::string& config_dir) {
  if (!option.empty()) return option;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  if (!config_dir.empty()) return config_dir;
  return "slicenet_out";
}

std::unique_ptr<Dataset> load_task_data(const ExperimentConfig& config, const std::string& path) {
  const Task task = parse_task(config.task);
  const ModelSpec& spec = config.model;
  if (task == Task::kCharLm) {
    if (spec.input_shape.size() != 1) throw ConfigError("charlm input_shape must be {sequence length}");
    auto corpus = path.empty() ? make_char_corpus(config.data_size, config.seed)
                               : read_corpus(path, spec.classes);
    return std::make_unique<SequenceDataset>(std::move(corpus), spec.input_shape[0], spec.classes);
  }
  if (path.empty()) {
    return std::make_unique<ClassificationDataset>(
        task == Task::kSpirals ? make_spirals(config.data_size, config.seed)
                               : make_tinyimages(config.data_size, config.seed));
  }
  return std::make_unique<ClassificationDataset>(
      read_classification_csv(path, spec.input_shape, spec.classes));
}

json cmd_gen_data(const GenDataOptions& o) {
  const Task task = parse_task(o.task);
  if (o.size == 0) throw UsageError("--size must be positive");
  const fs::path dir = prepare_dir(o.out);
  const fs::path file = dir / (task_name(task) + (task == Task::kCharLm ? ".txt" : ".csv"));
  generate_task_file(task, o.size, o.seed, file);
  json summary{{"command", "gen-data"},
               {"task", task_name(task)},
               {"seed", o.seed},
               {"size", o.size},
               {"file", file.string()}};
  write_json(dir / "gen_data.json", summary);
  return summary;
}

json cmd_train(const TrainOptions& o) {
  std::optional<LoadedCheckpoint> ck;
  ExperimentConfig cfg;
  if (!o.resume.empty()) {
    ck = load_checkpoint(o.resume);
    if (!o.config.empty()) {
      cfg = load_config(o.config);
    } else if (ck->config) {
      cfg = *ck->config;
    } else {
      throw ConfigError("checkpoint " + o.resume + " carries no config; pass --config");
    }
    if (!(cfg.model == ck->spec)) throw ConfigError("config model differs from the checkpoint model");
  } else {
    if (o.config.empty()) throw UsageError("train needs --config or --resume");
    cfg = load_config(o.config);
  }
  cfg.validate();
  std::unique_ptr<Network> net = ck ? std::move(ck->network) : make_network(cfg.model, cfg.seed);
  TrainConfig tc = cfg.train;
  tc.slice_rates = cfg.slice_rates().rates();
  Trainer trainer(*net, tc);
  if (ck) ck->restore(trainer);
  const auto data = load_task_data(cfg, o.data);

  const fs::path dir = prepare_dir(o.out, cfg.output_dir);
  // A resumed run continuing in the same directory extends the existing log.
  CsvWriter metrics(dir / "metrics.csv",
                    {"epoch", "rate", "loss", "accuracy", "perplexity", "wall_seconds"},
                    ck.has_value() && fs::exists(dir / "metrics.csv"));
  json last = json::array();
  const auto started = std::chrono::steady_clock::now();
  trainer.run(
      *data,
      [&](const EpochMetrics& m) {
        metrics.row(m.epoch, m.rate, m.loss, m.accuracy, m.perplexity, m.wall_seconds);
        if (m.rate == tc.slice_rates.front()) last = json::array();
        last.push_back({{"rate", m.rate},
                        {"loss", m.loss},
                        {"accuracy", m.accuracy},
                        {"perplexity", m.perplexity}});
      },
      nullptr, o.max_epochs == 0 ? SIZE_MAX : o.max_epochs);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  save_checkpoint(dir / "checkpoint", *net, &cfg, &trainer);
  save_config(dir / "config.ini", cfg);
  json summary{{"command", "train"},
               {"task", cfg.task},
               {"scheme", tc.scheme},
               {"slice_rates", tc.slice_rates},
               {"epochs_completed", trainer.state().epoch},
               {"epochs_total", tc.epochs},
               {"steps", trainer.state().step},
               {"seconds", seconds},
               {"final", last},
               {"checkpoint", (dir / "checkpoint").string()},
               {"metrics", (dir / "metrics.csv").string()}};
  write_json(dir / "train.json", summary);
  return summary;
}

json cmd_eval(const EvalOptions& o) {
  LoadedCheckpoint ck = require_checkpoint(o.checkpoint);
  const ExperimentConfig cfg = checkpoint_config(ck);
  const auto data = load_task_data(cfg, o.data);
  const std::vector<double> rates = o.rates.empty() ? cfg.slice_rates().rates() : o.rates;
  const fs::path dir = prepare_dir(o.out);
  CsvWriter csv(dir / "eval.csv", {"rate", "loss", "accuracy", "perplexity", "targets"});
  json rows = json::array();
  for (double r : rates) {
    const EvalMetrics m = evaluate(*ck.network, r, *data);
    csv.row(r, m.loss, m.accuracy, m.perplexity, m.targets);
    rows.push_back({{"rate", r},
                    {"loss", m.loss},
                    {"accuracy", m.accuracy},
                    {"perplexity", m.perplexity},
                    {"targets", m.targets}});
  }
  json summary{{"command", "eval"}, {"task", cfg.task}, {"metric", metric_name(*data)}, {"rates", rows}};
  write_json(dir / "eval.json", summary);
  return summary;
}

json cmd_sweep(const SweepOptions& o) {
  std::optional<LoadedCheckpoint> ck;
  ModelSpec spec;
  std::optional<ExperimentConfig> cfg;
  std::vector<double> rates = o.rates;
  if (!o.checkpoint.empty()) {
    ck = load_checkpoint(o.checkpoint);
    spec = ck->spec;
    cfg = checkpoint_config(*ck);
  } else if (!o.config.empty()) {
    cfg = load_config(o.config);
    spec = cfg->model;
  } else if (!o.model.empty()) {
    spec = fixture_spec(o.model, o.groups);
    if (rates.empty()) rates = fixture_rates();
  } else {
    throw UsageError("sweep needs --checkpoint, --config or --model");
  }
  if (rates.empty()) rates = cfg->slice_rates().rates();
  std::unique_ptr<Dataset> data;
  if (ck && cfg) data = load_task_data(*cfg, o.data);

  const fs::path dir = prepare_dir(o.out);
  CsvWriter csv(dir / "sweep.csv",
                {"rate", "effective_rate", "params", "flops", "flops_ratio", "metric", "note"});
  const double full_flops = static_cast<double>(count_flops(spec, 1.0));
  json rows = json::array();
  for (double r : rates) {
    validate_rate(r);
    const double groups = static_cast<double>(spec.groups);
    const double g = std::max(1.0, std::floor(r * groups + 1e-9));
    const double eff = g / groups;
    std::string note;
    if (std::abs(eff - r) > 1e-9) {
      std::ostringstream msg;
      msg << "rounded down from " << r;
      note = msg.str();
    }
    const auto params = count_params(spec, eff);
    const auto flops = count_flops(spec, eff);
    const double ratio = full_flops > 0 ? static_cast<double>(flops) / full_flops : 1.0;
    json row{{"rate", r},        {"effective_rate", eff}, {"params", params},
             {"flops", flops},   {"flops_ratio", ratio},  {"note", note}};
    if (data) {
      const double metric = metric_value(*data, evaluate(*ck->network, eff, *data));
      row["metric"] = metric;
      csv.row(r, eff, params, flops, ratio, metric, note);
    } else {
      row["metric"] = nullptr;
      csv.row(r, eff, params, flops, ratio, "", note);
    }
    rows.push_back(row);
  }
  json summary{{"command", "sweep"},
               {"metric", data ? json(metric_name(*data)) : json(nullptr)},
               {"rows", rows}};
  write_json(dir / "sweep.json", summary);
  return summary;
}

json cmd_cost(const CostOptions& o) {
  ModelSpec spec;
  std::vector<double> rates = o.rates;
  if (!o.config.empty()) {
    const ExperimentConfig cfg = load_config(o.config);
    spec = cfg.model;
    if (rates.empty()) rates = cfg.slice_rates().rates();
  } else if (!o.model.empty()) {
    spec = fixture_spec(o.model, o.groups);
    if (rates.empty()) rates = fixture_rates();
  } else {
    throw UsageError("cost needs --config or --model");
  }
  const fs::path dir = prepare_dir(o.out);
  CsvWriter csv(dir / "cost.csv", {"rate", "layer", "kind", "params", "flops"});
  json rows = json::array();
  for (double r : rates) {
    const CostReport report = cost_report(spec, r);
    for (const CostRow& row : report.rows) csv.row(r, row.layer, row.kind, row.params, row.flops);
    rows.push_back({{"rate", r},
                    {"params", report.total_params},
                    {"flops", report.total_flops},
                    {"params_ratio", report.params_ratio},
                    {"flops_ratio", report.flops_ratio},
                    {"sliced_flops_ratio", report.sliced_flops_ratio}});
  }
  json summary{{"command", "cost"}, {"rates", rows}};
  write_json(dir / "cost.json", summary);
  return summary;
}

json cmd_simulate(const SimulateOptions& o) {
  if (o.trace.empty()) throw UsageError("simulate needs --trace");
  const QueryStream stream = read_trace(o.trace);
  LatencyPolicy policy;
  policy.latency = o.latency;
  policy.sample_time = o.sample_time;
  policy.rates = SliceRateList(o.rates);
  const SimulationResult result = simulate_workload(stream, policy);

  const fs::path dir = prepare_dir(o.out);
  CsvWriter csv(dir / "events.csv", {"batch_id", "close_time", "n", "rate", "proc_time", "max_latency"});
  json schedule = json::array();
  bool all_fit = true;
  for (const BatchEvent& e : result.events) {
    csv.row(e.batch_id, e.close_time, e.n, e.rate, e.proc_time, e.max_latency);
    schedule.push_back(e.rate);
    all_fit = all_fit && e.proc_time <= policy.interval() * (1.0 + 1e-9);
  }
  const SimulationSummary& s = result.summary;
  json summary{{"command", "simulate"},
               {"latency", o.latency},
               {"sample_time", o.sample_time},
               {"queries", s.queries},
               {"batches", s.batches},
               {"max_latency", s.max_latency},
               {"mean_latency", s.mean_latency},
               {"violations", s.violations},
               {"overloaded_windows", s.overloaded_windows},
               {"all_batches_fit", all_fit},
               {"rate_schedule", schedule}};
  write_json(dir / "simulate.json", summary);
  return summary;
}

json cmd_cascade(const CascadeOptions& o) {
  LoadedCheckpoint ck = require_checkpoint(o.checkpoint);
  const ExperimentConfig cfg = checkpoint_config(ck);
  const auto data = load_task_data(cfg, o.data);
  const auto& labeled = require_classification(*data, "cascade");
  const std::vector<double> rates = o.rates.empty() ? cfg.slice_rates().rates() : o.rates;
  if (!o.independent.empty() && o.independent.size() != rates.size()) {
    throw UsageError("give one independent model per cascade stage");
  }

  auto pipeline_json = [&](const std::vector<CascadeStage>& stages) {
    const auto metrics = cascade_evaluate(stages, labeled.labels());
    std::vector<std::set<std::size_t>> errors;
    for (const auto& s : stages) errors.push_back(error_set(s.predictions, labeled.labels()));
    json stage_rows = json::array();
    for (const StageMetrics& m : metrics) {
      stage_rows.push_back({{"stage", m.stage},
                            {"rate", m.rate},
                            {"params", m.params},
                            {"flops", m.flops},
                            {"precision", m.precision},
                            {"accuracy", m.accuracy},
                            {"aggregate_recall", m.aggregate_recall},
                            {"survivors", m.survivors}});
    }
    json inclusion = json::array();
    for (std::size_t i = 0; i < errors.size(); ++i) {
      for (std::size_t j = i + 1; j < errors.size(); ++j) {
        inclusion.push_back({{"small", i + 1},
                             {"large", j + 1},
                             {"coefficient", inclusion_coefficient(errors[i], errors[j])}});
      }
    }
    return std::make_pair(metrics, json{{"stages", stage_rows}, {"inclusion", inclusion}});
  };

  std::vector<CascadeStage> sliced;
  for (double r : rates) {
    sliced.push_back({r, count_params(ck.spec, r), count_flops(ck.spec, r),
                      predict(*ck.network, r, *data)});
  }
  const auto [sliced_metrics, sliced_json] = pipeline_json(sliced);

  const fs::path dir = prepare_dir(o.out);
  CsvWriter csv(dir / "cascade.csv",
                {"stage", "rate", "params", "flops", "precision", "aggregate_recall", "survivors"});
  for (const StageMetrics& m : sliced_metrics) {
    csv.row(m.stage, m.rate, m.params, m.flops, m.precision, m.aggregate_recall, m.survivors);
  }
  json summary{{"command", "cascade"}, {"items", labeled.size()}, {"sliced", sliced_json}};

  if (!o.independent.empty()) {
    std::vector<CascadeStage> fixed;
    for (std::size_t k = 0; k < rates.size(); ++k) {
      LoadedCheckpoint m = load_checkpoint(o.independent[k]);
      std::vector<std::size_t> pred;
      try {
        pred = predict(*m.network, 1.0, *data);
      } catch (const DimensionError& e) {
        throw ConfigError("stage " + std::to_string(k + 1) + " model does not accept the items: " +
                          e.what());
      }
      fixed.push_back({rates[k], count_params(m.spec, 1.0), count_flops(m.spec, 1.0), std::move(pred)});
    }
    const auto [fixed_metrics, fixed_json] = pipeline_json(fixed);
    CsvWriter ind(dir / "cascade_independent.csv",
                  {"stage", "rate", "params", "flops", "precision", "aggregate_recall", "survivors"});
    for (const StageMetrics& m : fixed_metrics) {
      ind.row(m.stage, m.rate, m.params, m.flops, m.precision, m.aggregate_recall, m.survivors);
    }
    summary["independent"] = fixed_json;
  }
  write_json(dir / "cascade.json", summary);
  return summary;
}

json cmd_widen(const WidenOptions& o) {
  LoadedCheckpoint ck = require_checkpoint(o.checkpoint);
  auto* net = dynamic_cast<SequentialNetwork*>(ck.network.get());
  if (!net) throw ConfigError("widen supports sequential models only");
  const ExperimentConfig cfg = checkpoint_config(ck);
  const auto data = load_task_data(cfg, o.data);
  const auto& labeled = require_classification(*data, "widen");
  WidenMode mode;
  if (o.mode == "exact") {
    mode = WidenMode::kExact;
  } else if (o.mode == "approx") {
    mode = WidenMode::kApprox;
  } else {
    throw UsageError("--mode must be exact or approx");
  }
  constexpr std::uint64_t kToken = 1;
  const ActivationCache cache = run_and_cache(*net, labeled.features(), o.from, kToken);
  const WidenOutcome w = widen_model(*net, cache, labeled.features(), kToken, o.to, mode);
  Tape tape;
  std::vector<std::size_t> all(labeled.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Tensor direct = net->forward(tape, labeled.batch(all), o.to).value();

  const std::size_t classes = direct.dim(1);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < direct.dim(0); ++i) {
    auto argmax = [&](const Tensor& t) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c) {
        if (t[i * classes + c] > t[i * classes + best]) best = c;
      }
      return best;
    };
    agree += argmax(direct) == argmax(w.output);
  }
  const fs::path dir = prepare_dir(o.out);
  CsvWriter csv(dir / "widen.csv", {"layer", "flops", "full_flops", "error_bound", "reused"});
  for (const LayerWidenStats& s : w.layers) {
    csv.row(s.layer, s.flops, s.full_flops, s.error_bound, s.reused ? 1 : 0);
  }
  json summary{{"command", "widen"},
               {"mode", o.mode},
               {"from", o.from},
               {"to", o.to},
               {"items", labeled.size()},
               {"max_deviation", max_abs_diff(direct, w.output)},
               {"agreement", static_cast<double>(agree) / static_cast<double>(direct.dim(0))},
               {"flops", w.flops},
               {"full_flops", w.full_flops},
               {"flops_ratio", w.full_flops ? static_cast<double>(w.flops) / static_cast<double>(w.full_flops) : 0.0},
               {"max_error_bound", w.max_error_bound}};
  write_json(dir / "widen.json", summary);
  return summary;
}

}  // namespace slicenet
