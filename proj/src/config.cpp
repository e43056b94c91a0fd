#include "slicenet/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "slicenet/error.hpp"

namespace slicenet {

namespace pt = boost::property_tree;

namespace {

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (std::size_t i = 0; i < values.size(); ++i) out << (i ? " " : "") << values[i];
  return out.str();
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

class Section {
 public:
  Section(const pt::ptree& root, const std::string& name) : name_(name) {
    if (const auto child = root.get_child_optional(name)) tree_ = &*child;
  }

  std::string text(const std::string& key, const std::string& fallback) {
    seen_.insert(key);
    if (!tree_) return fallback;
    const auto v = tree_->get_optional<std::string>(key);
    return v ? trim(*v) : fallback;
  }

  double real(const std::string& key, double fallback) {
    const std::string v = text(key, "");
    if (v.empty()) return fallback;
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError(where(key) + ": '" + v + "' is not a number");
    }
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    const std::string v = text(key, "");
    if (v.empty()) return fallback;
    try {
      std::size_t pos = 0;
      const long long n = std::stoll(v, &pos);
      if (pos != v.size() || n < 0) throw std::invalid_argument(v);
      return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
      throw ConfigError(where(key) + ": '" + v + "' is not a nonnegative integer");
    }
  }

  bool flag(const std::string& key, bool fallback) {
    const std::string v = text(key, "");
    if (v.empty()) return fallback;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(where(key) + ": '" + v + "' is not a boolean");
  }

  bool has(const std::string& key) const {
    return tree_ && tree_->get_optional<std::string>(key).has_value();
  }

  std::vector<double> reals(const std::string& key, const std::vector<double>& fallback) {
    if (!has(key)) return seen_.insert(key), fallback;
    std::vector<double> out;
    for (const std::string& w : words(text(key, ""))) {
      try {
        out.push_back(std::stod(w));
      } catch (const std::exception&) {
        throw ConfigError(where(key) + ": '" + w + "' is not a number");
      }
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key, const std::vector<std::size_t>& fallback) {
    if (!has(key)) return seen_.insert(key), fallback;
    std::vector<std::size_t> out;
    for (const std::string& w : words(text(key, ""))) {
      try {
        out.push_back(static_cast<std::size_t>(std::stoull(w)));
      } catch (const std::exception&) {
        throw ConfigError(where(key) + ": '" + w + "' is not an integer");
      }
    }
    return out;
  }

  void reject_unknown() const {
    if (!tree_) return;
    for (const auto& [key, value] : *tree_) {
      if (!seen_.count(key)) throw ConfigError("unknown key " + where(key));
    }
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }
  std::string where(const std::string& key) const { return "[" + name_ + "] " + key; }

  std::string name_;
  const pt::ptree* tree_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

SliceRateList ExperimentConfig::slice_rates() const {
  if (!train.slice_rates.empty()) return SliceRateList(train.slice_rates);
  return SliceRateList::from_groups(GroupSpec(model.groups, model.groups), lower_bound);
}

void ExperimentConfig::validate() const {
  parse_task(task);
  if (data_size == 0) throw ConfigError("data_size must be positive");
  resolve_architecture(model);
  const SliceRateList rates = slice_rates();
  rates.require_boundaries(GroupSpec(model.groups, model.groups));
  TrainConfig t = train;
  t.slice_rates = rates.rates();
  t.validate();
}

ExperimentConfig default_config(Task task) {
  ExperimentConfig c;
  c.task = task_name(task);
  c.model.groups = 4;
  c.model.classes = task_classes(task);
  switch (task) {
    case Task::kSpirals:
      c.data_size = 1000;
      c.model.input_shape = {2};
      c.model.layers = {"dense:64", "tanh", "dense:64", "tanh"};
      c.train.epochs = 60;
      c.train.batch_size = 32;
      c.train.lr.initial = 0.05;
      c.train.weight_decay = 1e-4;
      break;
    case Task::kTinyImages:
      c.data_size = 800;
      c.model.input_shape = {1, 8, 8};
      c.model.layers = {"conv:16:3:1:1", "gn", "relu", "maxpool:2", "conv:32:3:1:1", "gn", "relu",
                        "gap"};
      c.train.epochs = 10;
      c.train.batch_size = 32;
      c.train.lr.initial = 0.05;
      c.train.weight_decay = 1e-4;
      break;
    case Task::kCharLm:
      c.data_size = 4096;
      c.model.arch = "char_lstm";
      c.model.input_shape = {16};
      c.model.embed = 16;
      c.model.hidden = 32;
      c.model.lstm_layers = 1;
      c.train.epochs = 8;
      c.train.batch_size = 16;
      c.train.lr.initial = 0.5;
      c.train.weight_decay = 0.0;
      break;
  }
  c.train.seed = c.seed;
  return c;
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree root;
  std::istringstream in(text);
  try {
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  for (const auto& [name, child] : root) {
    if (name != "experiment" && name != "model" && name != "train") {
      throw ConfigError("unknown config section [" + name + "]");
    }
  }
  Section ex(root, "experiment");
  ExperimentConfig c = default_config(parse_task(ex.text("task", "spirals")));
  c.seed = ex.count("seed", c.seed);
  c.data_size = ex.count("data_size", c.data_size);
  c.output_dir = ex.text("output_dir", c.output_dir);
  ex.reject_unknown();

  Section m(root, "model");
  ModelSpec& s = c.model;
  s.arch = m.text("arch", s.arch);
  s.input_shape = m.counts("input_shape", s.input_shape);
  if (m.has("layers")) s.layers = words(m.text("layers", ""));
  s.classes = m.count("classes", s.classes);
  s.groups = m.count("groups", s.groups);
  s.slice_input = m.flag("slice_input", s.slice_input);
  s.slice_output = m.flag("slice_output", s.slice_output);
  s.rescale_output = m.flag("rescale_output", s.rescale_output);
  s.epsilon = m.real("epsilon", s.epsilon);
  s.embed = m.count("embed", s.embed);
  s.hidden = m.count("hidden", s.hidden);
  s.lstm_layers = m.count("lstm_layers", s.lstm_layers);
  s.slice_embedding = m.flag("slice_embedding", s.slice_embedding);
  s.dropout = m.real("dropout", s.dropout);
  m.reject_unknown();

  Section t(root, "train");
  TrainConfig& tc = c.train;
  tc.epochs = t.count("epochs", tc.epochs);
  tc.batch_size = t.count("batch_size", tc.batch_size);
  tc.lr.initial = t.real("lr", tc.lr.initial);
  tc.lr.milestones = t.reals("lr_milestones", tc.lr.milestones);
  tc.lr.factor = t.real("lr_factor", tc.lr.factor);
  tc.momentum = t.real("momentum", tc.momentum);
  tc.weight_decay = t.real("weight_decay", tc.weight_decay);
  tc.scheme = t.text("scheme", tc.scheme);
  c.lower_bound = t.real("lower_bound", c.lower_bound);
  tc.slice_rates = t.reals("slice_rates", tc.slice_rates);
  tc.rate_loss_weights = t.reals("rate_loss_weights", tc.rate_loss_weights);
  tc.average_over_schedule = t.flag("average_over_schedule", tc.average_over_schedule);
  tc.decay_touched_only = t.flag("decay_touched_only", tc.decay_touched_only);
  t.reject_unknown();
  tc.seed = c.seed;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  const ModelSpec& s = c.model;
  const TrainConfig& t = c.train;
  auto b = [](bool v) { return v ? "true" : "false"; };
  std::ostringstream out;
  out << "[experiment]\n"
      << "task = " << c.task << "\n"
      << "seed = " << c.seed << "\n"
      << "data_size = " << c.data_size << "\n"
      << "output_dir = " << c.output_dir << "\n\n"
      << "[model]\n"
      << "arch = " << s.arch << "\n"
      << "input_shape = " << join(s.input_shape) << "\n"
      << "layers = " << join(s.layers) << "\n"
      << "classes = " << s.classes << "\n"
      << "groups = " << s.groups << "\n"
      << "slice_input = " << b(s.slice_input) << "\n"
      << "slice_output = " << b(s.slice_output) << "\n"
      << "rescale_output = " << b(s.rescale_output) << "\n"
      << "epsilon = " << format_double(s.epsilon) << "\n"
      << "embed = " << s.embed << "\n"
      << "hidden = " << s.hidden << "\n"
      << "lstm_layers = " << s.lstm_layers << "\n"
      << "slice_embedding = " << b(s.slice_embedding) << "\n"
      << "dropout = " << format_double(s.dropout) << "\n\n"
      << "[train]\n"
      << "epochs = " << t.epochs << "\n"
      << "batch_size = " << t.batch_size << "\n"
      << "lr = " << format_double(t.lr.initial) << "\n"
      << "lr_milestones = " << join(t.lr.milestones) << "\n"
      << "lr_factor = " << format_double(t.lr.factor) << "\n"
      << "momentum = " << format_double(t.momentum) << "\n"
      << "weight_decay = " << format_double(t.weight_decay) << "\n"
      << "scheme = " << t.scheme << "\n"
      << "lower_bound = " << format_double(c.lower_bound) << "\n"
      << "slice_rates = " << join(t.slice_rates) << "\n"
      << "rate_loss_weights = " << join(t.rate_loss_weights) << "\n"
      << "average_over_schedule = " << b(t.average_over_schedule) << "\n"
      << "decay_touched_only = " << b(t.decay_touched_only) << "\n";
  return out.str();
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << serialize_config(config);
}

}  // namespace slicenet
