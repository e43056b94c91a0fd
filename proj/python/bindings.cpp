#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "slicenet/applications.hpp"
#include "slicenet/commands.hpp"
#include "slicenet/config.hpp"
#include "slicenet/cost_model.hpp"
#include "slicenet/error.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace slicenet;

namespace {

template <typename T>
void take(const json& j, const char* key, T& field) {
  if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<T>();
}

// Options arrive as a JSON object so the Python layer can pass keyword
// arguments straight through. Unknown keys are rejected.
std::string run_command(const std::string& verb, const std::string& options) {
  const json o = json::parse(options);
  static const std::map<std::string, std::set<std::string>> known{
      {"gen-data", {"task", "seed", "size", "out"}},
      {"train", {"config", "data", "out", "resume", "max_epochs"}},
      {"eval", {"checkpoint", "data", "rates", "out"}},
      {"sweep", {"checkpoint", "config", "model", "groups", "data", "rates", "out"}},
      {"cost", {"config", "model", "groups", "rates", "out"}},
      {"simulate", {"trace", "latency", "sample_time", "rates", "out"}},
      {"cascade", {"checkpoint", "rates", "independent", "data", "out"}},
      {"widen", {"checkpoint", "data", "from", "to", "mode", "out"}},
  };
  const auto it = known.find(verb);
  if (it == known.end()) throw UsageError("unknown command '" + verb + "'");
  for (const auto& [key, value] : o.items()) {
    if (!it->second.count(key)) throw UsageError(verb + ": unknown option '" + key + "'");
  }
  json result;
  if (verb == "gen-data") {
    GenDataOptions g;
    take(o, "task", g.task), take(o, "seed", g.seed), take(o, "size", g.size), take(o, "out", g.out);
    result = cmd_gen_data(g);
  } else if (verb == "train") {
    TrainOptions t;
    take(o, "config", t.config), take(o, "data", t.data), take(o, "out", t.out);
    take(o, "resume", t.resume), take(o, "max_epochs", t.max_epochs);
    result = cmd_train(t);
  } else if (verb == "eval") {
    EvalOptions e;
    take(o, "checkpoint", e.checkpoint), take(o, "data", e.data), take(o, "rates", e.rates);
    take(o, "out", e.out);
    result = cmd_eval(e);
  } else if (verb == "sweep") {
    SweepOptions s;
    take(o, "checkpoint", s.checkpoint), take(o, "config", s.config), take(o, "model", s.model);
    take(o, "groups", s.groups), take(o, "data", s.data), take(o, "rates", s.rates), take(o, "out", s.out);
    result = cmd_sweep(s);
  } else if (verb == "cost") {
    CostOptions c;
    take(o, "config", c.config), take(o, "model", c.model), take(o, "groups", c.groups);
    take(o, "rates", c.rates), take(o, "out", c.out);
    result = cmd_cost(c);
  } else if (verb == "simulate") {
    SimulateOptions s;
    take(o, "trace", s.trace), take(o, "latency", s.latency), take(o, "sample_time", s.sample_time);
    take(o, "rates", s.rates), take(o, "out", s.out);
    result = cmd_simulate(s);
  } else if (verb == "cascade") {
    CascadeOptions c;
    take(o, "checkpoint", c.checkpoint), take(o, "rates", c.rates), take(o, "independent", c.independent);
    take(o, "data", c.data), take(o, "out", c.out);
    result = cmd_cascade(c);
  } else {
    WidenOptions w;
    take(o, "checkpoint", w.checkpoint), take(o, "data", w.data), take(o, "from", w.from);
    take(o, "to", w.to), take(o, "mode", w.mode), take(o, "out", w.out);
    result = cmd_widen(w);
  }
  return result.dump();
}

ModelSpec resolve_spec(const std::string& model, const std::string& config, std::size_t groups) {
  if (!config.empty()) return load_config(config).model;
  if (model == "vgg13") return vgg13_spec(groups);
  throw UsageError("pass config=<ini> or model='vgg13'");
}

}  // namespace

PYBIND11_MODULE(_slicenet, m) {
  m.doc() = "Bindings for the slicenet library";

  static py::exception<Error> base(m, "SlicenetError");
  static py::exception<ConfigError> config_error(m, "ConfigError", base.ptr());
  static py::exception<UsageError> usage_error(m, "UsageError", base.ptr());
  static py::exception<DataError> data_error(m, "DataError", base.ptr());
  static py::exception<IoError> io_error(m, "IoError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const UsageError& e) {
      py::set_error(usage_error, e.what());
    } catch (const DataError& e) {
      py::set_error(data_error, e.what());
    } catch (const IoError& e) {
      py::set_error(io_error, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def("run_command", &run_command, py::arg("verb"), py::arg("options_json"),
        "Run a CLI verb with JSON options; returns the JSON summary text.");

  m.def(
      "count_params",
      [](double rate, const std::string& model, const std::string& config, std::size_t groups) {
        return count_params(resolve_spec(model, config, groups), rate);
      },
      py::arg("rate"), py::arg("model") = "vgg13", py::arg("config") = "", py::arg("groups") = 8);
  m.def(
      "count_flops",
      [](double rate, const std::string& model, const std::string& config, std::size_t groups) {
        return count_flops(resolve_spec(model, config, groups), rate);
      },
      py::arg("rate"), py::arg("model") = "vgg13", py::arg("config") = "", py::arg("groups") = 8);
  m.def(
      "max_rate_for_budget",
      [](double budget, double full_cost, std::vector<double> rates) {
        return max_rate_for_budget(budget, full_cost, SliceRateList(std::move(rates)));
      },
      py::arg("budget"), py::arg("full_cost"), py::arg("rates"));

  m.def(
      "choose_rate",
      [](std::size_t n, double latency, double sample_time, std::vector<double> rates) {
        LatencyPolicy p{latency, sample_time, SliceRateList(std::move(rates))};
        p.validate();
        const RateChoice c = choose_rate_for_batch(p, n);
        return py::dict(py::arg("dispatched") = c.dispatched, py::arg("rate") = c.rate,
                        py::arg("sub_batches") = c.sub_batches, py::arg("overloaded") = c.overloaded);
      },
      py::arg("n"), py::arg("latency"), py::arg("sample_time"),
      py::arg("rates") = std::vector<double>{0.25, 0.5, 0.75, 1.0});

  m.def("inclusion_coefficient", &inclusion_coefficient, py::arg("errors_small"), py::arg("errors_large"));
}
