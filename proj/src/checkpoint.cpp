#include "slicenet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "slicenet/error.hpp"

namespace slicenet {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "params.bin is written in host byte order, which must be little-endian");

json spec_to_json(const ModelSpec& s) {
  return {{"arch", s.arch},
          {"input_shape", s.input_shape},
          {"layers", s.layers},
          {"classes", s.classes},
          {"groups", s.groups},
          {"slice_input", s.slice_input},
          {"slice_output", s.slice_output},
          {"rescale_output", s.rescale_output},
          {"epsilon", s.epsilon},
          {"embed", s.embed},
          {"hidden", s.hidden},
          {"lstm_layers", s.lstm_layers},
          {"slice_embedding", s.slice_embedding},
          {"dropout", s.dropout}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.arch = j.at("arch").get<std::string>();
  s.input_shape = j.at("input_shape").get<Shape>();
  s.layers = j.at("layers").get<std::vector<std::string>>();
  s.classes = j.at("classes").get<std::size_t>();
  s.groups = j.at("groups").get<std::size_t>();
  s.slice_input = j.at("slice_input").get<bool>();
  s.slice_output = j.at("slice_output").get<bool>();
  s.rescale_output = j.at("rescale_output").get<bool>();
  s.epsilon = j.at("epsilon").get<double>();
  s.embed = j.at("embed").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::size_t>();
  s.lstm_layers = j.at("lstm_layers").get<std::size_t>();
  s.slice_embedding = j.at("slice_embedding").get<bool>();
  s.dropout = j.at("dropout").get<double>();
  return s;
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void set_rng_state(std::mt19937_64& rng, const std::string& state) {
  std::istringstream in(state);
  in >> rng;
  if (!in) throw DataError("checkpoint holds a malformed rng state");
}

struct ArrayWriter {
  json entries = json::array();
  std::vector<double> values;

  void add(const std::string& name, const Tensor& t) {
    entries.push_back({{"name", name}, {"shape", t.shape()}, {"offset", values.size()}});
    values.insert(values.end(), t.data().begin(), t.data().end());
  }
};

Tensor read_array(const json& entry, const std::vector<double>& values) {
  const Shape shape = entry.at("shape").get<Shape>();
  const std::size_t offset = entry.at("offset").get<std::size_t>();
  const std::size_t count = element_count(shape);
  if (offset + count > values.size()) {
    throw DataError("checkpoint array " + entry.at("name").get<std::string>() +
                    " extends past the end of params.bin");
  }
  return Tensor(shape, std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(offset),
                                           values.begin() + static_cast<std::ptrdiff_t>(offset + count)));
}

}  // namespace

void LoadedCheckpoint::restore(Trainer& trainer) const {
  if (!velocity.empty()) {
    auto& buffers = trainer.optimizer().velocity();
    if (buffers.size() != velocity.size()) {
      throw DataError("checkpoint momentum buffers do not match the optimizer");
    }
    for (std::size_t i = 0; i < velocity.size(); ++i) {
      if (buffers[i].shape() != velocity[i].shape()) {
        throw DataError("checkpoint momentum buffer " + std::to_string(i) + " has the wrong shape");
      }
      buffers[i] = velocity[i];
    }
  }
  if (progress) {
    TrainState& st = trainer.state();
    st.epoch = progress->epoch;
    st.step = progress->step;
    set_rng_state(st.data_rng, progress->data_rng);
    set_rng_state(st.schedule_rng, progress->schedule_rng);
  }
}

void save_checkpoint(const std::filesystem::path& dir, const Network& net,
                     const ExperimentConfig* config, const Trainer* trainer) {
  std::filesystem::create_directories(dir);
  ArrayWriter arrays;
  for (const Parameter* p : net.parameters()) arrays.add(p->name, p->value);
  json manifest{{"format", "slicenet-checkpoint"},
                {"version", kCheckpointVersion},
                {"model", spec_to_json(net.spec())},
                {"parameters", arrays.entries}};
  if (config) manifest["config"] = serialize_config(*config);
  if (trainer) {
    ArrayWriter velocity;
    velocity.values = std::move(arrays.values);
    const auto& buffers = trainer->optimizer().velocity();
    for (std::size_t i = 0; i < buffers.size(); ++i) {
      velocity.add("velocity." + std::to_string(i), buffers[i]);
    }
    arrays.values = std::move(velocity.values);
    manifest["velocity"] = velocity.entries;
    const TrainState& st = trainer->state();
    manifest["progress"] = {{"epoch", st.epoch},
                            {"step", st.step},
                            {"data_rng", rng_state(st.data_rng)},
                            {"schedule_rng", rng_state(st.schedule_rng)}};
  }
  manifest["value_count"] = arrays.values.size();

  std::ofstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw IoError("cannot write " + (dir / "params.bin").string());
  bin.write(reinterpret_cast<const char*>(arrays.values.data()),
            static_cast<std::streamsize>(arrays.values.size() * sizeof(double)));
  std::ofstream man(dir / "manifest.json");
  if (!man) throw IoError("cannot write " + (dir / "manifest.json").string());
  man << manifest.dump(2) << '\n';
  if (!bin || !man) throw IoError("failed writing checkpoint " + dir.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream man(dir / "manifest.json");
  if (!man) throw IoError("cannot read " + (dir / "manifest.json").string());
  json manifest;
  try {
    man >> manifest;
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  std::ifstream bin(dir / "params.bin", std::ios::binary | std::ios::ate);
  if (!bin) throw IoError("cannot read " + (dir / "params.bin").string());

  LoadedCheckpoint out;
  try {
    if (manifest.at("format") != "slicenet-checkpoint") throw DataError("not a slicenet checkpoint");
    if (manifest.at("version").get<int>() != kCheckpointVersion) {
      throw DataError("unsupported checkpoint version " + manifest.at("version").dump());
    }
    const std::size_t count = manifest.at("value_count").get<std::size_t>();
    const auto bytes = static_cast<std::size_t>(bin.tellg());
    if (bytes != count * sizeof(double)) {
      throw DataError("params.bin holds " + std::to_string(bytes) + " bytes, expected " +
                      std::to_string(count * sizeof(double)));
    }
    std::vector<double> values(count);
    bin.seekg(0);
    bin.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));

    out.spec = spec_from_json(manifest.at("model"));
    out.network = make_network(out.spec, 0);
    const auto params = out.network->parameters();
    const json& entries = manifest.at("parameters");
    if (entries.size() != params.size()) {
      throw DataError("checkpoint holds " + std::to_string(entries.size()) +
                      " parameter arrays, model expects " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor t = read_array(entries[i], values);
      if (entries[i].at("name") != params[i]->name || t.shape() != params[i]->value.shape()) {
        throw DataError("checkpoint array " + entries[i].at("name").get<std::string>() +
                        " does not match model parameter " + params[i]->name);
      }
      params[i]->value = std::move(t);
      params[i]->zero_grad();
    }
    if (manifest.contains("velocity")) {
      for (const json& e : manifest.at("velocity")) out.velocity.push_back(read_array(e, values));
    }
    if (manifest.contains("config")) out.config = parse_config(manifest.at("config").get<std::string>());
    if (manifest.contains("progress")) {
      const json& p = manifest.at("progress");
      out.progress = CheckpointProgress{p.at("epoch").get<std::size_t>(), p.at("step").get<std::size_t>(),
                                        p.at("data_rng").get<std::string>(),
                                        p.at("schedule_rng").get<std::string>()};
    }
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  return out;
}

}  // namespace slicenet
