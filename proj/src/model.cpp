#include "slicenet/model.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <sstream>

#include "slicenet/error.hpp"
#include "slicenet/kernels.hpp"

namespace slicenet {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv: return "conv";
    case LayerKind::kGroupNorm: return "groupnorm";
    case LayerKind::kActivation: return "activation";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kGlobalAvgPool: return "gap";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kEmbedding: return "embedding";
    case LayerKind::kLstm: return "lstm";
  }
  return "unknown";
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::size_t parse_count(const std::string& token, const std::string& field) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(field, &pos);
    if (pos != field.size() || v <= 0) throw std::invalid_argument(field);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("layer token '" + token + "': '" + field + "' is not a positive integer");
  }
}

std::vector<LayerPlan> resolve_sequential(const ModelSpec& spec) {
  const std::size_t groups = spec.groups;
  if (spec.input_shape.size() != 1 && spec.input_shape.size() != 3) {
    throw ConfigError("sequential input shape must be {features} or {C, H, W}, got " +
                      to_string(spec.input_shape));
  }
  auto axis_spec = [&](std::size_t width, bool sliced) {
    return sliced ? GroupSpec(width, groups) : GroupSpec::fixed(width);
  };
  bool spatial = spec.input_shape.size() == 3;
  std::size_t h = spatial ? spec.input_shape[1] : 1;
  std::size_t w = spatial ? spec.input_shape[2] : 1;
  GroupSpec current = axis_spec(spec.input_shape[0], spec.slice_input);

  std::vector<LayerPlan> plan;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const std::string& token = spec.layers[i];
    const auto fields = split(token, ':');
    if (fields.empty()) throw ConfigError("empty layer token");
    const std::string& kind = fields[0];
    LayerPlan p;
    p.in_spec = current;
    p.out_spec = current;
    p.in_h = p.out_h = h;
    p.in_w = p.out_w = w;
    if (kind == "dense") {
      if (fields.size() != 2) throw ConfigError("expected dense:N, got '" + token + "'");
      if (spatial) throw ConfigError("'" + token + "' needs a flatten or gap before it");
      p.kind = LayerKind::kDense;
      p.name = "dense" + std::to_string(i);
      p.out_spec = GroupSpec(parse_count(token, fields[1]), groups);
    } else if (kind == "conv") {
      if (fields.size() < 3 || fields.size() > 5) {
        throw ConfigError("expected conv:N:k[:stride[:pad]], got '" + token + "'");
      }
      if (!spatial) throw ConfigError("'" + token + "' needs a spatial input");
      p.kind = LayerKind::kConv;
      p.name = "conv" + std::to_string(i);
      p.kernel = parse_count(token, fields[2]);
      if (p.kernel % 2 == 0) throw ConfigError("'" + token + "': kernel size must be odd");
      p.stride = fields.size() > 3 ? parse_count(token, fields[3]) : 1;
      p.padding = p.kernel / 2;
      if (fields.size() > 4) p.padding = fields[4] == "0" ? 0 : parse_count(token, fields[4]);
      p.out_spec = GroupSpec(parse_count(token, fields[1]), groups);
      p.out_h = kernels::conv_output_extent(h, p.kernel, p.stride, p.padding);
      p.out_w = kernels::conv_output_extent(w, p.kernel, p.stride, p.padding);
    } else if (kind == "gn") {
      p.kind = LayerKind::kGroupNorm;
      p.name = "gn" + std::to_string(i);
    } else if (kind == "relu" || kind == "tanh" || kind == "sigmoid") {
      p.kind = LayerKind::kActivation;
      p.name = kind + std::to_string(i);
      p.activation = kind;
    } else if (kind == "maxpool") {
      if (fields.size() != 2 || !spatial) throw ConfigError("bad pooling layer '" + token + "'");
      p.kind = LayerKind::kMaxPool;
      p.name = "maxpool" + std::to_string(i);
      p.window = parse_count(token, fields[1]);
      if (h % p.window || w % p.window) {
        throw ConfigError("'" + token + "' does not tile " + std::to_string(h) + "x" +
                          std::to_string(w));
      }
      p.out_h = h / p.window;
      p.out_w = w / p.window;
    } else if (kind == "gap") {
      if (!spatial) throw ConfigError("gap needs a spatial input");
      p.kind = LayerKind::kGlobalAvgPool;
      p.name = "gap" + std::to_string(i);
      p.out_h = p.out_w = 1;
    } else if (kind == "flatten") {
      if (!spatial) throw ConfigError("flatten needs a spatial input");
      p.kind = LayerKind::kFlatten;
      p.name = "flatten" + std::to_string(i);
      p.out_spec = GroupSpec(current.total_width() * h * w, current.group_count());
      p.out_h = p.out_w = 1;
    } else if (kind == "dropout") {
      if (fields.size() != 2) throw ConfigError("expected dropout:p, got '" + token + "'");
      p.kind = LayerKind::kDropout;
      p.name = "dropout" + std::to_string(i);
      try {
        p.dropout = std::stod(fields[1]);
      } catch (const std::exception&) {
        throw ConfigError("'" + token + "': bad probability");
      }
      if (!(p.dropout >= 0.0 && p.dropout < 1.0)) {
        throw ConfigError("'" + token + "': probability must lie in [0, 1)");
      }
    } else {
      throw ConfigError("unknown layer token '" + token +
                        "' (valid: dense, conv, gn, relu, tanh, sigmoid, maxpool, gap, flatten, dropout)");
    }
    if (p.kind == LayerKind::kGlobalAvgPool || p.kind == LayerKind::kFlatten) spatial = false;
    current = p.out_spec;
    h = p.out_h;
    w = p.out_w;
    plan.push_back(std::move(p));
  }
  if (spatial) throw ConfigError("sequential model must end with gap or flatten before the output");
  LayerPlan out;
  out.kind = LayerKind::kDense;
  out.name = "output";
  out.in_spec = current;
  out.out_spec = axis_spec(spec.classes, spec.slice_output);
  out.rescale = spec.rescale_output;
  plan.push_back(std::move(out));
  return plan;
}

std::vector<LayerPlan> resolve_char_lstm(const ModelSpec& spec) {
  if (spec.input_shape.size() != 1 || spec.input_shape[0] == 0) {
    throw ConfigError("char_lstm input shape must be {sequence length}");
  }
  if (spec.embed == 0 || spec.hidden == 0 || spec.lstm_layers == 0 || spec.classes == 0) {
    throw ConfigError("char_lstm needs positive embed, hidden, lstm_layers and vocabulary");
  }
  const std::size_t steps = spec.input_shape[0];
  std::vector<LayerPlan> plan;
  LayerPlan emb;
  emb.kind = LayerKind::kEmbedding;
  emb.name = "embedding";
  emb.in_spec = GroupSpec::fixed(spec.classes);
  emb.out_spec = spec.slice_embedding ? GroupSpec(spec.embed, spec.groups)
                                      : GroupSpec::fixed(spec.embed);
  emb.steps = steps;
  plan.push_back(emb);
  GroupSpec current = emb.out_spec;
  for (std::size_t l = 0; l < spec.lstm_layers; ++l) {
    LayerPlan p;
    p.kind = LayerKind::kLstm;
    p.name = "lstm" + std::to_string(l);
    p.in_spec = current;
    p.out_spec = GroupSpec(spec.hidden, spec.groups);
    p.steps = steps;
    current = p.out_spec;
    plan.push_back(p);
  }
  LayerPlan out;
  out.kind = LayerKind::kDense;
  out.name = "output";
  out.in_spec = current;
  out.out_spec = spec.slice_output ? GroupSpec(spec.classes, spec.groups)
                                   : GroupSpec::fixed(spec.classes);
  out.rescale = spec.rescale_output;
  out.steps = steps;
  plan.push_back(out);
  return plan;
}

}  // namespace

std::vector<LayerPlan> resolve_architecture(const ModelSpec& spec) {
  if (spec.groups == 0) throw ConfigError("group count must be positive");
  if (spec.classes == 0) throw ConfigError("class count must be positive");
  if (!(spec.epsilon > 0.0)) throw ConfigError("normalization epsilon must be positive");
  if (spec.arch == "sequential") return resolve_sequential(spec);
  if (spec.arch == "char_lstm") return resolve_char_lstm(spec);
  throw ConfigError("unknown architecture '" + spec.arch + "' (valid: sequential, char_lstm)");
}

std::vector<const Parameter*> Network::parameters() const {
  auto params = const_cast<Network*>(this)->parameters();
  return {params.begin(), params.end()};
}

void Network::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

Var apply_activation(const std::string& function, Var x) {
  if (function == "relu") return ops::relu(x);
  if (function == "tanh") return ops::tanh(x);
  if (function == "sigmoid") return ops::sigmoid(x);
  throw ConfigError("unknown activation '" + function + "'");
}

Tensor dropout_mask(const Shape& full_shape, const Shape& active_shape, double probability,
                    std::mt19937_64& rng) {
  Tensor mask(full_shape);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep = 1.0 / (1.0 - probability);
  for (double& v : mask.data()) v = unit(rng) < probability ? 0.0 : keep;
  if (active_shape == full_shape) return mask;
  return kernels::narrow(mask, 1, 0, active_shape[1]);
}

namespace {

double he_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

}  // namespace

SequentialNetwork::SequentialNetwork(ModelSpec spec, std::uint64_t seed)
    : Network(std::move(spec)), plan_(resolve_architecture(this->spec())) {
  if (this->spec().arch != "sequential") throw ConfigError("SequentialNetwork needs arch=sequential");
  std::mt19937_64 rng(seed);
  for (const LayerPlan& p : plan_) {
    switch (p.kind) {
      case LayerKind::kDense: {
        SlicedDense d(p.name, p.in_spec, p.out_spec, p.rescale);
        const std::size_t fan_in = p.in_spec.total_width();
        init_uniform(d.weight, p.name == "output" ? 1.0 / std::sqrt(static_cast<double>(fan_in))
                                                  : he_bound(fan_in),
                     rng);
        layers_.emplace_back(std::move(d));
        break;
      }
      case LayerKind::kConv: {
        SlicedConv2D c(p.name, p.in_spec, p.out_spec, p.kernel, p.stride, p.padding);
        init_uniform(c.kernels, he_bound(p.in_spec.total_width() * p.kernel * p.kernel), rng);
        layers_.emplace_back(std::move(c));
        break;
      }
      case LayerKind::kGroupNorm:
        layers_.emplace_back(SlicedGroupNorm(p.name, p.in_spec, this->spec().epsilon));
        break;
      case LayerKind::kActivation:
        layers_.emplace_back(Activation{p.name, p.activation});
        break;
      case LayerKind::kMaxPool:
        layers_.emplace_back(MaxPool{p.name, p.window});
        break;
      case LayerKind::kGlobalAvgPool:
        layers_.emplace_back(GlobalAvgPool{p.name});
        break;
      case LayerKind::kFlatten:
        layers_.emplace_back(Flatten{p.name});
        break;
      case LayerKind::kDropout:
        layers_.emplace_back(Dropout{p.name, p.dropout});
        break;
      default:
        throw ConfigError("layer kind not supported in a sequential network");
    }
  }
}

Var SequentialNetwork::input(Tape& tape, const Tensor& features, double rate) const {
  const Shape& expected = spec().input_shape;
  const Shape& got = features.shape();
  if (got.size() != expected.size() + 1 || !std::equal(expected.begin(), expected.end(), got.begin() + 1)) {
    throw DimensionError("input features " + to_string(got) + " do not match model input " +
                         to_string(expected) + " with a leading batch axis");
  }
  const std::size_t width = plan_.front().in_spec.slice_boundary(rate);
  if (width == got[1]) return tape.constant(features);
  return tape.constant(kernels::narrow(features, 1, 0, width));
}

Var forward_layer(Tape& tape, SequentialLayer& layer_variant, const LayerPlan& p, Var x,
                  double rate, const ForwardOptions& options) {
  return std::visit(
      [&](auto& layer) -> Var {
        using T = std::decay_t<decltype(layer)>;
        if constexpr (std::is_same_v<T, SlicedDense>) {
          return dense_forward(tape, layer, x, rate, rate);
        } else if constexpr (std::is_same_v<T, SlicedConv2D>) {
          return conv_forward(tape, layer, x, rate, rate);
        } else if constexpr (std::is_same_v<T, SlicedGroupNorm>) {
          return groupnorm_forward(tape, layer, x, rate);
        } else if constexpr (std::is_same_v<T, Activation>) {
          return apply_activation(layer.function, x);
        } else if constexpr (std::is_same_v<T, MaxPool>) {
          return ops::max_pool2d(x, layer.window);
        } else if constexpr (std::is_same_v<T, GlobalAvgPool>) {
          return ops::global_avg_pool(x);
        } else if constexpr (std::is_same_v<T, Flatten>) {
          const Shape& s = x.shape();
          return ops::reshape(x, {s[0], element_count(s) / s[0]});
        } else {
          if (!options.training || layer.probability == 0.0) return x;
          if (!options.rng) throw UsageError(layer.name + ": training dropout needs an rng");
          Shape full = x.shape();
          full[1] = p.in_spec.total_width();
          return ops::mul(x, tape.constant(dropout_mask(full, x.shape(), layer.probability,
                                                        *options.rng)));
        }
      },
      layer_variant);
}

Var SequentialNetwork::forward(Tape& tape, const Batch& batch, double rate,
                               const ForwardOptions& options) {
  validate_rate(rate);
  Var x = input(tape, batch.features, rate);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = forward_layer(tape, layers_[i], plan_[i], x, rate, options);
  }
  return x;
}

std::vector<Parameter*> SequentialNetwork::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers_) {
    std::visit(
        [&](auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, SlicedDense>) {
            out.push_back(&l.weight);
            out.push_back(&l.bias);
          } else if constexpr (std::is_same_v<T, SlicedConv2D>) {
            out.push_back(&l.kernels);
            out.push_back(&l.bias);
          } else if constexpr (std::is_same_v<T, SlicedGroupNorm>) {
            out.push_back(&l.gamma);
            out.push_back(&l.beta);
          }
        },
        layer);
  }
  return out;
}

CharLstmNetwork::CharLstmNetwork(ModelSpec spec, std::uint64_t seed)
    : Network(std::move(spec)),
      embed_spec_(GroupSpec::fixed(1)),
      output_("output", GroupSpec::fixed(1), GroupSpec::fixed(1)) {
  if (this->spec().arch != "char_lstm") throw ConfigError("CharLstmNetwork needs arch=char_lstm");
  const auto plan = resolve_architecture(this->spec());
  std::mt19937_64 rng(seed);
  embed_spec_ = plan.front().out_spec;
  embedding_ = Parameter("embedding", Tensor({this->spec().classes, this->spec().embed}));
  init_uniform(embedding_, 1.0, rng);
  for (std::size_t i = 1; i + 1 < plan.size(); ++i) {
    SlicedLSTM cell(plan[i].name, plan[i].in_spec, plan[i].out_spec);
    const double bound = 1.0 / std::sqrt(static_cast<double>(plan[i].out_spec.total_width()));
    init_uniform(cell.w_input, bound, rng);
    init_uniform(cell.w_hidden, bound, rng);
    const std::size_t h = plan[i].out_spec.total_width();
    for (std::size_t j = h; j < 2 * h; ++j) cell.bias.value[j] = 1.0;  // forget gate
    lstm_.push_back(std::move(cell));
  }
  const LayerPlan& out = plan.back();
  output_ = SlicedDense(out.name, out.in_spec, out.out_spec, out.rescale);
  init_uniform(output_.weight, 1.0 / std::sqrt(static_cast<double>(out.in_spec.total_width())), rng);
}

Var CharLstmNetwork::forward(Tape& tape, const Batch& batch, double rate,
                             const ForwardOptions& options) {
  validate_rate(rate);
  const std::size_t steps = batch.seq_len;
  const std::size_t bsz = batch.batch_size;
  if (steps == 0 || bsz == 0 || batch.tokens.size() != steps * bsz) {
    throw DimensionError("char_lstm batch needs batch_size x seq_len tokens, got " +
                         std::to_string(batch.tokens.size()) + " for " + std::to_string(bsz) +
                         "x" + std::to_string(steps));
  }
  const std::size_t g_e = embed_spec_.slice_boundary(rate);
  Var table = prefix(tape, embedding_, embedding_.value.dim(0), g_e);
  std::vector<LstmState> state;
  for (const auto& cell : lstm_) state.push_back(lstm_zero_state(tape, cell, bsz, rate));
  std::vector<Var> tops;
  std::vector<std::size_t> ids(bsz);
  const double p_drop = spec().dropout;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < bsz; ++b) ids[b] = batch.tokens[b * steps + t];
    Var x = ops::embedding(table, ids);
    for (std::size_t l = 0; l < lstm_.size(); ++l) {
      state[l] = lstm_step(tape, lstm_[l], x, state[l].h, state[l].c, rate);
      x = state[l].h;
    }
    if (options.training && p_drop > 0.0) {
      if (!options.rng) throw UsageError("training dropout needs an rng");
      Shape full = x.shape();
      full[1] = lstm_.back().hidden_spec.total_width();
      x = ops::mul(x, tape.constant(dropout_mask(full, x.shape(), p_drop, *options.rng)));
    }
    tops.push_back(x);
  }
  Var stacked = tops.size() == 1 ? tops.front() : ops::concat_all(tops, 0);
  return dense_forward(tape, output_, stacked, rate, rate);
}

std::vector<Parameter*> CharLstmNetwork::parameters() {
  std::vector<Parameter*> out{&embedding_};
  for (auto& cell : lstm_) {
    out.push_back(&cell.w_input);
    out.push_back(&cell.w_hidden);
    out.push_back(&cell.bias);
  }
  out.push_back(&output_.weight);
  out.push_back(&output_.bias);
  return out;
}

std::unique_ptr<Network> make_network(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.arch == "sequential") return std::make_unique<SequentialNetwork>(spec, seed);
  if (spec.arch == "char_lstm") return std::make_unique<CharLstmNetwork>(spec, seed);
  throw ConfigError("unknown architecture '" + spec.arch + "' (valid: sequential, char_lstm)");
}

}  // namespace slicenet
