#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "slicenet/autodiff.hpp"
#include "slicenet/group_spec.hpp"
#include "slicenet/sliced_layers.hpp"

namespace slicenet {

/// Architecture description shared by model construction, cost accounting and
/// checkpoints.
///
/// `sequential`: `input_shape` is {features} or {C, H, W}; `layers` lists the
/// hidden stack as tokens (`dense:N`, `conv:N:k[:stride[:pad]]`, `gn`, `relu`,
/// `tanh`, `sigmoid`, `maxpool:w`, `gap`, `flatten`, `dropout:p`). A dense output
/// layer of width `classes` is appended automatically.
///
/// `char_lstm`: `input_shape` is {sequence length}; embedding of width `embed`,
/// `lstm_layers` LSTM layers of width `hidden`, dense output over `classes` tokens.
struct ModelSpec {
  std::string arch = "sequential";
  Shape input_shape;
  std::vector<std::string> layers;
  std::size_t classes = 2;
  std::size_t groups = 4;
  bool slice_input = false;
  bool slice_output = false;
  bool rescale_output = false;
  double epsilon = 1e-5;

  std::size_t embed = 0;
  std::size_t hidden = 0;
  std::size_t lstm_layers = 1;
  bool slice_embedding = false;
  double dropout = 0.0;

  bool operator==(const ModelSpec&) const = default;
};

enum class LayerKind {
  kDense,
  kConv,
  kGroupNorm,
  kActivation,
  kMaxPool,
  kGlobalAvgPool,
  kFlatten,
  kDropout,
  kEmbedding,
  kLstm,
};

const char* layer_kind_name(LayerKind kind);

/// One layer with all shapes resolved.
struct LayerPlan {
  LayerKind kind = LayerKind::kActivation;
  std::string name;
  GroupSpec in_spec = GroupSpec::fixed(1);
  GroupSpec out_spec = GroupSpec::fixed(1);
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t window = 0;
  std::size_t in_h = 1, in_w = 1, out_h = 1, out_w = 1;
  std::size_t steps = 1;  // timesteps for recurrent layers
  std::string activation;
  double dropout = 0.0;
  bool rescale = false;
};

/// Resolves layer shapes; throws ConfigError for infeasible specs (unknown
/// tokens, widths not divisible by the group count, bad spatial extents).
std::vector<LayerPlan> resolve_architecture(const ModelSpec& spec);

/// A mini-batch. Classification tasks fill `features` ([B x d] or [B x C x H x W]);
/// sequence tasks fill `tokens` ([B x T] row-major) with `seq_len` = T. `labels`
/// aligns with the rows of the network's logits (time-major for sequences).
struct Batch {
  Tensor features;
  std::vector<std::size_t> tokens;
  std::size_t seq_len = 0;
  std::size_t batch_size = 0;
  std::vector<std::size_t> labels;
};

struct ForwardOptions {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // dropout masks; required when training with dropout
};

class Network {
 public:
  explicit Network(ModelSpec spec) : spec_(std::move(spec)) {}
  virtual ~Network() = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const ModelSpec& spec() const noexcept { return spec_; }

  /// Logits of Subnet-r for the batch.
  virtual Var forward(Tape& tape, const Batch& batch, double rate,
                      const ForwardOptions& options = {}) = 0;
  /// Stable order, used by optimizers and checkpoints.
  virtual std::vector<Parameter*> parameters() = 0;

  std::vector<const Parameter*> parameters() const;
  void zero_grad();

 private:
  ModelSpec spec_;
};

struct Activation {
  std::string name;
  std::string function;  // relu | tanh | sigmoid
};
struct MaxPool {
  std::string name;
  std::size_t window;
};
struct GlobalAvgPool {
  std::string name;
};
struct Flatten {
  std::string name;
};
struct Dropout {
  std::string name;
  double probability;
};

using SequentialLayer = std::variant<SlicedDense, SlicedConv2D, SlicedGroupNorm, Activation,
                                     MaxPool, GlobalAvgPool, Flatten, Dropout>;

Var apply_activation(const std::string& function, Var x);

/// One layer of a sequential stack at slice rate `rate`.
Var forward_layer(Tape& tape, SequentialLayer& layer, const LayerPlan& plan, Var x, double rate,
                  const ForwardOptions& options = {});

class SequentialNetwork : public Network {
 public:
  SequentialNetwork(ModelSpec spec, std::uint64_t seed);

  Var forward(Tape& tape, const Batch& batch, double rate,
              const ForwardOptions& options = {}) override;
  std::vector<Parameter*> parameters() override;

  std::vector<SequentialLayer>& layers() noexcept { return layers_; }
  const std::vector<SequentialLayer>& layers() const noexcept { return layers_; }
  const std::vector<LayerPlan>& plan() const noexcept { return plan_; }

  /// Restricts raw input features to the active input width at `rate`.
  Var input(Tape& tape, const Tensor& features, double rate) const;

 private:
  std::vector<LayerPlan> plan_;
  std::vector<SequentialLayer> layers_;
};

class CharLstmNetwork : public Network {
 public:
  CharLstmNetwork(ModelSpec spec, std::uint64_t seed);

  Var forward(Tape& tape, const Batch& batch, double rate,
              const ForwardOptions& options = {}) override;
  std::vector<Parameter*> parameters() override;

  Parameter& embedding() noexcept { return embedding_; }
  std::vector<SlicedLSTM>& lstm() noexcept { return lstm_; }
  SlicedDense& output() noexcept { return output_; }

 private:
  Parameter embedding_;
  GroupSpec embed_spec_;
  std::vector<SlicedLSTM> lstm_;
  SlicedDense output_;
};

std::unique_ptr<Network> make_network(const ModelSpec& spec, std::uint64_t seed);

/// Dropout mask over the full width of `shape`'s axis 1, narrowed to the active
/// prefix. Entries are 0 or 1/(1-p).
Tensor dropout_mask(const Shape& full_shape, const Shape& active_shape, double probability,
                    std::mt19937_64& rng);

}  // namespace slicenet
