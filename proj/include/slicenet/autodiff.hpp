#pragma once

// Tape-based reverse-mode differentiation.
//
// A Tape records operations in creation order. Leaves are either constants or
// bound to a Parameter, whose `grad` slot receives accumulated adjoints when
// Tape::backward runs. Gradient slots are never overwritten by backward, only
// added to, so several forward/backward passes sum into the same slots.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "slicenet/tensor.hpp"

namespace slicenet {

/// A trainable array together with its gradient slot.
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

enum class OpKind {
  kConstant,
  kParameter,
  kMatMul,
  kMatMulNT,
  kTranspose,
  kNarrow,
  kConcat,
  kReshape,
  kAdd,
  kMul,
  kScale,
  kRelu,
  kSigmoid,
  kTanh,
  kAddBias,
  kConv2d,
  kGroupNorm,
  kMaxPool,
  kGlobalAvgPool,
  kEmbedding,
  kSoftmaxCrossEntropy,
  kSum,
};

const char* op_name(OpKind kind);

class Tape;

/// Handle to a node in a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the output adjoint and one slot per input; a slot is null when
  /// that input does not need a gradient.
  using BackwardFn =
      std::function<void(const Tape& tape, const Tensor& grad_out, std::span<Tensor*> grad_in)>;

  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to `p`. Binding the same parameter twice returns the same node.
  Var param(Parameter& p);
  Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Propagates adjoints from a scalar loss and adds them into the gradient
  /// slots of every Parameter bound on this tape. Calling it twice doubles the
  /// contribution.
  void backward(Var loss);

 private:
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
};

namespace ops {

Var matmul(Var a, Var b);
/// x [B x K] times w^T, w is [N x K].
Var matmul_nt(Var x, Var w);
Var transpose(Var a);
Var narrow(Var a, std::size_t axis, std::size_t start, std::size_t length);
Var concat(Var a, Var b, std::size_t axis);
/// Concatenates any number of operands along `axis`.
Var concat_all(std::span<const Var> parts, std::size_t axis);
Var reshape(Var a, Shape shape);

/// Element-wise; `b` must have the same shape as `a` or hold a single element.
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);

/// Adds a per-feature bias along axis 1 (rank 2: [B x N]; rank 4: [B x N x H x W]).
Var add_bias(Var x, Var bias);

/// Rank 4 input [B x M x H x W], or rank 3 [M x H x W] treated as a batch of one.
/// Kernels [N x M x k x k] with k odd.
Var conv2d(Var input, Var kernels, std::size_t stride, std::size_t padding);

/// Group normalization over consecutive blocks of `group_size` channels (axis 1),
/// per sample, including spatial positions when present. gamma/beta have one
/// entry per channel.
Var group_norm(Var x, Var gamma, Var beta, std::size_t group_size, double epsilon);

/// Non-overlapping max pooling with a square window; extents must divide.
Var max_pool2d(Var x, std::size_t window);
/// [B x C x H x W] -> [B x C]
Var global_avg_pool(Var x);

/// Gathers rows of `table` [V x E] -> [ids.size() x E].
Var embedding(Var table, std::span<const std::size_t> ids);

/// Mean negative log-likelihood of `labels` under softmax(logits) -> shape [1].
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);
Var sum(Var a);

}  // namespace ops
}  // namespace slicenet
