#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sofuse/tensor.hpp"

namespace sofuse {

// A trainable tensor with its gradient accumulator, optional prune mask and
// Adam moments. When a mask is present, value is zero wherever mask is zero.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor init);

  std::string name;
  Tensor value;
  // Written by Tape::backward through const references held by the tape.
  mutable Tensor grad;
  std::optional<Tensor> mask;
  Tensor adam_m;
  Tensor adam_v;
  std::uint64_t step_count = 0;

  void zero_grad();
  void enable_mask();      // all-ones mask if none present
  void apply_mask();       // value[i] = 0 where mask[i] == 0
  bool is_active(std::size_t i) const { return !mask || (*mask)[i] != 0.0; }
  std::size_t size() const { return value.size(); }
  std::size_t active_count() const;
};

class Tape;

// Handle to a node recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records operations in execution order and replays their backward rules in
// exact reverse order. Not shareable across threads; a non-recording tape is
// used for inference and never touches gradients.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t out, std::span<const std::size_t> in)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var constant(Tensor value);
  // Input leaf; its gradient is kept on the tape when requires_grad is set.
  Var leaf(Tensor value);
  // Leaf that reads the parameter in place; backward adds into param.grad.
  Var param(const Parameter& p);

  // Called by ops. If no input requires grad (or the tape is not recording)
  // the result is stored as a constant and `fn` is dropped.
  Var record(Tensor out, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor out, std::span<const Var> inputs, BackwardFn fn);

  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return node(id).get(); }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Lazily allocated gradient buffer of a node.
  Tensor& grad_buffer(std::size_t id);
  bool has_grad(std::size_t id) const { return nodes_[id].grad.has_value(); }
  // Gradient of a leaf after backward; zeros if the leaf was unreachable.
  Tensor grad(Var v) const;

  std::size_t op_count() const { return ops_.size(); }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    const Parameter* param = nullptr;
    bool requires_grad = false;
    std::optional<Tensor> grad;
    const Tensor& get() const { return external ? *external : owned; }
  };
  struct Op {
    std::vector<std::size_t> inputs;
    std::size_t output;
    BackwardFn backward;
  };

  const Node& node(std::size_t id) const { return nodes_[id]; }
  Var push(Node n);

  bool recording_;
  std::deque<Node> nodes_;
  std::vector<Op> ops_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable operations.

enum class UnaryOp { Tanh, Sigmoid, Relu };
enum class BinaryOp { Add, Sub, Mul };

Var matmul(Var a, Var b);
Var unary(UnaryOp op, Var x);
Var binary(BinaryOp op, Var x, Var y);
inline Var tanh(Var x) { return unary(UnaryOp::Tanh, x); }
inline Var sigmoid(Var x) { return unary(UnaryOp::Sigmoid, x); }
inline Var relu(Var x) { return unary(UnaryOp::Relu, x); }
inline Var add(Var x, Var y) { return binary(BinaryOp::Add, x, y); }
inline Var sub(Var x, Var y) { return binary(BinaryOp::Sub, x, y); }
inline Var mul(Var x, Var y) { return binary(BinaryOp::Mul, x, y); }
Var scale(Var x, double factor);

// x[..., n] + b[n], broadcast over leading indices.
Var add_bias(Var x, Var b);
Var softmax(Var x);
Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length);
Var reshape(Var x, Shape shape);
// v[n] -> [rows, n], every row a copy of v.
Var repeat_rows(Var v, std::size_t rows);

// "Same" zero-padded 1-D convolution over time. x[T,Cin], w[k,Cin,Cout], b[Cout].
Var conv1d(Var x, Var w, Var b);
// Max over the time axis, x[T,C] -> [C]. Ties route gradient to the lowest t.
Var max_pool_time(Var x);

// Mean squared error over all elements; returns shape [1].
Var mse_loss(Var pred, const Tensor& target);
// Mean over rows of -log softmax(logits)[class]. logits is [K] or [B,K].
Var cross_entropy_loss(Var logits, std::span<const int> classes);

}  // namespace sofuse
