#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sofuse/autograd.hpp"

namespace sofuse {

enum class Activation { None, Relu, Tanh };

Var activate(Activation act, Var x);

// Deterministic initializers. Every layer draws from the caller's generator in
// a fixed order so identical seeds give identical weights.
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
Tensor uniform(Shape shape, double bound, std::mt19937_64& rng);

// Fully-connected layer applied independently to every leading index, so a
// [T,in] frame stack shares one set of weights across frames.
class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(std::string name, std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng);

  Var forward(Tape& tape, Var x) const;

  std::size_t in_features() const { return w.value.dim(0); }
  std::size_t out_features() const { return w.value.dim(1); }
  std::size_t parameter_count() const { return w.size() + b.size(); }
  std::size_t active_parameter_count() const { return w.active_count() + b.size(); }

  Parameter w;  // [in, out]
  Parameter b;  // [out]
  Activation activation = Activation::None;
};

// "Same"-padded 1-D convolution over frames followed by ReLU.
class Conv1DLayer {
 public:
  Conv1DLayer() = default;
  Conv1DLayer(std::string name, std::size_t kernel, std::size_t in, std::size_t out, std::mt19937_64& rng);

  Var forward(Tape& tape, Var x) const;

  std::size_t kernel() const { return w.value.dim(0); }
  std::size_t in_channels() const { return w.value.dim(1); }
  std::size_t out_channels() const { return w.value.dim(2); }
  std::size_t parameter_count() const { return w.size() + b.size(); }
  std::size_t active_parameter_count() const { return w.active_count() + b.size(); }

  Parameter w;  // [k, Cin, Cout]
  Parameter b;  // [Cout]
};

// Uni-directional LSTM. Gate blocks in W/U/bias are ordered input, forget,
// cell candidate, output. Initial hidden and cell states are zero.
class LSTMLayer {
 public:
  LSTMLayer() = default;
  LSTMLayer(std::string name, std::size_t in, std::size_t hidden, std::mt19937_64& rng);

  // x[S,in] -> [S,hidden]
  Var forward(Tape& tape, Var x) const;

  std::size_t hidden() const { return u.value.dim(0); }
  std::size_t parameter_count() const { return w.size() + u.size() + bias.size(); }

  Parameter w;     // [in, 4h]
  Parameter u;     // [h, 4h]
  Parameter bias;  // [4h]
};

// Single-head attention pooling with a learned query:
//   s_t = <query, tanh(h_t K)> / sqrt(h),  alpha = softmax(s),  out = sum alpha_t h_t
class SelfAttentionPooling {
 public:
  SelfAttentionPooling() = default;
  SelfAttentionPooling(std::string name, std::size_t hidden, std::mt19937_64& rng);

  // h_seq[S,h] -> [h]
  Var forward(Tape& tape, Var h_seq) const;
  // Attention weights alpha[S] for inspection.
  Var weights(Tape& tape, Var h_seq) const;

  std::size_t parameter_count() const { return query.size() + key.size(); }

  Parameter query;  // [h]
  Parameter key;    // [h, h]
};

}  // namespace sofuse
