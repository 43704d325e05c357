#include "sofuse/layers.hpp"

#include <cmath>

#include "sofuse/errors.hpp"

namespace sofuse {

Var activate(Activation act, Var x) {
  switch (act) {
    case Activation::Relu: return relu(x);
    case Activation::Tanh: return tanh(x);
    case Activation::None: break;
  }
  return x;
}

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  return uniform(std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

// ---------------------------------------------------------------------------

DenseLayer::DenseLayer(std::string name, std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng)
    : w(name + ".w", glorot_uniform({in, out}, in, out, rng)),
      b(name + ".b", Tensor({out})),
      activation(act) {}

Var DenseLayer::forward(Tape& tape, Var x) const {
  const Shape& s = x.shape();
  if (s.back() != in_features()) {
    throw DimensionError(w.name + ": input " + to_string(s) + " does not end in " +
                         std::to_string(in_features()));
  }
  Var y;
  if (s.size() == 1) {
    y = reshape(matmul(reshape(x, {1, s[0]}), tape.param(w)), {out_features()});
  } else if (s.size() == 2) {
    y = matmul(x, tape.param(w));
  } else {
    const std::size_t rows = x.value().size() / s.back();
    Shape out_shape = s;
    out_shape.back() = out_features();
    y = reshape(matmul(reshape(x, {rows, s.back()}), tape.param(w)), out_shape);
  }
  return activate(activation, add_bias(y, tape.param(b)));
}

// ---------------------------------------------------------------------------

Conv1DLayer::Conv1DLayer(std::string name, std::size_t kernel, std::size_t in, std::size_t out,
                         std::mt19937_64& rng) {
  if (kernel % 2 == 0) throw ConfigError(name + ": kernel width must be odd, got " + std::to_string(kernel));
  w = Parameter(name + ".w", glorot_uniform({kernel, in, out}, kernel * in, kernel * out, rng));
  b = Parameter(name + ".b", Tensor({out}));
}

Var Conv1DLayer::forward(Tape& tape, Var x) const {
  return relu(conv1d(x, tape.param(w), tape.param(b)));
}

// ---------------------------------------------------------------------------

LSTMLayer::LSTMLayer(std::string name, std::size_t in, std::size_t hidden, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(hidden));
  w = Parameter(name + ".W", uniform({in, 4 * hidden}, bound, rng));
  u = Parameter(name + ".U", uniform({hidden, 4 * hidden}, bound, rng));
  Tensor b0({4 * hidden});
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b0[j] = 1.0;  // forget gate
  bias = Parameter(name + ".bias", std::move(b0));
}

Var LSTMLayer::forward(Tape& tape, Var x) const {
  const Shape& s = x.shape();
  if (s.size() != 2 || s[1] != w.value.dim(0)) {
    throw DimensionError(w.name + ": input " + to_string(s) + " does not match [S," +
                         std::to_string(w.value.dim(0)) + "]");
  }
  if (s[0] == 0) throw EmptySequenceError(w.name + ": empty input sequence");
  const std::size_t steps = s[0];
  const std::size_t h = hidden();

  Var projected = add_bias(matmul(x, tape.param(w)), tape.param(bias));  // [S,4h]
  Var recurrent = tape.param(u);
  Var h_prev = tape.constant(Tensor({1, h}));
  Var c_prev = tape.constant(Tensor({1, h}));
  std::vector<Var> outputs;
  outputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Var pre = add(slice(projected, 0, t, 1), matmul(h_prev, recurrent));  // [1,4h]
    Var in_gate = sigmoid(slice(pre, 1, 0, h));
    Var forget_gate = sigmoid(slice(pre, 1, h, h));
    Var candidate = tanh(slice(pre, 1, 2 * h, h));
    Var out_gate = sigmoid(slice(pre, 1, 3 * h, h));
    Var c = add(mul(forget_gate, c_prev), mul(in_gate, candidate));
    Var hidden_state = mul(out_gate, tanh(c));
    outputs.push_back(hidden_state);
    h_prev = hidden_state;
    c_prev = c;
  }
  return concat(outputs, 0);
}

// ---------------------------------------------------------------------------

SelfAttentionPooling::SelfAttentionPooling(std::string name, std::size_t hidden, std::mt19937_64& rng)
    : query(name + ".query", glorot_uniform({hidden}, hidden, 1, rng)),
      key(name + ".key", glorot_uniform({hidden, hidden}, hidden, hidden, rng)) {}

Var SelfAttentionPooling::weights(Tape& tape, Var h_seq) const {
  const Shape& s = h_seq.shape();
  const std::size_t h = query.value.dim(0);
  if (s.size() != 2 || s[1] != h) {
    throw DimensionError(query.name + ": sequence " + to_string(s) + " does not match hidden size " +
                         std::to_string(h));
  }
  if (s[0] == 0) throw EmptySequenceError(query.name + ": empty sequence");
  Var keys = tanh(matmul(h_seq, tape.param(key)));                      // [S,h]
  Var scores = matmul(keys, reshape(tape.param(query), {h, 1}));         // [S,1]
  scores = scale(reshape(scores, {s[0]}), 1.0 / std::sqrt(static_cast<double>(h)));
  return softmax(scores);
}

Var SelfAttentionPooling::forward(Tape& tape, Var h_seq) const {
  Var alpha = weights(tape, h_seq);
  const std::size_t steps = h_seq.shape()[0];
  const std::size_t h = h_seq.shape()[1];
  return reshape(matmul(reshape(alpha, {1, steps}), h_seq), {h});
}

}  // namespace sofuse
