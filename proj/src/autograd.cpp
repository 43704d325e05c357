#include "sofuse/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sofuse/errors.hpp"

namespace sofuse {

// ---------------------------------------------------------------------------
// Parameter

Parameter::Parameter(std::string n, Tensor init)
    : name(std::move(n)),
      value(std::move(init)),
      grad(value.shape()),
      adam_m(value.shape()),
      adam_v(value.shape()) {}

void Parameter::zero_grad() { grad.fill(0.0); }

void Parameter::enable_mask() {
  if (!mask) mask = Tensor::full(value.shape(), 1.0);
}

void Parameter::apply_mask() {
  if (!mask) return;
  for (std::size_t i = 0; i < value.size(); ++i) {
    if ((*mask)[i] == 0.0) value[i] = 0.0;
  }
}

std::size_t Parameter::active_count() const {
  if (!mask) return value.size();
  return static_cast<std::size_t>(
      std::count_if(mask->data().begin(), mask->data().end(), [](double m) { return m != 0.0; }));
}

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.requires_grad = recording_ && value.requires_grad();
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::param(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = recording_;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Tape::record(Tensor out, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(out), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(Tensor out, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  if (recording_) {
    for (const Var& v : inputs) needs = needs || nodes_[v.id()].requires_grad;
  }
  Node n;
  n.owned = std::move(out);
  n.requires_grad = needs;
  Var result = push(std::move(n));
  if (needs) {
    Op op;
    op.inputs.reserve(inputs.size());
    for (const Var& v : inputs) op.inputs.push_back(v.id());
    op.output = result.id();
    op.backward = std::move(fn);
    ops_.push_back(std::move(op));
  }
  return result;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad) n.grad.emplace(n.get().shape());
  return *n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.grad ? *n.grad : Tensor(n.get().shape());
}

void Tape::backward(Var loss) {
  if (loss.value().size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!requires_grad(loss.id())) return;
  grad_buffer(loss.id())[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    if (!has_grad(it->output)) continue;
    it->backward(*this, it->output, it->inputs);
  }
  for (const Node& n : nodes_) {
    if (!n.param || !n.grad) continue;
    Tensor& g = n.param->grad;
    const Tensor& src = *n.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
  }
}

// ---------------------------------------------------------------------------
// Ops

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// View of a tensor as [outer, axis, inner] around `axis`.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + to_string(A.shape()) + " x " +
                         to_string(B.shape()));
  }
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  Tensor C({m, n});
  const double* pa = A.raw();
  const double* pb = B.raw();
  double* pc = C.raw();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = pa[i * k + kk];
      const double* brow = pb + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return a.tape().record(std::move(C), {a, b}, [m, k, n](Tape& t, std::size_t out, std::span<const std::size_t> in) {
    const double* dc = t.grad_buffer(out).raw();
    const double* pa = t.value(in[0]).raw();
    const double* pb = t.value(in[1]).raw();
    if (t.requires_grad(in[0])) {
      double* da = t.grad_buffer(in[0]).raw();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double* brow = pb + kk * n;
          const double* dcrow = dc + i * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
          da[i * k + kk] += acc;
        }
      }
    }
    if (t.requires_grad(in[1])) {
      double* db = t.grad_buffer(in[1]).raw();
      for (std::size_t i = 0; i < m; ++i) {
        const double* dcrow = dc + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double av = pa[i * k + kk];
          double* dbrow = db + kk * n;
          for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
        }
      }
    }
  });
}

Var unary(UnaryOp op, Var x) {
  const Tensor& X = x.value();
  Tensor Y(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) {
    switch (op) {
      case UnaryOp::Tanh: Y[i] = std::tanh(X[i]); break;
      case UnaryOp::Sigmoid: Y[i] = stable_sigmoid(X[i]); break;
      case UnaryOp::Relu: Y[i] = X[i] > 0.0 ? X[i] : 0.0; break;
    }
  }
  return x.tape().record(std::move(Y), {x}, [op](Tape& t, std::size_t out, std::span<const std::size_t> in) {
    const Tensor& dy = t.grad_buffer(out);
    const Tensor& y = t.value(out);
    const Tensor& xv = t.value(in[0]);
    Tensor& dx = t.grad_buffer(in[0]);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      switch (op) {
        case UnaryOp::Tanh: dx[i] += dy[i] * (1.0 - y[i] * y[i]); break;
        case UnaryOp::Sigmoid: dx[i] += dy[i] * y[i] * (1.0 - y[i]); break;
        case UnaryOp::Relu: dx[i] += xv[i] > 0.0 ? dy[i] : 0.0; break;
      }
    }
  });
}

Var binary(BinaryOp op, Var x, Var y) {
  const Tensor& X = x.value();
  const Tensor& Y = y.value();
  require_same_shape(X, Y, "elementwise");
  Tensor Z(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) {
    switch (op) {
      case BinaryOp::Add: Z[i] = X[i] + Y[i]; break;
      case BinaryOp::Sub: Z[i] = X[i] - Y[i]; break;
      case BinaryOp::Mul: Z[i] = X[i] * Y[i]; break;
    }
  }
  return x.tape().record(std::move(Z), {x, y}, [op](Tape& t, std::size_t out, std::span<const std::size_t> in) {
    const Tensor& dz = t.grad_buffer(out);
    for (int side = 0; side < 2; ++side) {
      if (!t.requires_grad(in[side])) continue;
      const Tensor& other = t.value(in[1 - side]);
      Tensor& d = t.grad_buffer(in[side]);
      for (std::size_t i = 0; i < d.size(); ++i) {
        switch (op) {
          case BinaryOp::Add: d[i] += dz[i]; break;
          case BinaryOp::Sub: d[i] += side == 0 ? dz[i] : -dz[i]; break;
          case BinaryOp::Mul: d[i] += dz[i] * other[i]; break;
        }
      }
    }
  });
}

Var scale(Var x, double factor) {
  Tensor Y = x.value();
  Y.set_requires_grad(false);
  for (double& v : Y.data()) v *= factor;
  return x.tape().record(std::move(Y), {x}, [factor](Tape& t, std::size_t out, std::span<const std::size_t> in) {
    const Tensor& dy = t.grad_buffer(out);
    Tensor& dx = t.grad_buffer(in[0]);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * factor;
  });
}

Var add_bias(Var x, Var b) {
  const Tensor& X = x.value();
  const Tensor& B = b.value();
  if (B.rank() != 1 || X.shape().back() != B.dim(0)) {
    throw DimensionError("add_bias: bias " + to_string(B.shape()) + " does not match " +
                         to_string(X.shape()));
  }
  const std::size_t n = B.dim(0);
  const std::size_t rows = X.size() / n;
  Tensor Y = X;
  Y.set_requires_grad(false);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) Y[r * n + j] += B[j];
  }
  return x.tape().record(std::move(Y), {x, b}, [rows, n](Tape& t, std::size_t out, std::span<const std::size_t> in) {
    const Tensor& dy = t.grad_buffer(out);
    if (t.requires_grad(in[0])) {
      Tensor& dx = t.grad_buffer(in[0]);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    }
    if (t.requires_grad(in[1])) {
      Tensor& db = t.grad_buffer(in[1]);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) db[j] += dy[r * n + j];
      }
    }
  });
}

Var softmax(Var x) {
  const Tensor& X = x.value();
  if (X.rank() != 1 || X.size() == 0) {
    throw DimensionError("softmax expects a non-empty vector, got " + to_string(X.shape()));
  }
  const double mx = *std::max_element(X.data().begin(), X.data().end());
  Tensor Y(X.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    Y[i] = std::exp(X[i] - mx);
    total += Y[i];
  }
  for (double& v : Y.data()) v /= total;
  return x.tape().record(std::move(Y), {x}, [](Tape& t, std::size_t out, std::span<const std::size_t> in) {
    const Tensor& dy = t.grad_buffer(out);
    const Tensor& y = t.value(out);
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += dy[i] * y[i];
    Tensor& dx = t.grad_buffer(in[0]);
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] += y[i] * (dy[i] - dot);
  });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat axis out of range for " + to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat: " + to_string(s) + " incompatible with " + to_string(first) +
                           " along axis " + std::to_string(axis));
    }
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const AxisSplit whole = split_at(out_shape, axis);
  Tensor Y(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& X = parts[p].value();
    const std::size_t chunk = extents[p] * whole.inner;
    for (std::size_t o = 0; o < whole.outer; ++o) {
      std::copy_n(X.raw() + o * chunk, chunk, Y.raw() + o * whole.extent * whole.inner + offset * whole.inner);
    }
    offset += extents[p];
  }
  return parts.front().tape().record(
      std::move(Y), parts, [whole, extents](Tape& t, std::size_t out, std::span<const std::size_t> in) {
        const Tensor& dy = t.grad_buffer(out);
        std::size_t offset = 0;
        for (std::size_t p = 0; p < in.size(); ++p) {
          const std::size_t chunk = extents[p] * whole.inner;
          if (t.requires_grad(in[p])) {
            Tensor& dx = t.grad_buffer(in[p]);
            for (std::size_t o = 0; o < whole.outer; ++o) {
              const double* src = dy.raw() + o * whole.extent * whole.inner + offset * whole.inner;
              double* dst = dx.raw() + o * chunk;
              for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
            }
          }
          offset += extents[p];
        }
      });
}

Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length) {
  const Tensor& X = x.value();
  if (axis >= X.rank() || start + length > X.dim(axis)) {
    throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for " + to_string(X.shape()));
  }
  const AxisSplit sp = split_at(X.shape(), axis);
  Shape out_shape = X.shape();
  out_shape[axis] = length;
  Tensor Y(out_shape);
  const std::size_t chunk = length * sp.inner;
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(X.raw() + o * sp.extent * sp.inner + start * sp.inner, chunk, Y.raw() + o * chunk);
  }
  return x.tape().record(std::move(Y), {x}, [sp, start, chunk](Tape& t, std::size_t out, std::span<const std::size_t> in) {
    const Tensor& dy = t.grad_buffer(out);
    Tensor& dx = t.grad_buffer(in[0]);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      double* dst = dx.raw() + o * sp.extent * sp.inner + start * sp.inner;
      const double* src = dy.raw() + o * chunk;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tensor Y = x.value().reshaped(std::move(shape));
  Y.set_requires_grad(false);
  return x.tape().record(std::move(Y), {x}, [](Tape& t, std::size_t out, std::span<const std::size_t> in) {
    const Tensor& dy = t.grad_buffer(out);
    Tensor& dx = t.grad_buffer(in[0]);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
  });
}

Var repeat_rows(Var v, std::size_t rows) {
  const Tensor& V = v.value();
  if (V.rank() != 1) throw DimensionError("repeat_rows expects a vector, got " + to_string(V.shape()));
  const std::size_t n = V.dim(0);
  Tensor Y({rows, n});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(V.raw(), n, Y.raw() + r * n);
  return v.tape().record(std::move(Y), {v}, [rows, n](Tape& t, std::size_t out, std::span<const std::size_t> in) {
    const Tensor& dy = t.grad_buffer(out);
    Tensor& dv = t.grad_buffer(in[0]);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < n; ++j) dv[j] += dy[r * n + j];
    }
  });
}

Var conv1d(Var x, Var w, Var b) {
  const Tensor& X = x.value();
  const Tensor& W = w.value();
  const Tensor& B = b.value();
  if (W.rank() != 3) throw DimensionError("conv1d: kernel must be [k,Cin,Cout], got " + to_string(W.shape()));
  const std::size_t k = W.dim(0), cin = W.dim(1), cout = W.dim(2);
  if (k % 2 == 0) throw ConfigError("conv1d: kernel width must be odd, got " + std::to_string(k));
  if (X.rank() != 2 || X.dim(1) != cin) {
    throw DimensionError("conv1d: input " + to_string(X.shape()) + " does not match kernel " +
                         to_string(W.shape()));
  }
  if (B.rank() != 1 || B.dim(0) != cout) {
    throw DimensionError("conv1d: bias " + to_string(B.shape()) + " does not match kernel " +
                         to_string(W.shape()));
  }
  const std::size_t steps = X.dim(0);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor Y({steps, cout});
  const double* px = X.raw();
  const double* pw = W.raw();
  double* py = Y.raw();
  for (std::size_t t = 0; t < steps; ++t) {
    double* yrow = py + t * cout;
    std::copy_n(B.raw(), cout, yrow);
    for (std::size_t d = 0; d < k; ++d) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + d) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
      const double* xrow = px + static_cast<std::size_t>(src) * cin;
      for (std::size_t c = 0; c < cin; ++c) {
        const double xv = xrow[c];
        const double* wrow = pw + (d * cin + c) * cout;
        for (std::size_t o = 0; o < cout; ++o) yrow[o] += xv * wrow[o];
      }
    }
  }
  return x.tape().record(
      std::move(Y), {x, w, b}, [steps, k, cin, cout, pad](Tape& t, std::size_t out, std::span<const std::size_t> in) {
        const double* dy = t.grad_buffer(out).raw();
        const double* px = t.value(in[0]).raw();
        const double* pw = t.value(in[1]).raw();
        double* dx = t.requires_grad(in[0]) ? t.grad_buffer(in[0]).raw() : nullptr;
        double* dw = t.requires_grad(in[1]) ? t.grad_buffer(in[1]).raw() : nullptr;
        for (std::size_t s = 0; s < steps; ++s) {
          const double* dyrow = dy + s * cout;
          for (std::size_t d = 0; d < k; ++d) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(s + d) - pad;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
            const std::size_t srow = static_cast<std::size_t>(src) * cin;
            for (std::size_t c = 0; c < cin; ++c) {
              const double* wrow = pw + (d * cin + c) * cout;
              if (dx) {
                double acc = 0.0;
                for (std::size_t o = 0; o < cout; ++o) acc += dyrow[o] * wrow[o];
                dx[srow + c] += acc;
              }
              if (dw) {
                const double xv = px[srow + c];
                double* dwrow = dw + (d * cin + c) * cout;
                for (std::size_t o = 0; o < cout; ++o) dwrow[o] += xv * dyrow[o];
              }
            }
          }
        }
        if (t.requires_grad(in[2])) {
          Tensor& db = t.grad_buffer(in[2]);
          for (std::size_t s = 0; s < steps; ++s) {
            for (std::size_t o = 0; o < cout; ++o) db[o] += dy[s * cout + o];
          }
        }
      });
}

Var max_pool_time(Var x) {
  const Tensor& X = x.value();
  if (X.rank() != 2) throw DimensionError("max_pool_time expects [T,C], got " + to_string(X.shape()));
  const std::size_t steps = X.dim(0), channels = X.dim(1);
  if (steps == 0) throw EmptySequenceError("max_pool_time over an empty sequence");
  Tensor Y({channels});
  std::vector<std::size_t> argmax(channels, 0);
  for (std::size_t c = 0; c < channels; ++c) {
    double best = X[c];
    for (std::size_t t = 1; t < steps; ++t) {
      if (X[t * channels + c] > best) {
        best = X[t * channels + c];
        argmax[c] = t;
      }
    }
    Y[c] = best;
  }
  return x.tape().record(
      std::move(Y), {x}, [argmax = std::move(argmax), channels](Tape& t, std::size_t out, std::span<const std::size_t> in) {
        const Tensor& dy = t.grad_buffer(out);
        Tensor& dx = t.grad_buffer(in[0]);
        for (std::size_t c = 0; c < channels; ++c) dx[argmax[c] * channels + c] += dy[c];
      });
}

Var mse_loss(Var pred, const Tensor& target) {
  const Tensor& P = pred.value();
  require_same_shape(P, target, "mse_loss");
  const std::size_t n = P.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = P[i] - target[i];
    total += d * d;
  }
  Tensor residual(P.shape());
  for (std::size_t i = 0; i < n; ++i) residual[i] = P[i] - target[i];
  return pred.tape().record(
      Tensor::scalar(total / static_cast<double>(n)), {pred},
      [residual = std::move(residual), n](Tape& t, std::size_t out, std::span<const std::size_t> in) {
        const double g = t.grad_buffer(out)[0] * 2.0 / static_cast<double>(n);
        Tensor& dp = t.grad_buffer(in[0]);
        for (std::size_t i = 0; i < n; ++i) dp[i] += g * residual[i];
      });
}

Var cross_entropy_loss(Var logits, std::span<const int> classes) {
  const Tensor& L = logits.value();
  if (L.rank() != 1 && L.rank() != 2) {
    throw DimensionError("cross_entropy_loss expects [K] or [B,K] logits, got " + to_string(L.shape()));
  }
  const std::size_t rows = L.rank() == 1 ? 1 : L.dim(0);
  const std::size_t k = L.shape().back();
  if (classes.size() != rows) {
    throw DimensionError("cross_entropy_loss: " + std::to_string(classes.size()) + " targets for " +
                         std::to_string(rows) + " rows");
  }
  Tensor probs(L.shape());
  double total = 0.0;
  std::vector<std::size_t> target(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (classes[r] < 0 || static_cast<std::size_t>(classes[r]) >= k) {
      throw LabelError("class index " + std::to_string(classes[r]) + " outside [0," + std::to_string(k) + ")");
    }
    target[r] = static_cast<std::size_t>(classes[r]);
    const double* row = L.raw() + r * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = std::exp(row[j] - log_z);
    total += log_z - row[target[r]];
  }
  return logits.tape().record(
      Tensor::scalar(total / static_cast<double>(rows)), {logits},
      [probs = std::move(probs), target = std::move(target), rows, k](Tape& t, std::size_t out,
                                                                      std::span<const std::size_t> in) {
        const double g = t.grad_buffer(out)[0] / static_cast<double>(rows);
        Tensor& dl = t.grad_buffer(in[0]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < k; ++j) {
            dl[r * k + j] += g * (probs[r * k + j] - (j == target[r] ? 1.0 : 0.0));
          }
        }
      });
}

}  // namespace sofuse
