#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gridlight/tensor.h"

namespace gridlight::ad {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Backward rule: reads recorded values through the tape and accumulates into
// the gradient slots of its inputs (null for inputs that need no gradient).
using BackwardFn = std::function<void(const Tape& tape, const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

// Records operations in execution order; node ids are a topological order.
// A tape serves one forward/backward pass and is not shareable across threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf whose gradient is reported by backward() under `name`.
  Var parameter(const std::string& name, const Tensor& value);
  // Registers every entry of `params` and returns handles keyed the same way.
  std::map<std::string, Var> parameters(const ParamSet& params);

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  // Reverse sweep from a scalar loss. Returns a gradient for every parameter
  // registered on this tape (zeros where the loss does not depend on it) and
  // releases intermediate gradient buffers.
  Gradients backward(Var loss);

  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  const Tensor& value(Var v) const { return value(v.id()); }
  bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::string param_name;
  };
  void check_owner(Var v) const;

  std::vector<Node> nodes_;
};

// Gradient-blocking copy.
Var detach(Var x);

// ---- elementwise / reductions -------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
// Passes gradient only strictly inside (lo, hi).
Var clip(Var a, double lo, double hi);
// Elementwise min/max; ties send the gradient to `a`.
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);
Var sum(Var a);
Var mean(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator-(Var a) { return neg(a); }

// ---- shape ---------------------------------------------------------------

Var reshape(Var a, Shape shape);
// Collapses every dimension from `start_dim` on: ⟨B,C,H,W⟩ → ⟨B,C·H·W⟩ for start_dim 1.
Var flatten(Var a, int start_dim = 1);
// out[i] = a[i, index[i]] for a of shape ⟨M,K⟩.
Var pick(Var a, std::span<const int> index);
// ⟨B,N⟩ → ⟨B⟩
Var row_sum(Var a);
// ⟨B,N⟩ → ⟨B⟩ selecting column `col`.
Var column(Var a, int col);

// ---- network layers ------------------------------------------------------

// input ⟨C_in,H,W⟩ or ⟨B,C_in,H,W⟩, kernels ⟨C_out,C_in,k,k⟩ with odd k,
// stride 1, zero padding k/2 (cross-correlation).
Var conv2d(Var input, Var kernels);

// Per-sample, per-channel normalization over the spatial plane followed by
// the affine map gamma·x̂ + beta. input ⟨B,C,H,W⟩ or ⟨C,H,W⟩.
Var channel_norm(Var input, Var gamma, Var beta, double eps = 1e-5);

// input ⟨n⟩ or ⟨B,n⟩, weights ⟨m,n⟩, bias ⟨m⟩.
Var dense(Var input, Var weights, Var bias);

// Over the last dimension, max-subtracted.
Var softmax(Var a);
Var log_softmax(Var a);

}  // namespace gridlight::ad
