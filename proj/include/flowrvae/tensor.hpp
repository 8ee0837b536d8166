// SPDX-License-Identifier: Apache-2.0
/**
 * @file   tensor.hpp
 * @brief  Dense 64-bit tensors with tape-recorded reverse-mode gradients.
 *
 * A Tape records every op applied to its Vars. Parameters live outside the
 * tape as Tensors; Tape::param() makes a leaf whose gradient is added into
 * the Tensor's grad buffer on backward(). A tape belongs to one thread.
 *
 * Only rank-1 and rank-2 tensors are needed by the models; matmul accepts
 * (m,k)x(k,n) and (m,k)x(k).
 */
#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace flowrvae {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty or same size as data

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_, std::vector<double> data_);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& operator()(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  void ensure_grad();
  void zero_grad();
};

std::string shape_string(std::span<const std::size_t> shape);

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  /// Gradient of the last backward() w.r.t. this value (zeros if unreached).
  std::span<const double> grad() const;
  double item() const;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to an external parameter; `p` must outlive the tape.
  Var param(Tensor& p);

  /// Reverse sweep from a scalar; parameter grads accumulate across calls.
  /// Throws ShapeError if `loss` has more than one element.
  void backward(Var loss, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }

  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool needs_grad = false;
    Tensor* param = nullptr;
    std::function<void(Tape&, const Node&)> backprop;
  };

  // Used by op implementations.
  Var record(Tensor value, bool needs_grad, std::function<void(Tape&, const Node&)> backprop);
  Node& node(Var v) { return nodes_[v.id]; }
  const Node& node(Var v) const { return nodes_[v.id]; }
  /// Grad buffer of `v`, allocated on first use.
  std::vector<double>& grad_buffer(Var v);

 private:
  std::vector<Node> nodes_;
};

// Ops. Shape mismatches throw ShapeError naming the op and both shapes.
Var matmul(Var a, Var b);
/// w (out,in). x rank 1: w x + b. x rank 2 (batch,in): x w^T + b per row.
Var linear(Var x, Var w, Var b);
/// linear() without a bias term.
Var linear(Var x, Var w);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a (m,n) + b (n) broadcast over rows; plain add when a is rank 1.
Var add_bias(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
/// c - a, elementwise.
Var rsub_scalar(double c, Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
/// Clamp to [lo, hi]; gradient passes only where lo < a < hi.
Var clamp(Var a, double lo, double hi);
/// Rank-1 concatenation.
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
/// Rank 1: elements [begin, begin+len). Rank 2: rows [begin, begin+len).
Var slice(Var a, std::size_t begin, std::size_t len);
/// Row r of a rank-2 value, as rank 1.
Var row(Var a, std::size_t r);
/// Stacks rank-1 values of equal length into a matrix.
Var stack_rows(std::span<const Var> rows);
Var sum(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// Optimization ---------------------------------------------------------------

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t t = 0;
};

/// One bias-corrected Adam step over `params` using their grad buffers.
/// Throws NumericError on a non-finite gradient (parameters untouched).
void adam_update(std::span<Tensor* const> params, AdamState& state);

/// Scales all grads so their joint L2 norm is at most max_norm. Returns the
/// norm before scaling. max_norm <= 0 disables clipping.
double clip_grad_norm(std::span<Tensor* const> params, double max_norm);

void zero_grads(std::span<Tensor* const> params);

// Finite differences ---------------------------------------------------------

/// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h for every coordinate.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                              double h = 1e-5);

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

/// Compares tape gradients of `loss_fn` against central differences for
/// every coordinate of every parameter. `loss_fn` builds the loss on the
/// given tape and must be deterministic. Relative error uses
/// |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const std::function<Var(Tape&)>& loss_fn,
                           std::span<Tensor* const> params, double h = 1e-5,
                           double floor = 1e-6);

}  // namespace flowrvae
