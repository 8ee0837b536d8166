// SPDX-License-Identifier: Apache-2.0
#include "flowrvae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowrvae/errors.hpp"

namespace flowrvae {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape) + " and " +
                   shape_string(b.shape));
}

void same_tape(const char* op, Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) {
    throw ShapeError(std::string(op) + ": operands belong to different tapes");
  }
}

bool needs(const Tape& t, Var v) { return t.node(v).needs_grad; }

// Elementwise unary op given f(x) and f'(x, y) with y = f(x).
template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
  Tape& t = *a.tape;
  const Tensor& x = t.node(a).value;
  Tensor y(x.shape, std::vector<double>(x.numel()));
  for (std::size_t i = 0; i < x.numel(); ++i) y.data[i] = f(x.data[i]);
  const bool ng = needs(t, a);
  const auto aid = a.id;
  return t.record(std::move(y), ng, [aid, df](Tape& tp, const Tape::Node& self) {
    Var av{&tp, aid};
    const auto& xin = tp.node(av).value.data;
    auto& g = tp.grad_buffer(av);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(xin[i], self.value.data[i]);
  });
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  if (product(shape) != data.size()) {
    throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_string(shape));
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  const auto n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

std::string shape_string(std::span<const std::size_t> shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

const Tensor& Var::value() const { return tape->node(*this).value; }

std::span<const double> Var::grad() const {
  const auto& n = tape->node(*this);
  if (n.grad.empty()) {
    static thread_local std::vector<double> zeros;
    zeros.assign(n.value.numel(), 0.0);
    return zeros;
  }
  return n.grad;
}

double Var::item() const {
  const auto& v = value();
  if (v.numel() != 1) throw ShapeError("item: value has shape " + shape_string(v.shape));
  return v.data[0];
}

Var Tape::record(Tensor value, bool needs_grad,
                 std::function<void(Tape&, const Node&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  value.requires_grad = false;
  value.grad.clear();
  return record(std::move(value), false, nullptr);
}

Var Tape::param(Tensor& p) {
  p.requires_grad = true;
  p.ensure_grad();
  Node n;
  n.value = Tensor(p.shape, p.data);
  n.needs_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

std::vector<double>& Tape::grad_buffer(Var v) {
  auto& n = nodes_[v.id];
  if (n.grad.size() != n.value.numel()) n.grad.assign(n.value.numel(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss, double seed) {
  if (loss.tape != this) throw ShapeError("backward: loss belongs to another tape");
  if (node(loss).value.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_string(node(loss).value.shape));
  }
  for (auto& n : nodes_) n.grad.clear();
  grad_buffer(loss)[0] = seed;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.param) {
      auto& pg = n.param->grad;
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    } else if (n.backprop) {
      n.backprop(*this, n);
    }
  }
}

Var matmul(Var a, Var b) {
  same_tape("matmul", a, b);
  Tape& t = *a.tape;
  const Tensor& A = t.node(a).value;
  const Tensor& B = t.node(b).value;
  if (A.rank() != 2 || (B.rank() != 1 && B.rank() != 2) || A.shape[1] != B.shape[0]) {
    shape_fail("matmul", A, B);
  }
  const std::size_t m = A.shape[0], k = A.shape[1], n = B.rank() == 2 ? B.shape[1] : 1;
  Tensor C(B.rank() == 2 ? std::vector<std::size_t>{m, n} : std::vector<std::size_t>{m},
           std::vector<double>(m * n, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C.data.data() + i * n;
    const double* arow = A.data.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = B.data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  const bool na = needs(t, a), nb = needs(t, b);
  const auto aid = a.id, bid = b.id;
  return t.record(std::move(C), na || nb, [aid, bid, na, nb, m, k, n](Tape& tp, const Tape::Node& self) {
    Var av{&tp, aid}, bv{&tp, bid};
    const double* g = self.grad.data();
    if (na) {
      const auto& Bd = tp.node(bv).value.data;
      auto& ga = tp.grad_buffer(av);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = Bd.data() + p * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * brow[j];
          ga[i * k + p] += s;
        }
      }
    }
    if (nb) {
      const auto& Ad = tp.node(av).value.data;
      auto& gb = tp.grad_buffer(bv);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double a_ip = Ad[i * k + p];
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += a_ip * g[i * n + j];
        }
      }
    }
  });
}

namespace {

Var linear_impl(Var x, Var w, const Var* b) {
  same_tape("linear", x, w);
  Tape& t = *x.tape;
  const Tensor& X = t.node(x).value;
  const Tensor& W = t.node(w).value;
  if (W.rank() != 2 || (X.rank() != 1 && X.rank() != 2) || X.shape.back() != W.shape[1]) {
    shape_fail("linear", X, W);
  }
  const std::size_t out = W.shape[0], in = W.shape[1];
  const std::size_t batch = X.rank() == 2 ? X.shape[0] : 1;
  if (b) {
    same_tape("linear", x, *b);
    const Tensor& B = t.node(*b).value;
    if (B.rank() != 1 || B.shape[0] != out) shape_fail("linear", W, B);
  }
  Tensor Y(X.rank() == 2 ? std::vector<std::size_t>{batch, out} : std::vector<std::size_t>{out},
           std::vector<double>(batch * out, 0.0));
  const double* bias = b ? t.node(*b).value.data.data() : nullptr;
  for (std::size_t r = 0; r < batch; ++r) {
    const double* xr = X.data.data() + r * in;
    double* yr = Y.data.data() + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wr = W.data.data() + o * in;
      double s = bias ? bias[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) s += wr[i] * xr[i];
      yr[o] = s;
    }
  }
  const bool nx = needs(t, x), nw = needs(t, w), nb = b && needs(t, *b);
  const auto xid = x.id, wid = w.id;
  const std::uint32_t bid = b ? b->id : 0;
  return t.record(std::move(Y), nx || nw || nb,
                  [xid, wid, bid, nx, nw, nb, batch, in, out](Tape& tp, const Tape::Node& self) {
                    const double* g = self.grad.data();
                    const auto& Xd = tp.node(Var{&tp, xid}).value.data;
                    const auto& Wd = tp.node(Var{&tp, wid}).value.data;
                    if (nx) {
                      auto& gx = tp.grad_buffer(Var{&tp, xid});
                      for (std::size_t r = 0; r < batch; ++r) {
                        for (std::size_t o = 0; o < out; ++o) {
                          const double go = g[r * out + o];
                          if (go == 0.0) continue;
                          const double* wr = Wd.data() + o * in;
                          double* gxr = gx.data() + r * in;
                          for (std::size_t i = 0; i < in; ++i) gxr[i] += go * wr[i];
                        }
                      }
                    }
                    if (nw) {
                      auto& gw = tp.grad_buffer(Var{&tp, wid});
                      for (std::size_t r = 0; r < batch; ++r) {
                        const double* xr = Xd.data() + r * in;
                        for (std::size_t o = 0; o < out; ++o) {
                          const double go = g[r * out + o];
                          if (go == 0.0) continue;
                          double* gwr = gw.data() + o * in;
                          for (std::size_t i = 0; i < in; ++i) gwr[i] += go * xr[i];
                        }
                      }
                    }
                    if (nb) {
                      auto& gb = tp.grad_buffer(Var{&tp, bid});
                      for (std::size_t r = 0; r < batch; ++r) {
                        for (std::size_t o = 0; o < out; ++o) gb[o] += g[r * out + o];
                      }
                    }
                  });
}

}  // namespace

Var linear(Var x, Var w, Var b) { return linear_impl(x, w, &b); }
Var linear(Var x, Var w) { return linear_impl(x, w, nullptr); }

namespace {

enum class BinOp { Add, Sub, Mul };

Var binary(const char* name, BinOp op, Var a, Var b) {
  same_tape(name, a, b);
  Tape& t = *a.tape;
  const Tensor& A = t.node(a).value;
  const Tensor& B = t.node(b).value;
  if (A.shape != B.shape) shape_fail(name, A, B);
  Tensor C(A.shape, std::vector<double>(A.numel()));
  for (std::size_t i = 0; i < A.numel(); ++i) {
    switch (op) {
      case BinOp::Add: C.data[i] = A.data[i] + B.data[i]; break;
      case BinOp::Sub: C.data[i] = A.data[i] - B.data[i]; break;
      case BinOp::Mul: C.data[i] = A.data[i] * B.data[i]; break;
    }
  }
  const bool na = needs(t, a), nb = needs(t, b);
  const auto aid = a.id, bid = b.id;
  return t.record(std::move(C), na || nb, [aid, bid, na, nb, op](Tape& tp, const Tape::Node& self) {
    Var av{&tp, aid}, bv{&tp, bid};
    const auto& g = self.grad;
    if (na) {
      auto& ga = tp.grad_buffer(av);
      if (op == BinOp::Mul) {
        const auto& Bd = tp.node(bv).value.data;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * Bd[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
    }
    if (nb) {
      auto& gb = tp.grad_buffer(bv);
      if (op == BinOp::Mul) {
        const auto& Ad = tp.node(av).value.data;
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * Ad[i];
      } else if (op == BinOp::Sub) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    }
  });
}

}  // namespace

Var add(Var a, Var b) { return binary("add", BinOp::Add, a, b); }
Var sub(Var a, Var b) { return binary("sub", BinOp::Sub, a, b); }
Var mul(Var a, Var b) { return binary("mul", BinOp::Mul, a, b); }

Var add_bias(Var a, Var b) {
  same_tape("add_bias", a, b);
  Tape& t = *a.tape;
  const Tensor& A = t.node(a).value;
  const Tensor& B = t.node(b).value;
  if (A.rank() == 1) return add(a, b);
  if (A.rank() != 2 || B.rank() != 1 || A.shape[1] != B.shape[0]) shape_fail("add_bias", A, B);
  const std::size_t m = A.shape[0], n = A.shape[1];
  Tensor C(A.shape, A.data);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) C.data[i * n + j] += B.data[j];
  }
  const bool na = needs(t, a), nb = needs(t, b);
  const auto aid = a.id, bid = b.id;
  return t.record(std::move(C), na || nb, [aid, bid, na, nb, m, n](Tape& tp, const Tape::Node& self) {
    const auto& g = self.grad;
    if (na) {
      auto& ga = tp.grad_buffer(Var{&tp, aid});
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (nb) {
      auto& gb = tp.grad_buffer(Var{&tp, bid});
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    }
  });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var rsub_scalar(double c, Var a) {
  return unary(a, [c](double x) { return c - x; }, [](double, double) { return -1.0; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Tape& t = *parts.front().tape;
  std::vector<double> out;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> sizes;
  bool ng = false;
  for (const auto& p : parts) {
    same_tape("concat", parts.front(), p);
    const Tensor& v = t.node(p).value;
    if (v.rank() != 1) shape_fail("concat", t.node(parts.front()).value, v);
    out.insert(out.end(), v.data.begin(), v.data.end());
    ids.push_back(p.id);
    sizes.push_back(v.numel());
    ng = ng || needs(t, p);
  }
  return t.record(Tensor::vector(std::move(out)), ng, [ids, sizes](Tape& tp, const Tape::Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Var v{&tp, ids[k]};
      if (tp.node(v).needs_grad) {
        auto& g = tp.grad_buffer(v);
        for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += self.grad[off + i];
      }
      off += sizes[k];
    }
  });
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice(Var a, std::size_t begin, std::size_t len) {
  Tape& t = *a.tape;
  const Tensor& A = t.node(a).value;
  const std::size_t extent = A.rows();
  if (begin + len > extent || A.rank() == 0 || A.rank() > 2) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(begin + len) +
                     ") out of bounds for shape " + shape_string(A.shape));
  }
  const std::size_t width = A.rank() == 2 ? A.shape[1] : 1;
  std::vector<std::size_t> shape = A.shape;
  shape[0] = len;
  Tensor out(shape, std::vector<double>(A.data.begin() + static_cast<std::ptrdiff_t>(begin * width),
                                        A.data.begin() + static_cast<std::ptrdiff_t>((begin + len) * width)));
  const auto aid = a.id;
  return t.record(std::move(out), needs(t, a), [aid, begin, width](Tape& tp, const Tape::Node& self) {
    auto& g = tp.grad_buffer(Var{&tp, aid});
    const std::size_t off = begin * width;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[off + i] += self.grad[i];
  });
}

Var row(Var a, std::size_t r) {
  Tape& t = *a.tape;
  const Tensor& A = t.node(a).value;
  if (A.rank() != 2 || r >= A.shape[0]) {
    throw ShapeError("row: index " + std::to_string(r) + " out of bounds for shape " +
                     shape_string(A.shape));
  }
  const std::size_t n = A.shape[1];
  Tensor out({n}, std::vector<double>(A.data.begin() + static_cast<std::ptrdiff_t>(r * n),
                                      A.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * n)));
  const auto aid = a.id;
  return t.record(std::move(out), needs(t, a), [aid, r, n](Tape& tp, const Tape::Node& self) {
    auto& g = tp.grad_buffer(Var{&tp, aid});
    for (std::size_t i = 0; i < n; ++i) g[r * n + i] += self.grad[i];
  });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no operands");
  Tape& t = *rows.front().tape;
  const std::size_t n = t.node(rows.front()).value.numel();
  std::vector<double> out;
  out.reserve(n * rows.size());
  std::vector<std::uint32_t> ids;
  bool ng = false;
  for (const auto& r : rows) {
    same_tape("stack_rows", rows.front(), r);
    const Tensor& v = t.node(r).value;
    if (v.rank() != 1 || v.numel() != n) shape_fail("stack_rows", t.node(rows.front()).value, v);
    out.insert(out.end(), v.data.begin(), v.data.end());
    ids.push_back(r.id);
    ng = ng || needs(t, r);
  }
  return t.record(Tensor::matrix(rows.size(), n, std::move(out)), ng,
                  [ids, n](Tape& tp, const Tape::Node& self) {
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      Var v{&tp, ids[k]};
                      if (!tp.node(v).needs_grad) continue;
                      auto& g = tp.grad_buffer(v);
                      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[k * n + i];
                    }
                  });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& A = t.node(a).value;
  double s = 0.0;
  for (double v : A.data) s += v;
  const auto aid = a.id;
  return t.record(Tensor::vector({s}), needs(t, a), [aid](Tape& tp, const Tape::Node& self) {
    auto& g = tp.grad_buffer(Var{&tp, aid});
    for (auto& x : g) x += self.grad[0];
  });
}

// Optimization ---------------------------------------------------------------

void adam_update(std::span<Tensor* const> params, AdamState& state) {
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->numel(), 0.0);
      state.v.emplace_back(p->numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_update: parameter count changed");
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    p->ensure_grad();
    if (state.m[k].size() != p->numel()) {
      throw ShapeError("adam_update: parameter " + std::to_string(k) + " changed shape to " +
                       shape_string(p->shape));
    }
    for (double g : p->grad) {
      if (!std::isfinite(g)) {
        throw NumericError("adam_update: non-finite gradient in parameter " + std::to_string(k));
      }
    }
  }
  const auto& c = state.cfg;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double g = p->grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p->data[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

double clip_grad_norm(std::span<Tensor* const> params, double max_norm) {
  double sq = 0.0;
  for (auto* p : params) {
    for (double g : p->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto* p : params) {
      for (auto& g : p->grad) g *= f;
    }
  }
  return norm;
}

void zero_grads(std::span<Tensor* const> params) {
  for (auto* p : params) p->zero_grad();
}

// Finite differences ---------------------------------------------------------

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                              double h) {
  Tensor g = Tensor::zeros(x.shape);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe.data[i];
    probe.data[i] = orig + h;
    const double fp = f(probe);
    probe.data[i] = orig - h;
    const double fm = f(probe);
    probe.data[i] = orig;
    g.data[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

GradCheckResult grad_check(const std::function<Var(Tape&)>& loss_fn,
                           std::span<Tensor* const> params, double h, double floor) {
  zero_grads(params);
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  GradCheckResult r;
  auto eval = [&]() {
    Tape tape;
    return loss_fn(tape).item();
  };
  for (auto* p : params) {
    const std::vector<double> analytic = p->grad;
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double orig = p->data[i];
      p->data[i] = orig + h;
      const double fp = eval();
      p->data[i] = orig - h;
      const double fm = eval();
      p->data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double err = std::abs(analytic[i] - numeric);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      r.max_abs_error = std::max(r.max_abs_error, err);
      r.max_rel_error = std::max(r.max_rel_error, err / denom);
      ++r.checked;
    }
  }
  return r;
}

}  // namespace flowrvae
