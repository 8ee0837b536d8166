// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "flowrvae/errors.hpp"
#include "flowrvae/optimize.hpp"
#include "flowrvae/rng.hpp"
#include "flowrvae/tensor.hpp"

using namespace flowrvae;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

/// Gradient check of sum(w * op(x...)) for fixed random weights w, so that
/// every output coordinate contributes with a distinct weight.
void check_op(const std::function<Var(Tape&, std::vector<Var>&)>& op, std::vector<Tensor> inputs,
              std::uint64_t seed = 3) {
  Rng rng(seed);
  std::vector<Tensor*> params;
  for (auto& t : inputs) params.push_back(&t);
  Tensor weights;
  auto loss = [&](Tape& tape) {
    std::vector<Var> vars;
    for (auto* p : params) vars.push_back(tape.param(*p));
    Var out = op(tape, vars);
    if (weights.numel() != out.value().numel()) weights = random_tensor(out.value().shape, rng);
    return sum(mul(out, tape.constant(weights)));
  };
  const auto r = grad_check(loss, params);
  CHECK(r.checked > 0);
  CHECK(r.max_rel_error < 1e-6);
}

}  // namespace

TEST_CASE("elementwise ops match central differences") {
  Rng rng(1);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
  check_op([](Tape&, std::vector<Var>& v) { return add(v[0], v[1]); }, {a, b});
  check_op([](Tape&, std::vector<Var>& v) { return sub(v[0], v[1]); }, {a, b});
  check_op([](Tape&, std::vector<Var>& v) { return mul(v[0], v[1]); }, {a, b});
  check_op([](Tape&, std::vector<Var>& v) { return scale(v[0], -2.5); }, {a});
  check_op([](Tape&, std::vector<Var>& v) { return add_scalar(v[0], 0.7); }, {a});
  check_op([](Tape&, std::vector<Var>& v) { return rsub_scalar(1.0, v[0]); }, {a});
  check_op([](Tape&, std::vector<Var>& v) { return sigmoid(v[0]); }, {a});
  check_op([](Tape&, std::vector<Var>& v) { return tanh(v[0]); }, {a});
  check_op([](Tape&, std::vector<Var>& v) { return exp(v[0]); }, {a});
  check_op([](Tape&, std::vector<Var>& v) { return log(v[0]); }, {random_tensor({5}, rng, 0.2, 3.0)});
  // kinks of relu and clamp are avoided by keeping inputs away from them
  Tensor away = random_tensor({6}, rng, 0.1, 1.0);
  for (std::size_t i = 0; i < away.numel(); i += 2) away.data[i] = -away.data[i];
  check_op([](Tape&, std::vector<Var>& v) { return relu(v[0]); }, {away});
  check_op([](Tape&, std::vector<Var>& v) { return clamp(v[0], -0.05, 0.05); }, {away});
  check_op([](Tape&, std::vector<Var>& v) { return clamp(v[0], -2.0, 2.0); }, {away});
}

TEST_CASE("structural ops match central differences") {
  Rng rng(2);
  const Tensor m = random_tensor({3, 5}, rng), v = random_tensor({5}, rng), w = random_tensor({4}, rng);
  check_op([](Tape&, std::vector<Var>& x) { return concat({x[0], x[1]}); }, {v, w});
  check_op([](Tape&, std::vector<Var>& x) { return slice(x[0], 1, 3); }, {v});
  check_op([](Tape&, std::vector<Var>& x) { return row(x[0], 2); }, {m});
  check_op([](Tape&, std::vector<Var>& x) { return stack_rows(std::vector<Var>{x[0], x[1], x[0]}); }, {v, v});
  check_op([](Tape&, std::vector<Var>& x) { return sum(x[0]); }, {m});
  check_op([](Tape&, std::vector<Var>& x) { return add_bias(x[0], x[1]); }, {m, v});
}

TEST_CASE("matmul and linear match central differences") {
  Rng rng(4);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  const Tensor w = random_tensor({2, 4}, rng), bias = random_tensor({2}, rng), x = random_tensor({4}, rng);
  check_op([](Tape&, std::vector<Var>& v) { return matmul(v[0], v[1]); }, {a, b});
  check_op([](Tape&, std::vector<Var>& v) { return matmul(v[0], v[1]); }, {w, x});
  check_op([](Tape&, std::vector<Var>& v) { return linear(v[0], v[1], v[2]); }, {x, w, bias});
  check_op([](Tape&, std::vector<Var>& v) { return linear(v[0], v[1], v[2]); }, {a, w, bias});
  check_op([](Tape&, std::vector<Var>& v) { return linear(v[0], v[1]); }, {a, w});
}

TEST_CASE("forward values of matmul and linear") {
  Tape t;
  Var a = t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var b = t.constant(Tensor::matrix(2, 2, {5, 6, 7, 8}));
  CHECK(matmul(a, b).value().data == std::vector<double>{19, 22, 43, 50});
  Var x = t.constant(Tensor::vector({1, -1}));
  Var bias = t.constant(Tensor::vector({0.5, 0.25}));
  CHECK(linear(x, a, bias).value().data == std::vector<double>{-0.5, -0.75});
  // batch form: rows of X times W^T
  CHECK(linear(b, a, bias).value().data == std::vector<double>{17.5, 39.25, 23.5, 53.25});
}

TEST_CASE("shape mismatches are rejected") {
  Tape t;
  Var a = t.constant(Tensor::zeros({2, 3}));
  Var b = t.constant(Tensor::zeros({2, 3}));
  Var v = t.constant(Tensor::zeros({4}));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, v), ShapeError);
  CHECK_THROWS_AS(slice(v, 3, 2), ShapeError);
  CHECK_THROWS_AS(row(a, 2), ShapeError);
}

TEST_CASE("gradients accumulate across uses and backward calls") {
  Tensor p = Tensor::vector({2.0});
  {
    Tape t;
    Var x = t.param(p);
    t.backward(mul(x, x));  // d/dx x^2 = 4
  }
  {
    Tape t;
    Var x = t.param(p);
    t.backward(add(x, x), 0.5);  // 0.5 * 2
  }
  CHECK(p.grad[0] == doctest::Approx(5.0));
}

TEST_CASE("finite_difference_grad of a quadratic") {
  const Tensor x = Tensor::vector({1.0, -2.0, 0.5});
  const auto g = finite_difference_grad(
      [](const Tensor& t) {
        double s = 0.0;
        for (double v : t.data) s += v * v;
        return s;
      },
      x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(g.data[i] == doctest::Approx(2.0 * x.data[i]).epsilon(1e-8));
}

TEST_CASE("adam matches a hand-evaluated two-step trajectory") {
  // x0 = 1, lr = 0.1, gradients 0.5 then -0.25, default betas/eps.
  Tensor p = Tensor::vector({1.0});
  p.ensure_grad();
  std::vector<Tensor*> params{&p};
  AdamState st;
  st.cfg.lr = 0.1;
  p.grad[0] = 0.5;
  adam_update(params, st);
  CHECK(p.data[0] == doctest::Approx(0.900000002).epsilon(1e-14));
  p.grad[0] = -0.25;
  adam_update(params, st);
  CHECK(p.data[0] == doctest::Approx(0.8733662987078463).epsilon(1e-14));
  CHECK(st.t == 2);
}

TEST_CASE("adam refuses non-finite gradients without touching parameters") {
  Tensor a = Tensor::vector({1.0, 2.0}), b = Tensor::vector({3.0});
  a.ensure_grad();
  b.ensure_grad();
  a.grad = {0.1, 0.2};
  b.grad = {std::nan("")};
  std::vector<Tensor*> params{&a, &b};
  AdamState st;
  CHECK_THROWS_AS(adam_update(params, st), NumericError);
  CHECK(a.data == std::vector<double>{1.0, 2.0});
  CHECK(b.data == std::vector<double>{3.0});
}

TEST_CASE("clip_grad_norm rescales to the bound") {
  Tensor a = Tensor::vector({3.0}), b = Tensor::vector({4.0});
  a.ensure_grad();
  b.ensure_grad();
  a.grad = {3.0};
  b.grad = {4.0};
  std::vector<Tensor*> params{&a, &b};
  CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad[0] == doctest::Approx(0.6));
  CHECK(b.grad[0] == doctest::Approx(0.8));
  CHECK(clip_grad_norm(params, 10.0) == doctest::Approx(1.0));
  CHECK(a.grad[0] == doctest::Approx(0.6));
}

TEST_CASE("nelder-mead finds the Rosenbrock minimum") {
  auto rosen = [](const std::vector<double>& x) {
    return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
  };
  NelderMeadOptions o;
  o.max_evals = 10000;
  o.x_tol = 1e-10;
  o.f_tol = 1e-14;
  const auto r = nelder_mead(rosen, {-1.2, 1.0}, o);
  CHECK(r.converged);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("nelder-mead treats non-finite values as infeasible") {
  auto f = [](const std::vector<double>& x) { return x[0] < 0.0 ? std::nan("") : (x[0] - 2.0) * (x[0] - 2.0); };
  const auto r = nelder_mead(f, {0.5});
  CHECK(r.x[0] == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("rng is reproducible per seed") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  CHECK(Rng(42).normal() != c.normal());
}

TEST_CASE("small closed-form cases") {
  Tape t;
  Tensor w = Tensor::vector({3.0}), unused = Tensor::vector({1.0}), x0 = Tensor::vector({0.0});
  Var x = t.param(x0);
  Var s = sigmoid(x);
  CHECK(s.item() == 0.5);
  Var wv = t.param(w);
  t.param(unused);
  Var loss = add(sum(mul(wv, t.constant(Tensor::vector({2.0})))), sum(s));
  t.backward(loss);
  CHECK(w.grad[0] == 2.0);
  CHECK(x0.grad[0] == doctest::Approx(0.25));
  REQUIRE(unused.grad.size() == 1);
  CHECK(unused.grad[0] == 0.0);

  Tensor i2 = Tensor::matrix(2, 2, {1, 0, 0, 1});
  Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(matmul(t.constant(i2), t.constant(a)).value().data == a.data);
  CHECK_THROWS_AS(t.backward(t.constant(a)), ShapeError);
}

TEST_CASE("adam first step and zero gradient") {
  Tensor p = Tensor::vector({0.0, 5.0});
  p.ensure_grad();
  p.grad = {1.0, 0.0};
  std::vector<Tensor*> params{&p};
  AdamState st;
  adam_update(params, st);
  CHECK(p.data[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p.data[1] == 5.0);
}

TEST_CASE("finite differences of x^2 and sum") {
  const auto g = finite_difference_grad([](const Tensor& t) { return t.data[0] * t.data[0]; },
                                        Tensor::vector({3.0}));
  CHECK(std::abs(g.data[0] - 6.0) < 1e-8);
  const auto ones = finite_difference_grad(
      [](const Tensor& t) {
        double s = 0.0;
        for (double v : t.data) s += v;
        return s;
      },
      Tensor::vector({0.3, -7.0, 11.0}));
  for (double v : ones.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("sum of sigmoid(Wx) against central differences") {
  Rng rng(9);
  Tensor w = random_tensor({4, 3}, rng), x = random_tensor({3}, rng);
  std::vector<Tensor*> params{&w, &x};
  const auto r = grad_check(
      [&](Tape& t) { return sum(sigmoid(matmul(t.param(w), t.param(x)))); }, params);
  CHECK(r.max_rel_error < 1e-6);
}
