#include <doctest.h>

#include "capsule/autograd.hpp"
#include "capsule/layers.hpp"
#include "oracles.hpp"

using namespace capsule;

TEST_CASE("sum of products has the expected gradients") {
  Tape<double> tape;
  auto a = tape.leaf(Tensor64({3}, {1, 2, 3}));
  auto b = tape.leaf(Tensor64({3}, {4, 5, 6}));
  auto loss = sum(mul(a, b));
  CHECK(loss.value().item() == 32.0);
  tape.backward(loss);
  CHECK(tape.grad(a).buffer() == std::vector<double>{4, 5, 6});
  CHECK(tape.grad(b).buffer() == std::vector<double>{1, 2, 3});
}

TEST_CASE("shared inputs accumulate gradient") {
  Tape<double> tape;
  auto a = tape.leaf(Tensor64({2}, {3, -1}));
  auto loss = sum(add(mul(a, a), a));  // d/da = 2a + 1
  tape.backward(loss);
  CHECK(tape.grad(a).buffer() == std::vector<double>{7, -1});
}

TEST_CASE("parameters accumulate across backward passes") {
  Parameter<double> p("p", Tensor64({2}, {1, 2}));
  for (int i = 0; i < 2; ++i) {
    Tape<double> tape;
    tape.backward(sum(tape.param(p)));
  }
  CHECK(p.grad.buffer() == std::vector<double>{2, 2});
  p.zero_grad();
  CHECK(p.grad.buffer() == std::vector<double>{0, 0});
}

TEST_CASE("constants receive no gradient") {
  Tape<double> tape;
  auto a = tape.leaf(Tensor64({2}, {1, 2}));
  auto c = tape.constant(Tensor64({2}, {5, 5}));
  auto loss = sum(mul(a, c));
  CHECK_FALSE(c.requires_grad());
  tape.backward(loss);
  CHECK(tape.grad(c).buffer() == std::vector<double>{0, 0});
}

TEST_CASE("backward requires a scalar loss") {
  Tape<double> tape;
  auto a = tape.leaf(Tensor64({2}, {1, 2}));
  CHECK_THROWS_AS(tape.backward(a), ContractError);
}

TEST_CASE("tape records ops in topological order") {
  Tape<double> tape;
  auto a = tape.leaf(Tensor64({2, 2}, {1, 2, 3, 4}));
  auto m = matmul(a, a);
  auto s = sum(m);
  CHECK(tape.size() == 3);
  CHECK(tape.op(s) == "sum");
  REQUIRE(tape.parents(m).size() == 2);
  for (auto parent : tape.parents(s)) CHECK(parent < s.id());
}

TEST_CASE("matmul and bias-broadcast gradients pass grad_check") {
  Rng rng(11);
  Parameter<double> w("w", oracle::random_tensor({4, 3}, rng));
  Parameter<double> b("b", oracle::random_tensor({3}, rng));
  const auto x = oracle::random_tensor({5, 4}, rng);
  const auto y = oracle::random_tensor({5, 3}, rng);
  LossFn<double> f = [&](Tape<double>& t) {
    auto out = add(matmul(t.constant(x), t.param(w)), t.param(b));
    auto d = sub(out, t.constant(y));
    return sum(mul(d, d));
  };
  CHECK(grad_check(f, w) < 1e-7);
  CHECK(grad_check(f, b) < 1e-7);
}

TEST_CASE("grad_check refuses stochastic losses") {
  Parameter<double> p("p", Tensor64({4}, {1, 2, 3, 4}));
  Rng rng(1);
  LossFn<double> f = [&](Tape<double>& t) {
    return sum(dropout(t.param(p), DropoutConfig{0.5, Mode::train}, rng));
  };
  CHECK_THROWS_AS(grad_check(f, p), ContractError);
}

TEST_CASE("grad-disabled tape still computes values") {
  Parameter<double> p("p", Tensor64({2}, {1, 2}));
  Tape<double> tape(false);
  auto loss = sum(mul(tape.param(p), tape.param(p)));
  CHECK(loss.value().item() == 5.0);
}
