#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capsule/tensor.hpp"

namespace capsule {

// A trainable tensor that outlives any single tape. Gradients accumulate into
// `grad` across backward passes until the training loop zeroes them.
template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, BasicTensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(BasicTensor<T>::zeros(value.shape())) {}

  void zero_grad() { grad.fill(T{0}); }
};

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const BasicTensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Maps the upstream gradient to one gradient per parent. `wanted[i]` is false
// for parents that do not require a gradient; the entry may then be nullopt.
template <typename T>
using BackwardFn = std::function<std::vector<std::optional<BasicTensor<T>>>(
    const BasicTensor<T>& upstream, std::span<const bool> wanted)>;

// Define-by-run record of one forward pass. Nodes are appended in
// topological order, so a reverse sweep is a valid backward schedule.
template <typename T>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf owning its value; its gradient lives on the tape.
  Var<T> leaf(BasicTensor<T> value, bool requires_grad = true);
  Var<T> constant(BasicTensor<T> value) { return leaf(std::move(value), false); }
  // Leaf bound to an external parameter; backward accumulates into p.grad.
  Var<T> param(Parameter<T>& p);

  Var<T> record(std::string op, std::vector<Var<T>> inputs, BasicTensor<T> value,
                BackwardFn<T> backward);

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Gradients add
  // into whatever the leaves already hold.
  void backward(Var<T> loss);

  const BasicTensor<T>& value(Var<T> v) const;
  // Gradient of a node; zeros if nothing flowed into it.
  BasicTensor<T> grad(Var<T> v) const;
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id()).requires_grad; }
  const std::string& op(Var<T> v) const { return nodes_.at(v.id()).op; }
  std::span<const std::size_t> parents(Var<T> v) const { return nodes_.at(v.id()).parents; }

  std::size_t size() const noexcept { return nodes_.size(); }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  // Set by ops that consume randomness (train-mode dropout).
  void mark_stochastic() noexcept { stochastic_ = true; }
  bool stochastic() const noexcept { return stochastic_; }

 private:
  struct Node {
    std::string op;
    BasicTensor<T> value;
    Parameter<T>* bound = nullptr;
    std::optional<BasicTensor<T>> grad;
    std::vector<std::size_t> parents;
    BackwardFn<T> backward;
    bool requires_grad = false;
  };

  void accumulate(Node& node, BasicTensor<T> g);

  std::vector<Node> nodes_;
  bool grad_enabled_;
  bool stochastic_ = false;
};

template <typename T>
const BasicTensor<T>& Var<T>::value() const {
  return tape_->value(*this);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(*this);
}

// Basic differentiable ops.
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
// Sum of every element to a rank-0 scalar.
template <typename T>
Var<T> sum(Var<T> a);
// a * b with rank-2 operands.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
template <typename T>
Var<T> reshape(Var<T> a, Shape shape);

// Builds a scalar loss on a fresh tape; must read `leaf` through tape.param().
template <typename T>
using LossFn = std::function<Var<T>(Tape<T>&)>;

// Compares the analytic gradient of `f` with respect to `leaf` against a
// central difference with step h, coordinate by coordinate. Returns
// max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// Throws ContractError when f draws randomness.
double grad_check(const LossFn<double>& f, Parameter<double>& leaf, double h = 1e-5);

}  // namespace capsule
