#include "capsule/autograd.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <memory>

namespace capsule {

template <typename T>
Var<T> Tape<T>::leaf(BasicTensor<T> value, bool requires_grad) {
  Node node;
  node.op = "leaf";
  node.value = std::move(value);
  node.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  Node node;
  node.op = "param:" + p.name;
  node.bound = &p;
  node.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(std::string op, std::vector<Var<T>> inputs, BasicTensor<T> value,
                       BackwardFn<T> backward) {
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  for (const auto& in : inputs) {
    assert(&in.tape() == this && in.id() < nodes_.size());
    node.parents.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
const BasicTensor<T>& Tape<T>::value(Var<T> v) const {
  const Node& node = nodes_.at(v.id());
  return node.bound ? node.bound->value : node.value;
}

template <typename T>
BasicTensor<T> Tape<T>::grad(Var<T> v) const {
  const Node& node = nodes_.at(v.id());
  if (node.bound) return node.bound->grad;
  if (node.grad) return *node.grad;
  return BasicTensor<T>::zeros(value(v).shape());
}

template <typename T>
void Tape<T>::accumulate(Node& node, BasicTensor<T> g) {
  if (node.bound) {
    node.bound->grad += g;
  } else if (node.grad) {
    *node.grad += g;
  } else {
    node.grad = std::move(g);
  }
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  const std::size_t root = loss.id();
  if (&loss.tape() != this || root >= nodes_.size()) {
    throw ContractError("backward: loss is not on this tape");
  }
  if (value(loss).size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_string(value(loss).shape()));
  }
  if (!nodes_[root].requires_grad) return;

  accumulate(nodes_[root], BasicTensor<T>::ones(value(loss).shape()));
  std::vector<bool> wanted;
  for (std::size_t i = root + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || !node.grad) continue;
    wanted.assign(node.parents.size(), false);
    for (std::size_t p = 0; p < node.parents.size(); ++p) {
      wanted[p] = nodes_[node.parents[p]].requires_grad;
    }
    // std::vector<bool> has no contiguous storage; copy into a plain array.
    std::unique_ptr<bool[]> flags(new bool[wanted.size()]);
    std::copy(wanted.begin(), wanted.end(), flags.get());
    auto grads = node.backward(*node.grad, std::span<const bool>(flags.get(), wanted.size()));
    assert(grads.size() == node.parents.size());
    for (std::size_t p = 0; p < node.parents.size(); ++p) {
      if (!wanted[p] || !grads[p]) continue;
      Node& parent = nodes_[node.parents[p]];
      assert(grads[p]->shape() == value(Var<T>(this, node.parents[p])).shape());
      accumulate(parent, std::move(*grads[p]));
    }
  }
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  auto out = elementwise(a.value(), b.value(), BinaryOp::add);
  const bool broadcast = a.shape() != b.shape();
  return a.tape().record("add", {a, b}, std::move(out),
                         [broadcast](const BasicTensor<T>& g, std::span<const bool>) {
                           std::vector<std::optional<BasicTensor<T>>> r(2);
                           r[0] = g;
                           if (broadcast) {
                             auto rows = g.reshaped({g.size() / g.shape().back(), g.shape().back()});
                             r[1] = reduce(rows, 0, ReduceOp::sum);
                           } else {
                             r[1] = g;
                           }
                           return r;
                         });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) throw ShapeError("autograd sub requires identical shapes");
  auto out = elementwise(a.value(), b.value(), BinaryOp::sub);
  return a.tape().record("sub", {a, b}, std::move(out),
                         [](const BasicTensor<T>& g, std::span<const bool>) {
                           std::vector<std::optional<BasicTensor<T>>> r(2);
                           r[0] = g;
                           auto neg = g;
                           for (auto& x : neg.data()) x = -x;
                           r[1] = std::move(neg);
                           return r;
                         });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) throw ShapeError("autograd mul requires identical shapes");
  auto out = elementwise(a.value(), b.value(), BinaryOp::mul);
  Tape<T>* tape = &a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return tape->record("mul", {a, b}, std::move(out),
                      [tape, ia, ib](const BasicTensor<T>& g, std::span<const bool> wanted) {
                        std::vector<std::optional<BasicTensor<T>>> r(2);
                        if (wanted[0]) r[0] = elementwise(g, tape->value(Var<T>(tape, ib)), BinaryOp::mul);
                        if (wanted[1]) r[1] = elementwise(g, tape->value(Var<T>(tape, ia)), BinaryOp::mul);
                        return r;
                      });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T total{0};
  for (auto x : a.value().data()) total += x;
  const Shape shape = a.shape();
  return a.tape().record("sum", {a}, BasicTensor<T>::scalar(total),
                         [shape](const BasicTensor<T>& g, std::span<const bool>) {
                           std::vector<std::optional<BasicTensor<T>>> r(1);
                           r[0] = BasicTensor<T>::full(shape, g.item());
                           return r;
                         });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto out = matmul(a.value(), b.value());
  Tape<T>* tape = &a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return tape->record("matmul", {a, b}, std::move(out),
                      [tape, ia, ib](const BasicTensor<T>& g, std::span<const bool> wanted) {
                        std::vector<std::optional<BasicTensor<T>>> r(2);
                        const auto& av = tape->value(Var<T>(tape, ia));
                        const auto& bv = tape->value(Var<T>(tape, ib));
                        if (wanted[0]) r[0] = matmul(g, bv, Transpose::no, Transpose::yes);
                        if (wanted[1]) r[1] = matmul(av, g, Transpose::yes, Transpose::no);
                        return r;
                      });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  const Shape original = a.shape();
  return a.tape().record("reshape", {a}, a.value().reshaped(std::move(shape)),
                         [original](const BasicTensor<T>& g, std::span<const bool>) {
                           std::vector<std::optional<BasicTensor<T>>> r(1);
                           r[0] = g.reshaped(original);
                           return r;
                         });
}

double grad_check(const LossFn<double>& f, Parameter<double>& leaf, double h) {
  auto evaluate = [&](bool with_grad) {
    Tape<double> tape(with_grad);
    Var<double> loss = f(tape);
    if (tape.stochastic()) {
      throw ContractError("grad_check: loss function draws randomness (disable dropout)");
    }
    if (with_grad) tape.backward(loss);
    return loss.value().item();
  };

  const auto saved_grad = leaf.grad;
  leaf.zero_grad();
  evaluate(true);
  const auto analytic = leaf.grad;
  leaf.grad = saved_grad;

  double worst = 0.0;
  auto x = leaf.value.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double original = x[i];
    x[i] = original + h;
    const double plus = evaluate(false);
    x[i] = original - h;
    const double minus = evaluate(false);
    x[i] = original;
    const double numeric = (plus - minus) / (2.0 * h);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

#define CAPSULE_INSTANTIATE(T)                    \
  template class Tape<T>;                         \
  template Var<T> add(Var<T>, Var<T>);            \
  template Var<T> sub(Var<T>, Var<T>);            \
  template Var<T> mul(Var<T>, Var<T>);            \
  template Var<T> sum(Var<T>);                    \
  template Var<T> matmul(Var<T>, Var<T>);         \
  template Var<T> reshape(Var<T>, Shape);

CAPSULE_INSTANTIATE(float)
CAPSULE_INSTANTIATE(double)

#undef CAPSULE_INSTANTIATE

}  // namespace capsule
