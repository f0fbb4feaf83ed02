#include "capsule/optim.hpp"

#include <algorithm>
#include <cmath>

#include "capsule/layers.hpp"

namespace capsule {

template <typename T>
StepStats adam_step(std::span<Parameter<T>* const> params, AdamState& state) {
  if (state.m.empty() && state.v.empty()) {
    for (const auto* p : params) {
      state.m.push_back(Tensor64::zeros(p->value.shape()));
      state.v.push_back(Tensor64::zeros(p->value.shape()));
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam: moment count does not match parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* p = params[i];
    if (p->grad.shape() != p->value.shape() || state.m[i].shape() != p->value.shape() ||
        state.v[i].shape() != p->value.shape()) {
      throw ShapeError("adam: shape mismatch for parameter '" + p->name + "'");
    }
    for (auto g : p->grad.data()) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient in parameter '" + p->name + "'");
    }
  }

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  StepStats stats;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i]->value.data();
    auto grad = params[i]->grad.data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      const T before = value[k];
      value[k] = static_cast<T>(static_cast<double>(before) - state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon));
      stats.max_abs_update =
          std::max(stats.max_abs_update, std::abs(static_cast<double>(value[k]) - static_cast<double>(before)));
    }
  }
  return stats;
}

template StepStats adam_step(std::span<Parameter<float>* const>, AdamState&);
template StepStats adam_step(std::span<Parameter<double>* const>, AdamState&);

EpochStats train_epoch(Model& model, const LabeledImages& data, std::size_t batch_size, AdamState& adam,
                       Rng& shuffle_rng, Rng& dropout_rng, std::size_t epoch_number) {
  if (data.size() == 0) throw DataError("cannot train on an empty dataset");
  const auto batches = make_batches(data.size(), batch_size, true, &shuffle_rng);
  auto params = model.parameters();

  EpochStats stats;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const Batch batch = assemble_batch(data, batches[b], model.spec().num_classes);
    Tape<float> tape;
    auto logits = model.forward_logits(tape, tape.constant(batch.images), Mode::train, &dropout_rng);
    auto loss = softmax_cross_entropy(logits, batch.onehot);
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
      throw NumericError("non-finite loss at epoch " + std::to_string(epoch_number) + ", batch " +
                         std::to_string(b + 1));
    }
    tape.backward(loss);
    const auto step = adam_step<float>(params, adam);
    model.zero_grad();

    const std::size_t n = batch.labels.size();
    loss_sum += value * static_cast<double>(n);
    const auto predicted = argmax_rows(logits.value());
    for (std::size_t i = 0; i < n; ++i) correct += predicted[i] == batch.labels[i];
    stats.max_abs_update = std::max(stats.max_abs_update, step.max_abs_update);
  }
  stats.samples = data.size();
  stats.loss = loss_sum / static_cast<double>(data.size());
  stats.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return stats;
}

EvalResult evaluate(const Model& model, const LabeledImages& data, std::size_t batch_size) {
  if (data.size() == 0) throw DataError("cannot evaluate an empty dataset");
  const std::size_t k = model.spec().num_classes;
  EvalResult result;
  result.probabilities = Tensor::zeros({data.size(), k});
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::size_t row = 0;
  for (const auto& indices : make_batches(data.size(), batch_size, false, nullptr)) {
    const Batch batch = assemble_batch(data, indices, k);
    const Tensor logits = model.eval_logits(batch.images);
    const Tensor probs = softmax(logits);
    const auto predicted = argmax_rows(probs);
    for (std::size_t i = 0; i < indices.size(); ++i, ++row) {
      const float* p = probs.data().data() + i * k;
      std::copy(p, p + k, result.probabilities.data().begin() + static_cast<std::ptrdiff_t>(row * k));
      const float* z = logits.data().data() + i * k;
      const double top = *std::max_element(z, z + k);
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(z[j]) - top);
      loss_sum += top + std::log(sum) - static_cast<double>(z[batch.labels[i]]);
      correct += predicted[i] == batch.labels[i];
    }
  }
  result.loss = loss_sum / static_cast<double>(data.size());
  result.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return result;
}

}  // namespace capsule
