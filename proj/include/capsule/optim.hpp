#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "capsule/autograd.hpp"
#include "capsule/data.hpp"
#include "capsule/model.hpp"
#include "capsule/rng.hpp"

namespace capsule {

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t t = 0;
  std::vector<Tensor64> m;
  std::vector<Tensor64> v;
};

struct StepStats {
  // Largest |delta p| over every coordinate touched by the step.
  double max_abs_update = 0.0;
};

// Bias-corrected Adam. Reads p->grad, leaves gradients untouched (the caller
// zeroes them). Moments are kept in double. Throws ShapeError when the
// moment shapes do not mirror the parameters, NumericError (naming the
// parameter) on a non-finite gradient.
template <typename T>
StepStats adam_step(std::span<Parameter<T>* const> params, AdamState& state);

struct EpochStats {
  double loss = 0.0;      // sample-weighted mean over batches
  double accuracy = 0.0;  // argmax(logits) == label, train-mode logits
  double max_abs_update = 0.0;
  std::size_t samples = 0;
};

// One pass over `data`: shuffle once from `shuffle_rng`, then per batch
// forward(train) -> softmax CE -> backward -> adam_step -> zero grads. The
// final short batch is trained. Throws DataError on an empty dataset and
// NumericError (with epoch/batch coordinates) on a non-finite loss.
EpochStats train_epoch(Model& model, const LabeledImages& data, std::size_t batch_size, AdamState& adam,
                       Rng& shuffle_rng, Rng& dropout_rng, std::size_t epoch_number = 1);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  Tensor probabilities;  // [N, num_classes], dataset order
};

// Eval-mode pass in sorted (unshuffled) order.
EvalResult evaluate(const Model& model, const LabeledImages& data, std::size_t batch_size);

}  // namespace capsule
