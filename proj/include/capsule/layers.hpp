#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "capsule/autograd.hpp"
#include "capsule/rng.hpp"
#include "capsule/tensor.hpp"

namespace capsule {

enum class Padding { same, valid };
enum class Mode { train, eval };

const char* to_string(Padding padding) noexcept;
Padding padding_from_string(const std::string& text);

template <typename T>
struct ConvParams {
  Parameter<T> weights;  // [out_ch, in_ch, 3, 3]
  Parameter<T> bias;     // [out_ch]
  Padding padding = Padding::same;
};

template <typename T>
struct DenseParams {
  Parameter<T> weights;  // [in_features, out_features]
  Parameter<T> bias;     // [out_features]
};

struct DropoutConfig {
  double rate = 0.0;
  Mode mode = Mode::eval;
};

inline constexpr std::size_t kKernel = 3;

// Output spatial extent of a 3x3 stride-1 convolution.
std::size_t conv_output_extent(std::size_t extent, Padding padding);

// ---------------------------------------------------------------------------
// Tensor kernels. Forward and backward are separate so the autograd wrappers
// below stay thin and the kernels are testable on their own.

// Cross-correlation, stride 1, via im2col + GEMM per sample.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                              const BasicTensor<T>& bias, Padding padding);

template <typename T>
struct Conv2dGrads {
  std::optional<BasicTensor<T>> input;
  std::optional<BasicTensor<T>> weights;
  std::optional<BasicTensor<T>> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& input,
                               const BasicTensor<T>& weights, Padding padding, bool want_input,
                               bool want_weights, bool want_bias);

// Unrolls the 3x3 windows of one sample [C,H,W] into [C*9, H'*W'].
template <typename T>
void im2col(const T* sample, std::size_t channels, std::size_t height, std::size_t width,
            Padding padding, T* columns);
// Adjoint of im2col: scatters-and-adds columns back into a [C,H,W] sample.
template <typename T>
void col2im(const T* columns, std::size_t channels, std::size_t height, std::size_t width,
            Padding padding, T* sample);

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  // Flat input offset of the selected element for every output element.
  std::vector<std::size_t> argmax;
};

template <typename T>
PoolResult<T> maxpool2_forward(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> maxpool2_backward(const BasicTensor<T>& upstream, const Shape& input_shape,
                                 const std::vector<std::size_t>& argmax);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

// Per-element keep flags drawn from `rng` (one uniform draw per element, kept
// when draw >= rate), or nullopt when dropout is a no-op. Throws ConfigError
// for rate outside [0, 1).
std::optional<std::vector<std::uint8_t>> dropout_keep_mask(std::size_t count, const DropoutConfig& cfg,
                                                           Rng& rng);

// ---------------------------------------------------------------------------
// Differentiable layers.

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weights, Var<T> bias, Padding padding);
template <typename T>
Var<T> conv2d(Var<T> input, ConvParams<T>& p) {
  auto& tape = input.tape();
  return conv2d(input, tape.param(p.weights), tape.param(p.bias), p.padding);
}

template <typename T>
Var<T> maxpool2(Var<T> input);

// Subgradient at exactly 0 is 0.
template <typename T>
Var<T> relu(Var<T> input);

// Inverted dropout. Eval mode (or rate 0) returns `input` itself.
template <typename T>
Var<T> dropout(Var<T> input, const DropoutConfig& cfg, Rng& rng);

template <typename T>
Var<T> flatten(Var<T> input);

template <typename T>
Var<T> dense(Var<T> input, Var<T> weights, Var<T> bias);
template <typename T>
Var<T> dense(Var<T> input, DenseParams<T>& p) {
  auto& tape = input.tape();
  return dense(input, tape.param(p.weights), tape.param(p.bias));
}

// Mean over the batch of logsumexp(logits) - logits[label]. Backward yields
// (softmax - onehot) / N. Throws LabelError on a malformed one-hot matrix.
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, const BasicTensor<T>& onehot);

}  // namespace capsule
