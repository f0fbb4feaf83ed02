#include "capsule/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

namespace capsule {

const char* to_string(Padding padding) noexcept {
  return padding == Padding::same ? "same" : "valid";
}

Padding padding_from_string(const std::string& text) {
  if (text == "same") return Padding::same;
  if (text == "valid") return Padding::valid;
  throw ConfigError("unknown padding '" + text + "' (expected same|valid)");
}

std::size_t conv_output_extent(std::size_t extent, Padding padding) {
  if (padding == Padding::same) return extent;
  if (extent < kKernel) {
    throw ShapeError("valid 3x3 convolution needs spatial extent >= 3, got " + std::to_string(extent));
  }
  return extent - (kKernel - 1);
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  std::size_t batch, in_ch, out_ch, height, width, out_h, out_w;
  std::size_t patch() const { return in_ch * kKernel * kKernel; }
  std::size_t pixels() const { return out_h * out_w; }
};

template <typename T>
ConvGeometry conv_geometry(const BasicTensor<T>& input, const BasicTensor<T>& weights, Padding padding) {
  if (input.rank() != 4) throw ShapeError("conv2d input must be [N,C,H,W], got " + shape_string(input.shape()));
  if (weights.rank() != 4 || weights.dim(2) != kKernel || weights.dim(3) != kKernel) {
    throw ShapeError("conv2d weights must be [out,in,3,3], got " + shape_string(weights.shape()));
  }
  if (weights.dim(1) != input.dim(1)) {
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(input.dim(1)) +
                     " channels, weights expect " + std::to_string(weights.dim(1)));
  }
  ConvGeometry g{input.dim(0), input.dim(1), weights.dim(0), input.dim(2), input.dim(3), 0, 0};
  g.out_h = conv_output_extent(g.height, padding);
  g.out_w = conv_output_extent(g.width, padding);
  return g;
}

template <typename T>
void check_finite(const BasicTensor<T>& t, const char* what) {
  for (auto x : t.data()) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite value");
  }
}

}  // namespace

template <typename T>
void im2col(const T* sample, std::size_t channels, std::size_t height, std::size_t width,
            Padding padding, T* columns) {
  const std::size_t out_h = conv_output_extent(height, padding);
  const std::size_t out_w = conv_output_extent(width, padding);
  const std::ptrdiff_t pad = padding == Padding::same ? 1 : 0;
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(height);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(width);
  T* dst = columns;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = sample + c * height * width;
    for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
      for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) + ky - pad;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + out_w, T{0});
            dst += out_w;
            continue;
          }
          const T* row = plane + iy * w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) + kx - pad;
            *dst++ = (ix < 0 || ix >= w) ? T{0} : row[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* columns, std::size_t channels, std::size_t height, std::size_t width,
            Padding padding, T* sample) {
  const std::size_t out_h = conv_output_extent(height, padding);
  const std::size_t out_w = conv_output_extent(width, padding);
  const std::ptrdiff_t pad = padding == Padding::same ? 1 : 0;
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(height);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(width);
  const T* src = columns;
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = sample + c * height * width;
    for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
      for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) + ky - pad;
          if (iy < 0 || iy >= h) {
            src += out_w;
            continue;
          }
          T* row = plane + iy * w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) + kx - pad;
            if (ix >= 0 && ix < w) row[ix] += *src;
            ++src;
          }
        }
      }
    }
  }
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                              const BasicTensor<T>& bias, Padding padding) {
  const auto g = conv_geometry(input, weights, padding);
  if (bias.rank() != 1 || bias.dim(0) != g.out_ch) {
    throw ShapeError("conv2d bias must be [" + std::to_string(g.out_ch) + "], got " + shape_string(bias.shape()));
  }
  auto out = BasicTensor<T>::zeros({g.batch, g.out_ch, g.out_h, g.out_w});
  std::vector<T> columns(g.patch() * g.pixels());
  ConstMatMap<T> w(weights.data().data(), g.out_ch, g.patch());
  ConstMatMap<T> cols(columns.data(), g.patch(), g.pixels());
  const std::size_t in_stride = g.in_ch * g.height * g.width;
  const std::size_t out_stride = g.out_ch * g.pixels();
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(input.data().data() + n * in_stride, g.in_ch, g.height, g.width, padding, columns.data());
    MatMap<T> y(out.data().data() + n * out_stride, g.out_ch, g.pixels());
    y.noalias() = w * cols;
    for (std::size_t o = 0; o < g.out_ch; ++o) y.row(o).array() += bias[o];
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& input,
                               const BasicTensor<T>& weights, Padding padding, bool want_input,
                               bool want_weights, bool want_bias) {
  const auto g = conv_geometry(input, weights, padding);
  const Shape expected{g.batch, g.out_ch, g.out_h, g.out_w};
  if (upstream.shape() != expected) {
    throw ShapeError("conv2d upstream gradient " + shape_string(upstream.shape()) + " != " + shape_string(expected));
  }
  Conv2dGrads<T> grads;
  if (want_input) grads.input = BasicTensor<T>::zeros(input.shape());
  if (want_weights) grads.weights = BasicTensor<T>::zeros(weights.shape());
  if (want_bias) grads.bias = BasicTensor<T>::zeros({g.out_ch});

  std::vector<T> columns(g.patch() * g.pixels());
  MatMap<T> cols(columns.data(), g.patch(), g.pixels());
  ConstMatMap<T> w(weights.data().data(), g.out_ch, g.patch());
  const std::size_t in_stride = g.in_ch * g.height * g.width;
  const std::size_t out_stride = g.out_ch * g.pixels();
  for (std::size_t n = 0; n < g.batch; ++n) {
    ConstMatMap<T> dy(upstream.data().data() + n * out_stride, g.out_ch, g.pixels());
    if (want_bias) {
      // Plain loop: Eigen's vectorised sum peels by pointer alignment, which
      // would make the summation order (and the bits) allocation-dependent.
      const T* row = upstream.data().data() + n * out_stride;
      for (std::size_t o = 0; o < g.out_ch; ++o) {
        T acc = 0;
        for (std::size_t i = 0; i < g.pixels(); ++i) acc += row[o * g.pixels() + i];
        (*grads.bias)[o] += acc;
      }
    }
    if (want_weights) {
      im2col(input.data().data() + n * in_stride, g.in_ch, g.height, g.width, padding, columns.data());
      MatMap<T> dw(grads.weights->data().data(), g.out_ch, g.patch());
      dw.noalias() += dy * cols.transpose();
    }
    if (want_input) {
      cols.noalias() = w.transpose() * dy;
      col2im(columns.data(), g.in_ch, g.height, g.width, padding, grads.input->data().data() + n * in_stride);
    }
  }
  return grads;
}

template <typename T>
PoolResult<T> maxpool2_forward(const BasicTensor<T>& input) {
  if (input.rank() != 4) throw ShapeError("maxpool2 input must be [N,C,H,W], got " + shape_string(input.shape()));
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h < 2 || w < 2) throw ShapeError("maxpool2 needs H,W >= 2, got " + shape_string(input.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  PoolResult<T> result{BasicTensor<T>::zeros({n, c, oh, ow}), {}};
  result.argmax.resize(n * c * oh * ow);
  const T* src = input.data().data();
  T* dst = result.output.data().data();
  std::size_t k = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x, ++k) {
        const std::size_t top = base + 2 * y * w + 2 * x;
        const std::size_t window[4] = {top, top + 1, top + w, top + w + 1};
        std::size_t best = window[0];
        for (int i = 1; i < 4; ++i) {
          if (src[window[i]] > src[best]) best = window[i];
        }
        dst[k] = src[best];
        result.argmax[k] = best;
      }
    }
  }
  return result;
}

template <typename T>
BasicTensor<T> maxpool2_backward(const BasicTensor<T>& upstream, const Shape& input_shape,
                                 const std::vector<std::size_t>& argmax) {
  if (upstream.size() != argmax.size()) throw ShapeError("maxpool2 backward: gradient/index size mismatch");
  auto grad = BasicTensor<T>::zeros(input_shape);
  for (std::size_t k = 0; k < argmax.size(); ++k) grad[argmax[k]] += upstream[k];
  return grad;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects [N,K], got " + shape_string(logits.shape()));
  check_finite(logits, "softmax logits");
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  auto out = BasicTensor<T>::zeros(logits.shape());
  std::vector<double> e(k);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = logits.data().data() + r * k;
    const double top = *std::max_element(x, x + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      e[j] = std::exp(static_cast<double>(x[j]) - top);
      total += e[j];
    }
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] = static_cast<T>(e[j] / total);
  }
  return out;
}

std::optional<std::vector<std::uint8_t>> dropout_keep_mask(std::size_t count, const DropoutConfig& cfg,
                                                           Rng& rng) {
  if (!(cfg.rate >= 0.0 && cfg.rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(cfg.rate));
  }
  if (cfg.mode == Mode::eval || cfg.rate == 0.0) return std::nullopt;
  std::vector<std::uint8_t> keep(count);
  for (auto& k : keep) k = rng.uniform() >= cfg.rate ? 1 : 0;
  return keep;
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weights, Var<T> bias, Padding padding) {
  auto out = conv2d_forward(input.value(), weights.value(), bias.value(), padding);
  Tape<T>* tape = &input.tape();
  const std::size_t ix = input.id(), iw = weights.id();
  return tape->record("conv2d", {input, weights, bias}, std::move(out),
                      [tape, ix, iw, padding](const BasicTensor<T>& g, std::span<const bool> wanted) {
                        auto grads = conv2d_backward(g, tape->value(Var<T>(tape, ix)),
                                                     tape->value(Var<T>(tape, iw)), padding, wanted[0],
                                                     wanted[1], wanted[2]);
                        std::vector<std::optional<BasicTensor<T>>> r;
                        r.push_back(std::move(grads.input));
                        r.push_back(std::move(grads.weights));
                        r.push_back(std::move(grads.bias));
                        return r;
                      });
}

template <typename T>
Var<T> maxpool2(Var<T> input) {
  auto pooled = maxpool2_forward(input.value());
  Shape shape = input.shape();
  return input.tape().record(
      "maxpool2", {input}, std::move(pooled.output),
      [shape = std::move(shape), argmax = std::move(pooled.argmax)](const BasicTensor<T>& g,
                                                                    std::span<const bool>) {
        std::vector<std::optional<BasicTensor<T>>> r(1);
        r[0] = maxpool2_backward(g, shape, argmax);
        return r;
      });
}

template <typename T>
Var<T> relu(Var<T> input) {
  auto out = input.value();
  for (auto& x : out.data()) x = x > T{0} ? x : T{0};
  Tape<T>* tape = &input.tape();
  const std::size_t ix = input.id();
  return tape->record("relu", {input}, std::move(out),
                      [tape, ix](const BasicTensor<T>& g, std::span<const bool>) {
                        const auto& x = tape->value(Var<T>(tape, ix));
                        auto dx = g;
                        for (std::size_t i = 0; i < dx.size(); ++i) {
                          if (!(x[i] > T{0})) dx[i] = T{0};
                        }
                        std::vector<std::optional<BasicTensor<T>>> r(1);
                        r[0] = std::move(dx);
                        return r;
                      });
}

template <typename T>
Var<T> dropout(Var<T> input, const DropoutConfig& cfg, Rng& rng) {
  auto keep = dropout_keep_mask(input.value().size(), cfg, rng);
  if (!keep) return input;
  input.tape().mark_stochastic();
  const T scale = static_cast<T>(1.0 / (1.0 - cfg.rate));
  auto out = input.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*keep)[i] ? out[i] * scale : T{0};
  return input.tape().record("dropout", {input}, std::move(out),
                             [keep = std::move(*keep), scale](const BasicTensor<T>& g, std::span<const bool>) {
                               auto dx = g;
                               for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = keep[i] ? dx[i] * scale : T{0};
                               std::vector<std::optional<BasicTensor<T>>> r(1);
                               r[0] = std::move(dx);
                               return r;
                             });
}

template <typename T>
Var<T> flatten(Var<T> input) {
  if (input.value().rank() != 4) {
    throw ShapeError("flatten expects [N,C,H,W], got " + shape_string(input.shape()));
  }
  const auto& s = input.shape();
  return reshape(input, Shape{s[0], s[1] * s[2] * s[3]});
}

template <typename T>
Var<T> dense(Var<T> input, Var<T> weights, Var<T> bias) {
  const auto& x = input.value();
  const auto& w = weights.value();
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
    throw ShapeError("dense: input " + shape_string(x.shape()) + " incompatible with weights " +
                     shape_string(w.shape()));
  }
  if (bias.value().rank() != 1 || bias.value().dim(0) != w.dim(1)) {
    throw ShapeError("dense: bias " + shape_string(bias.shape()) + " does not match " + shape_string(w.shape()));
  }
  return add(matmul(input, weights), bias);
}

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, const BasicTensor<T>& onehot) {
  const auto& z = logits.value();
  if (z.rank() != 2 || onehot.shape() != z.shape()) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_string(z.shape()) + " vs onehot " +
                     shape_string(onehot.shape()));
  }
  check_finite(z, "softmax_cross_entropy logits");
  const std::size_t n = z.dim(0), k = z.dim(1);
  std::vector<std::size_t> labels(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const T v = onehot[r * k + j];
      if (v == T{1}) {
        ++ones;
        labels[r] = j;
      } else if (v != T{0}) {
        ones = 2;
      }
    }
    if (ones != 1) throw LabelError("malformed one-hot row " + std::to_string(r));
  }

  // Loss and gradient share the row-wise stabilised exponentials.
  auto probs = BasicTensor<T>::zeros(z.shape());
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = z.data().data() + r * k;
    const double top = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - top);
    const double lse = top + std::log(sum);
    total += lse - static_cast<double>(row[labels[r]]);
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - lse));
  }
  const auto loss = BasicTensor<T>::scalar(static_cast<T>(total / static_cast<double>(n)));
  return logits.tape().record(
      "softmax_cross_entropy", {logits}, loss,
      [probs = std::move(probs), labels = std::move(labels), n, k](const BasicTensor<T>& g, std::span<const bool>) {
        auto dz = probs;
        const T scale = g.item() / static_cast<T>(n);
        for (std::size_t r = 0; r < n; ++r) {
          dz[r * k + labels[r]] -= T{1};
          for (std::size_t j = 0; j < k; ++j) dz[r * k + j] *= scale;
        }
        std::vector<std::optional<BasicTensor<T>>> out(1);
        out[0] = std::move(dz);
        return out;
      });
}

#define CAPSULE_INSTANTIATE(T)                                                                            \
  template void im2col(const T*, std::size_t, std::size_t, std::size_t, Padding, T*);                    \
  template void col2im(const T*, std::size_t, std::size_t, std::size_t, Padding, T*);                    \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicTensor<T>&,                    \
                                         const BasicTensor<T>&, Padding);                                 \
  template Conv2dGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                          const BasicTensor<T>&, Padding, bool, bool, bool);              \
  template PoolResult<T> maxpool2_forward(const BasicTensor<T>&);                                         \
  template BasicTensor<T> maxpool2_backward(const BasicTensor<T>&, const Shape&,                          \
                                            const std::vector<std::size_t>&);                             \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                                 \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, Padding);                                                \
  template Var<T> maxpool2(Var<T>);                                                                       \
  template Var<T> relu(Var<T>);                                                                           \
  template Var<T> dropout(Var<T>, const DropoutConfig&, Rng&);                                            \
  template Var<T> flatten(Var<T>);                                                                        \
  template Var<T> dense(Var<T>, Var<T>, Var<T>);                                                          \
  template Var<T> softmax_cross_entropy(Var<T>, const BasicTensor<T>&);

CAPSULE_INSTANTIATE(float)
CAPSULE_INSTANTIATE(double)

#undef CAPSULE_INSTANTIATE

}  // namespace capsule
