#include "capsule/model.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace capsule {

std::vector<std::string> canonical_class_names() {
  return {kClassNames.begin(), kClassNames.end()};
}

std::size_t class_index(std::string_view name) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (kClassNames[i] == name) return i;
  }
  throw LabelError("unknown class name '" + std::string(name) + "'");
}

const char* to_string(PaddingPolicy policy) noexcept {
  switch (policy) {
    case PaddingPolicy::per_block: return "per-block";
    case PaddingPolicy::first_layer_only: return "first-layer-only";
    case PaddingPolicy::all_same: return "all-same";
  }
  return "?";
}

PaddingPolicy padding_policy_from_string(const std::string& text) {
  if (text == "per-block") return PaddingPolicy::per_block;
  if (text == "first-layer-only") return PaddingPolicy::first_layer_only;
  if (text == "all-same") return PaddingPolicy::all_same;
  throw ConfigError("unknown padding policy '" + text + "' (expected per-block|first-layer-only|all-same)");
}

ModelSpec ModelSpec::canonical(std::size_t height, std::size_t width, PaddingPolicy policy) {
  ModelSpec spec;
  spec.height = height;
  spec.width = width;
  spec.set_padding(policy);
  return spec;
}

void ModelSpec::set_padding(PaddingPolicy policy) {
  padding.assign(conv_count(), Padding::valid);
  for (std::size_t i = 0; i < padding.size(); ++i) {
    switch (policy) {
      case PaddingPolicy::per_block:
        if (i % convs_per_block == 0) padding[i] = Padding::same;
        break;
      case PaddingPolicy::first_layer_only:
        if (i == 0) padding[i] = Padding::same;
        break;
      case PaddingPolicy::all_same: padding[i] = Padding::same; break;
    }
  }
}

namespace {

// Returns the extent after every block, or nullopt on underflow.
std::optional<std::size_t> trace_extent(const ModelSpec& spec, std::size_t extent) {
  std::size_t layer = 0;
  for (std::size_t b = 0; b < spec.block_filters.size(); ++b) {
    for (std::size_t c = 0; c < spec.convs_per_block; ++c, ++layer) {
      if (spec.padding[layer] == Padding::valid) {
        if (extent < kKernel) return std::nullopt;
        extent -= kKernel - 1;
      }
    }
    if (extent < 2) return std::nullopt;
    extent /= 2;
  }
  return extent;
}

}  // namespace

void ModelSpec::validate() const {
  if (channels == 0 || height == 0 || width == 0) throw SpecError("input dimensions must be positive");
  if (block_filters.empty()) throw SpecError("model needs at least one convolutional block");
  if (convs_per_block == 0) throw SpecError("convs_per_block must be >= 1");
  for (auto f : block_filters) {
    if (f == 0) throw SpecError("block filter counts must be positive");
  }
  if (dense_units == 0) throw SpecError("dense_units must be positive");
  if (num_classes != kClassNames.size()) {
    throw SpecError("num_classes must be " + std::to_string(kClassNames.size()));
  }
  for (double rate : {conv_dropout, dense_dropout}) {
    if (!(rate >= 0.0 && rate < 1.0)) throw SpecError("dropout rates must be in [0,1)");
  }
  if (padding.size() != conv_count()) {
    throw SpecError("padding list has " + std::to_string(padding.size()) + " entries, expected " +
                    std::to_string(conv_count()));
  }
  if (!trace_extent(*this, height) || !trace_extent(*this, width)) {
    throw SpecError("input " + std::to_string(height) + "x" + std::to_string(width) + " underflows after " +
                    std::to_string(block_filters.size()) + " pooling blocks (minimum " +
                    std::to_string(min_input_extent(*this)) + ")");
  }
}

std::array<std::size_t, 2> ModelSpec::final_extent() const {
  validate();
  return {*trace_extent(*this, height), *trace_extent(*this, width)};
}

std::size_t ModelSpec::flatten_features() const {
  const auto [h, w] = final_extent();
  return block_filters.back() * h * w;
}

std::size_t min_input_extent(const ModelSpec& spec) {
  for (std::size_t s = 1; s < (std::size_t{1} << 20); ++s) {
    if (trace_extent(spec, s)) return s;
  }
  throw SpecError("no input size satisfies the pooling stack");
}

void to_json(nlohmann::json& j, const ModelSpec& spec) {
  std::vector<std::string> padding;
  for (auto p : spec.padding) padding.emplace_back(to_string(p));
  j = nlohmann::json{
      {"input_size", {spec.height, spec.width}},
      {"channels", spec.channels},
      {"block_filters", spec.block_filters},
      {"convs_per_block", spec.convs_per_block},
      {"dense_units", spec.dense_units},
      {"num_classes", spec.num_classes},
      {"conv_dropout", spec.conv_dropout},
      {"dense_dropout", spec.dense_dropout},
      {"padding", padding},
  };
}

void from_json(const nlohmann::json& j, ModelSpec& spec) {
  const auto size = j.at("input_size").get<std::vector<std::size_t>>();
  if (size.size() != 2) throw SpecError("input_size must have two entries");
  spec.height = size[0];
  spec.width = size[1];
  spec.channels = j.at("channels").get<std::size_t>();
  spec.block_filters = j.at("block_filters").get<std::vector<std::size_t>>();
  spec.convs_per_block = j.at("convs_per_block").get<std::size_t>();
  spec.dense_units = j.at("dense_units").get<std::size_t>();
  spec.num_classes = j.at("num_classes").get<std::size_t>();
  spec.conv_dropout = j.at("conv_dropout").get<double>();
  spec.dense_dropout = j.at("dense_dropout").get<double>();
  spec.padding.clear();
  for (const auto& p : j.at("padding")) spec.padding.push_back(padding_from_string(p.get<std::string>()));
}

// ---------------------------------------------------------------------------

template <typename T>
BasicModel<T>::BasicModel(ModelSpec spec) : spec_(std::move(spec)), class_names_(canonical_class_names()) {
  spec_.validate();
  std::size_t in_ch = spec_.channels;
  std::size_t layer = 0;
  for (std::size_t b = 0; b < spec_.block_filters.size(); ++b) {
    const std::size_t out_ch = spec_.block_filters[b];
    for (std::size_t c = 0; c < spec_.convs_per_block; ++c, ++layer) {
      const std::string prefix = "block" + std::to_string(b + 1) + ".conv" + std::to_string(c + 1);
      ConvParams<T> conv;
      conv.weights = Parameter<T>(prefix + ".weight", BasicTensor<T>::zeros({out_ch, in_ch, kKernel, kKernel}));
      conv.bias = Parameter<T>(prefix + ".bias", BasicTensor<T>::zeros({out_ch}));
      conv.padding = spec_.padding[layer];
      convs_.push_back(std::move(conv));
      in_ch = out_ch;
    }
  }
  const std::size_t features = spec_.flatten_features();
  hidden_.weights = Parameter<T>("dense.weight", BasicTensor<T>::zeros({features, spec_.dense_units}));
  hidden_.bias = Parameter<T>("dense.bias", BasicTensor<T>::zeros({spec_.dense_units}));
  output_.weights = Parameter<T>("output.weight", BasicTensor<T>::zeros({spec_.dense_units, spec_.num_classes}));
  output_.bias = Parameter<T>("output.bias", BasicTensor<T>::zeros({spec_.num_classes}));
}

template <typename T>
BasicModel<T> BasicModel<T>::allocate(const ModelSpec& spec) {
  return BasicModel(spec);
}

template <typename T>
BasicModel<T> BasicModel<T>::build(const ModelSpec& spec, Rng& rng) {
  BasicModel model(spec);
  for (Parameter<T>* p : model.parameters()) {
    const auto& shape = p->value.shape();
    if (shape.size() == 1) continue;  // biases stay zero
    // conv [out,in,3,3]: fan_in = in*9; dense [in,out]: fan_in = in.
    const std::size_t fan_in = shape.size() == 4 ? shape[1] * shape[2] * shape[3] : shape[0];
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& x : p->value.data()) x = static_cast<T>(rng.normal() * stddev);
  }
  return model;
}

template <typename T>
BasicModel<T> BasicModel<T>::build(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "init");
  return build(spec, rng);
}

template <typename T>
void BasicModel<T>::check_input(const Shape& shape) const {
  const Shape expected_tail{spec_.channels, spec_.height, spec_.width};
  if (shape.size() != 4 || !std::equal(expected_tail.begin(), expected_tail.end(), shape.begin() + 1)) {
    throw ShapeError("model expects input [N," + std::to_string(spec_.channels) + "," +
                     std::to_string(spec_.height) + "," + std::to_string(spec_.width) + "], got " +
                     shape_string(shape));
  }
}

template <typename T>
Var<T> BasicModel<T>::forward_logits(Tape<T>& tape, Var<T> input, Mode mode, Rng* dropout_rng) {
  check_input(input.shape());
  if (mode == Mode::train && dropout_rng == nullptr) {
    throw ContractError("train-mode forward needs a dropout rng");
  }
  Rng unused(0);
  Rng& rng = dropout_rng ? *dropout_rng : unused;
  const DropoutConfig conv_drop{spec_.conv_dropout, mode};
  const DropoutConfig dense_drop{spec_.dense_dropout, mode};

  Var<T> x = input;
  std::size_t layer = 0;
  for (std::size_t b = 0; b < spec_.block_filters.size(); ++b) {
    for (std::size_t c = 0; c < spec_.convs_per_block; ++c, ++layer) {
      x = relu(conv2d(x, convs_[layer]));
    }
    x = dropout(maxpool2(x), conv_drop, rng);
  }
  x = flatten(x);
  x = dropout(relu(dense(x, hidden_)), dense_drop, rng);
  return dense(x, output_);
}

template <typename T>
BasicTensor<T> BasicModel<T>::forward_impl(const BasicTensor<T>& batch, Mode mode, Rng* dropout_rng) const {
  check_input(batch.shape());
  // A grad-disabled tape never writes to parameters, so the const_cast only
  // serves Tape::param's signature.
  Tape<T> tape(false);
  auto& self = const_cast<BasicModel&>(*this);
  return self.forward_logits(tape, tape.constant(batch), mode, dropout_rng).value();
}

template <typename T>
BasicTensor<T> BasicModel<T>::forward(const BasicTensor<T>& batch, Mode mode, Rng* dropout_rng) const {
  auto logits = forward_impl(batch, mode, dropout_rng);
  if (mode == Mode::eval) return softmax(logits);
  return logits;
}

template <typename T>
std::vector<Parameter<T>*> BasicModel<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& conv : convs_) {
    out.push_back(&conv.weights);
    out.push_back(&conv.bias);
  }
  for (auto* d : {&hidden_, &output_}) {
    out.push_back(&d->weights);
    out.push_back(&d->bias);
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> BasicModel<T>::parameters() const {
  auto mutable_params = const_cast<BasicModel&>(*this).parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

template <typename T>
std::size_t BasicModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

template <typename T>
void BasicModel<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
void BasicModel<T>::set_class_names(std::vector<std::string> names) {
  if (names.size() != spec_.num_classes) {
    throw SpecError("expected " + std::to_string(spec_.num_classes) + " class names, got " +
                    std::to_string(names.size()));
  }
  class_names_ = std::move(names);
}

template class BasicModel<float>;
template class BasicModel<double>;

}  // namespace capsule
