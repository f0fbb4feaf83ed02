#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "capsule/autograd.hpp"
#include "capsule/layers.hpp"
#include "capsule/rng.hpp"
#include "capsule/tensor.hpp"

namespace capsule {

// The ten findings, in index order. Indices are assigned alphabetically.
inline constexpr std::array<std::string_view, 10> kClassNames = {
    "Angioectasia", "Bleeding", "Erosion", "Erythema", "Foreign Body",
    "Lymphangiectasia", "Normal", "Polyp", "Ulcer", "Worms",
};

std::vector<std::string> canonical_class_names();
// Index of `name` in kClassNames; throws LabelError when unknown.
std::size_t class_index(std::string_view name);

// Which convolution of each block gets 'same' padding.
//   per_block:        first conv of every block same, second valid (default)
//   first_layer_only: only the network's very first conv is same
//   all_same:         every conv same
enum class PaddingPolicy { per_block, first_layer_only, all_same };

const char* to_string(PaddingPolicy policy) noexcept;
PaddingPolicy padding_policy_from_string(const std::string& text);

struct ModelSpec {
  std::size_t height = 224;
  std::size_t width = 224;
  std::size_t channels = 3;
  std::vector<std::size_t> block_filters{32, 64, 128, 256, 512};
  std::size_t convs_per_block = 2;
  std::size_t dense_units = 1500;
  std::size_t num_classes = 10;
  double conv_dropout = 0.25;
  double dense_dropout = 0.40;
  // One entry per convolution, block-major.
  std::vector<Padding> padding;

  static ModelSpec canonical(std::size_t height = 224, std::size_t width = 224,
                             PaddingPolicy policy = PaddingPolicy::per_block);

  void set_padding(PaddingPolicy policy);
  std::size_t conv_count() const { return block_filters.size() * convs_per_block; }

  // Throws SpecError (including spatial underflow through the pooling stack).
  void validate() const;
  // Spatial extent after the last block, {height, width}.
  std::array<std::size_t, 2> final_extent() const;
  std::size_t flatten_features() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Smallest square input for which every block leaves at least one pixel.
std::size_t min_input_extent(const ModelSpec& spec);

void to_json(nlohmann::json& j, const ModelSpec& spec);
void from_json(const nlohmann::json& j, ModelSpec& spec);

// CapsuleNet: blocks of [conv, relu] x convs_per_block -> maxpool2 -> dropout,
// then flatten -> dense -> relu -> dropout -> dense(num_classes).
template <typename T>
class BasicModel {
 public:
  // He-normal weights (std = sqrt(2 / fan_in)), zero biases. Parameters are
  // drawn in parameters() order from `rng`.
  static BasicModel build(const ModelSpec& spec, Rng& rng);
  // Uses the "init" substream of `seed`.
  static BasicModel build(const ModelSpec& spec, std::uint64_t seed);
  // Zero-filled parameters with the right shapes (checkpoint loading).
  static BasicModel allocate(const ModelSpec& spec);

  // Records the network on `tape` and returns logits [N, num_classes].
  // Train mode needs `dropout_rng`.
  Var<T> forward_logits(Tape<T>& tape, Var<T> input, Mode mode, Rng* dropout_rng);

  // Eval mode returns softmax probabilities; train mode returns logits.
  // Eval mode does not touch parameters and is safe to call concurrently.
  BasicTensor<T> forward(const BasicTensor<T>& batch, Mode mode, Rng* dropout_rng = nullptr) const;
  // Eval-mode logits (dropout off), before softmax.
  BasicTensor<T> eval_logits(const BasicTensor<T>& batch) const { return forward_impl(batch, Mode::eval, nullptr); }

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  const ModelSpec& spec() const noexcept { return spec_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  void set_class_names(std::vector<std::string> names);

  const std::vector<ConvParams<T>>& convs() const noexcept { return convs_; }
  const DenseParams<T>& hidden() const noexcept { return hidden_; }
  const DenseParams<T>& output() const noexcept { return output_; }

 private:
  explicit BasicModel(ModelSpec spec);
  void check_input(const Shape& shape) const;
  BasicTensor<T> forward_impl(const BasicTensor<T>& batch, Mode mode, Rng* dropout_rng) const;

  ModelSpec spec_;
  std::vector<std::string> class_names_;
  std::vector<ConvParams<T>> convs_;
  DenseParams<T> hidden_;
  DenseParams<T> output_;
};

using Model = BasicModel<float>;

// ---------------------------------------------------------------------------
// Checkpoint file ("CVC1"), all integers little-endian:
//   "CVC1" | u32 version=1 | u32 header_len | header JSON (UTF-8)
//   | u32 tensor_count | per tensor: u16 name_len, name, u8 rank,
//     rank x u32 dims, float32 data
// Tensors appear in parameters() order.

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Model& model);
// Throws CheckpointError with a kind identifying the failure.
Model deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace capsule
