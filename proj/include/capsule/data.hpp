#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "capsule/rng.hpp"
#include "capsule/tensor.hpp"

namespace capsule {

inline constexpr std::size_t kNumClasses = 10;

enum class Split { train, val, unspecified };

struct DatasetEntry {
  std::filesystem::path path;
  std::size_t label = 0;
};

struct SkippedFile {
  std::filesystem::path path;
  std::string reason;
};

struct DatasetIndex {
  std::vector<DatasetEntry> entries;  // sorted by path
  std::vector<std::string> class_names;
  Split split = Split::unspecified;
  std::vector<SkippedFile> skipped;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return entries.size(); }
};

// Accepts either a directory laid out as root/<ClassName>/<images> or a CSV
// file with header `path,label` (paths relative to the CSV's directory).
// Throws LabelError for unknown class names, DataError for a missing root or
// malformed CSV. Empty classes produce warnings; unreadable or unsupported
// files go to `skipped`.
DatasetIndex scan_dataset(const std::filesystem::path& source, Split split = Split::unspecified);

// RGB image with interleaved 8-bit samples.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// Decodes PNG or binary PPM (P6) to RGB. Grayscale is replicated, alpha
// dropped. Throws DecodeError naming the path.
RgbImage decode_image(const std::filesystem::path& path);
// Writes an 8-bit RGB PNG. Throws IoError.
void write_png(const RgbImage& image, const std::filesystem::path& path);

// Bilinear resize with half-pixel centres, no prefilter, edge clamping.
// Operates on [C,H,W] planes in double.
std::vector<double> resize_bilinear(const std::vector<double>& planes, std::size_t channels, std::size_t height,
                                    std::size_t width, std::size_t out_height, std::size_t out_width);

// RGB image -> [3,H,W] tensor in [0,1], resized to (height, width).
Tensor to_tensor(const RgbImage& image, std::size_t height, std::size_t width);
// decode_image + to_tensor.
Tensor load_image(const std::filesystem::path& path, std::size_t height, std::size_t width);

struct LabeledImages {
  std::vector<Tensor> images;  // each [3,H,W]
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

// Decodes every entry of the index in index order.
LabeledImages load_images(const DatasetIndex& index, std::size_t height, std::size_t width);

struct Batch {
  Tensor images;  // [N,3,H,W]
  std::vector<std::size_t> labels;
  Tensor onehot;  // [N,10]
};

// Sample indices grouped into batches of at most batch_size; the final short
// batch is kept. shuffle=true draws a Fisher-Yates permutation from `rng`
// (required); shuffle=false keeps index order.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size, bool shuffle,
                                                   Rng* rng);
std::vector<std::vector<std::size_t>> make_batches(const DatasetIndex& index, std::size_t batch_size,
                                                   bool shuffle, Rng* rng);

Batch assemble_batch(const LabeledImages& data, const std::vector<std::size_t>& indices,
                     std::size_t num_classes = kNumClasses);

// In-memory synthetic data set: one visually distinct pattern family per
// class (base hue + geometric motif) with seeded jitter and pixel noise.
struct SynthDataset {
  std::vector<RgbImage> images;
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;
};

SynthDataset synth_dataset(std::size_t n_per_class, std::size_t size, std::uint64_t seed);
RgbImage synth_image(std::size_t label, std::size_t size, Rng& rng);

}  // namespace capsule
