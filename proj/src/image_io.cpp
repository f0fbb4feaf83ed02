#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "capsule/data.hpp"

namespace capsule {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open image: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_png(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

RgbImage decode_png(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw DecodeError("undecodable PNG " + path.string() + ": " + image.message);
  }
  // Read as 8-bit RGBA (gray is replicated, no compositing), then drop alpha.
  image.format = PNG_FORMAT_RGBA;
  RgbImage out;
  out.height = image.height;
  out.width = image.width;
  if (out.height == 0 || out.width == 0) {
    png_image_free(&image);
    throw DecodeError("zero-dimension image: " + path.string());
  }
  std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgba.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw DecodeError("undecodable PNG " + path.string() + ": " + message);
  }
  out.pixels.resize(out.height * out.width * 3);
  for (std::size_t i = 0; i < out.height * out.width; ++i) {
    for (std::size_t c = 0; c < 3; ++c) out.pixels[3 * i + c] = rgba[4 * i + c];
  }
  return out;
}

class PpmCursor {
 public:
  PpmCursor(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  std::size_t number() {
    skip_space_and_comments();
    std::size_t value = 0;
    bool any = false;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_++] - '0');
      any = true;
      if (value > (std::size_t{1} << 24)) fail("header value too large");
    }
    if (!any) fail("malformed header");
    return value;
  }

  void single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("malformed header");
    ++pos_;
  }

  std::size_t position() const { return pos_; }

  [[noreturn]] void fail(const std::string& why) const {
    throw DecodeError("undecodable PPM " + path_.string() + ": " + why);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 2;
};

RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  PpmCursor cursor(bytes, path);
  RgbImage out;
  out.width = cursor.number();
  out.height = cursor.number();
  const std::size_t maxval = cursor.number();
  cursor.single_whitespace();
  if (out.width == 0 || out.height == 0) throw DecodeError("zero-dimension image: " + path.string());
  if (maxval == 0 || maxval > 65535) cursor.fail("maxval out of range");

  const std::size_t samples = out.width * out.height * 3;
  const std::size_t bytes_per_sample = maxval > 255 ? 2 : 1;
  if (bytes.size() - cursor.position() < samples * bytes_per_sample) cursor.fail("pixel data truncated");
  out.pixels.resize(samples);
  const std::uint8_t* src = bytes.data() + cursor.position();
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t raw = bytes_per_sample == 2 ? (std::size_t{src[2 * i]} << 8) | src[2 * i + 1] : src[i];
    out.pixels[i] = static_cast<std::uint8_t>(
        maxval == 255 ? raw : std::lround(static_cast<double>(std::min(raw, maxval)) * 255.0 / maxval));
  }
  return out;
}

}  // namespace

RgbImage decode_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (is_png(bytes)) return decode_png(bytes, path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes, path);
  throw DecodeError("unsupported or corrupt image (expected PNG or P6 PPM): " + path.string());
}

void write_png(const RgbImage& image, const std::filesystem::path& path) {
  png_image info{};
  info.version = PNG_IMAGE_VERSION;
  info.width = static_cast<png_uint_32>(image.width);
  info.height = static_cast<png_uint_32>(image.height);
  info.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&info, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + info.message);
  }
}

std::vector<double> resize_bilinear(const std::vector<double>& planes, std::size_t channels, std::size_t height,
                                    std::size_t width, std::size_t out_height, std::size_t out_width) {
  if (height == 0 || width == 0 || out_height == 0 || out_width == 0) {
    throw ShapeError("resize_bilinear: dimensions must be positive");
  }
  // Source coordinate of each destination sample, split into base index and
  // fraction. Half-pixel centres: src = (dst + 0.5) * in / out - 0.5.
  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto lo = static_cast<std::size_t>(std::floor(src));
      const std::size_t hi = std::min(lo + 1, in - 1);
      t[i] = {lo, hi, src - static_cast<double>(lo)};
    }
    return t;
  };
  const auto ty = taps(height, out_height);
  const auto tx = taps(width, out_width);

  std::vector<double> out(channels * out_height * out_width);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* plane = planes.data() + c * height * width;
    double* dst = out.data() + c * out_height * out_width;
    for (std::size_t y = 0; y < out_height; ++y) {
      const double* r0 = plane + ty[y].lo * width;
      const double* r1 = plane + ty[y].hi * width;
      for (std::size_t x = 0; x < out_width; ++x) {
        const auto [x0, x1, fx] = tx[x];
        // a + f*(b-a) keeps constant fields exactly constant.
        const double top = r0[x0] + fx * (r0[x1] - r0[x0]);
        const double bottom = r1[x0] + fx * (r1[x1] - r1[x0]);
        dst[y * out_width + x] = top + ty[y].frac * (bottom - top);
      }
    }
  }
  return out;
}

Tensor to_tensor(const RgbImage& image, std::size_t height, std::size_t width) {
  if (image.height == 0 || image.width == 0) throw DecodeError("zero-dimension image");
  const std::size_t plane = image.height * image.width;
  std::vector<double> planes(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) planes[c * plane + i] = image.pixels[3 * i + c];
  }
  const auto resized = resize_bilinear(planes, 3, image.height, image.width, height, width);
  std::vector<float> data(resized.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<float>(std::clamp(resized[i] / 255.0, 0.0, 1.0));
  }
  return Tensor({3, height, width}, std::move(data));
}

Tensor load_image(const std::filesystem::path& path, std::size_t height, std::size_t width) {
  return to_tensor(decode_image(path), height, width);
}

}  // namespace capsule
