#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "capsule/data.hpp"
#include "capsule/model.hpp"

namespace capsule {

namespace {

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double sector = h * 6.0;
  const int i = static_cast<int>(sector) % 6;
  const double f = sector - std::floor(sector);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// Motif intensity in [0,1] at normalised coordinates (u, v) in [0,1).
double motif(std::size_t label, double u, double v, double phase, double cx, double cy) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double dx = u - cx, dy = v - cy;
  const double r = std::sqrt(dx * dx + dy * dy);
  switch (label) {
    case 0: return 0.5 + 0.5 * std::sin(kTwoPi * (6.0 * v + phase));             // horizontal stripes
    case 1: return 0.5 + 0.5 * std::sin(kTwoPi * (6.0 * u + phase));             // vertical stripes
    case 2: return 0.5 + 0.5 * std::sin(kTwoPi * (4.0 * (u + v) + phase));       // diagonal stripes
    case 3: {                                                                     // checkerboard
      const int a = static_cast<int>(std::floor(8.0 * u + phase));
      const int b = static_cast<int>(std::floor(8.0 * v + phase));
      return ((a + b) & 1) ? 1.0 : 0.0;
    }
    case 4: return r < 0.28 ? 1.0 : 0.1;                                          // blob
    case 5: return u;                                                             // horizontal gradient
    case 6: return v;                                                             // vertical gradient
    case 7: return 0.5 + 0.5 * std::cos(kTwoPi * (5.0 * r + phase));             // rings
    case 8: return (std::abs(dx) < 0.1 || std::abs(dy) < 0.1) ? 1.0 : 0.15;      // cross
    default: {                                                                    // dot grid
      const double fu = 5.0 * u + phase - std::floor(5.0 * u + phase) - 0.5;
      const double fv = 5.0 * v + phase - std::floor(5.0 * v + phase) - 0.5;
      return (fu * fu + fv * fv) < 0.08 ? 1.0 : 0.1;
    }
  }
}

}  // namespace

RgbImage synth_image(std::size_t label, std::size_t size, Rng& rng) {
  if (label >= kNumClasses) throw LabelError("synthetic label out of range");
  if (size == 0) throw ConfigError("synthetic image size must be positive");
  const double hue = static_cast<double>(label) / kNumClasses + 0.02 * (rng.uniform() - 0.5);
  const double brightness = 0.8 + 0.16 * (rng.uniform() - 0.5);
  const double phase = rng.uniform();
  const double cx = 0.5 + 0.12 * (rng.uniform() - 0.5);
  const double cy = 0.5 + 0.12 * (rng.uniform() - 0.5);
  const auto base = hsv_to_rgb(hue, 0.75, brightness);

  RgbImage image{size, size, std::vector<std::uint8_t>(size * size * 3)};
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(size);
      const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(size);
      const double m = motif(label, u, v, phase, cx, cy);
      for (std::size_t c = 0; c < 3; ++c) {
        const double value = base[c] * (0.35 + 0.65 * m) + 0.04 * rng.normal();
        image.pixels[(y * size + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(value, 0.0, 1.0) * 255.0));
      }
    }
  }
  return image;
}

SynthDataset synth_dataset(std::size_t n_per_class, std::size_t size, std::uint64_t seed) {
  if (n_per_class == 0) throw ConfigError("n_per_class must be >= 1");
  SynthDataset out;
  out.class_names = canonical_class_names();
  Rng rng = Rng::substream(seed, "synth");
  for (std::size_t label = 0; label < kNumClasses; ++label) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      out.images.push_back(synth_image(label, size, rng));
      out.labels.push_back(label);
    }
  }
  return out;
}

}  // namespace capsule
