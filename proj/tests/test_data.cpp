#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "capsule/data.hpp"
#include "capsule/model.hpp"

using namespace capsule;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

RgbImage solid(std::size_t h, std::size_t w, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  RgbImage img{h, w, {}};
  for (std::size_t i = 0; i < h * w; ++i) img.pixels.insert(img.pixels.end(), {r, g, b});
  return img;
}

void png(const RgbImage& img, const fs::path& p) {
  fs::create_directories(p.parent_path());
  write_png(img, p);
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST_CASE("PNG write and decode round trip") {
  TempDir dir("capsule_test_png");
  RgbImage img{2, 3, {}};
  for (std::uint8_t i = 0; i < 18; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 13));
  write_png(img, dir.path / "a.png");
  CHECK(decode_image(dir.path / "a.png") == img);
}

TEST_CASE("binary PPM decodes, comments included") {
  TempDir dir("capsule_test_ppm");
  std::string text = "P6\n# made by hand\n2 1\n255\n";
  text += std::string("\x01\x02\x03\xff\x00\x80", 6);
  write_file(dir.path / "a.ppm", text);
  const auto img = decode_image(dir.path / "a.ppm");
  CHECK(img.height == 1);
  CHECK(img.width == 2);
  CHECK(img.pixels == std::vector<std::uint8_t>{1, 2, 3, 255, 0, 128});
}

TEST_CASE("broken images raise DecodeError naming the file") {
  TempDir dir("capsule_test_bad");
  write_file(dir.path / "bad.png", "\x89PNG\r\n\x1a\nnot really");
  write_file(dir.path / "short.ppm", "P6\n4 4\n255\n\x01\x02");
  for (const char* name : {"bad.png", "short.ppm"}) {
    try {
      decode_image(dir.path / name);
      FAIL("expected DecodeError");
    } catch (const DecodeError& e) {
      CHECK(std::string(e.what()).find(name) != std::string::npos);
    }
  }
}

TEST_CASE("bilinear resize of a checkerboard averages to one half") {
  std::vector<double> board(16);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) board[y * 4 + x] = (x + y) % 2 ? 1.0 : 0.0;
  const auto out = resize_bilinear(board, 1, 4, 4, 2, 2);
  REQUIRE(out.size() == 4);
  for (double v : out) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(resize_bilinear(board, 1, 4, 4, 4, 4) == board);
}

TEST_CASE("to_tensor scales to [0,1] in CHW order") {
  const auto t = to_tensor(solid(2, 2, 255, 0, 51), 2, 2);
  CHECK(t.shape() == Shape{3, 2, 2});
  CHECK(t.at({0, 1, 1}) == 1.0f);
  CHECK(t.at({1, 0, 0}) == 0.0f);
  CHECK(t.at({2, 0, 1}) == doctest::Approx(0.2f));
  const auto up = to_tensor(solid(3, 5, 10, 20, 30), 7, 4);
  CHECK(up.shape() == Shape{3, 7, 4});
  for (std::size_t i = 0; i < 28; ++i) CHECK(up[i] == doctest::Approx(10.0f / 255.0f));
}

TEST_CASE("directory scan labels, sorts, warns and skips") {
  TempDir dir("capsule_test_scan");
  png(solid(4, 4, 1, 2, 3), dir.path / "Polyp" / "b.png");
  png(solid(4, 4, 1, 2, 3), dir.path / "Polyp" / "a.png");
  png(solid(4, 4, 1, 2, 3), dir.path / "Bleeding" / "z.png");
  write_file(dir.path / "Bleeding" / "notes.txt", "hello");
  fs::create_directories(dir.path / "Ulcer");

  const auto index = scan_dataset(dir.path, Split::train);
  REQUIRE(index.size() == 3);
  CHECK(index.split == Split::train);
  CHECK(std::is_sorted(index.entries.begin(), index.entries.end(),
                       [](const auto& a, const auto& b) { return a.path < b.path; }));
  CHECK(index.entries[0].label == class_index("Bleeding"));
  CHECK(index.entries[1].label == 7);
  CHECK(index.entries[1].path.filename() == "a.png");
  REQUIRE(index.skipped.size() == 1);
  CHECK(index.skipped[0].path.filename() == "notes.txt");
  const bool warned_ulcer = std::any_of(index.warnings.begin(), index.warnings.end(),
                                        [](const std::string& w) { return w.find("Ulcer") != std::string::npos; });
  CHECK(warned_ulcer);
}

TEST_CASE("unknown class directories and missing roots are errors") {
  TempDir dir("capsule_test_unknown");
  png(solid(4, 4, 1, 2, 3), dir.path / "Tumour" / "a.png");
  try {
    scan_dataset(dir.path);
    FAIL("expected LabelError");
  } catch (const LabelError& e) {
    CHECK(std::string(e.what()).find("Tumour") != std::string::npos);
  }
  CHECK_THROWS_AS(scan_dataset(dir.path / "nope"), DataError);
}

TEST_CASE("CSV manifests with BOM, CRLF and quoted fields") {
  TempDir dir("capsule_test_csv");
  png(solid(4, 4, 9, 9, 9), dir.path / "img" / "one, two.png");
  png(solid(4, 4, 9, 9, 9), dir.path / "img" / "three.png");
  write_file(dir.path / "list.csv",
             "\xEF\xBB\xBFpath,label\r\n\"img/one, two.png\",Foreign Body\r\nimg/three.png,Worms\r\n");
  const auto index = scan_dataset(dir.path / "list.csv");
  REQUIRE(index.size() == 2);
  CHECK(index.entries[0].path.filename() == "one, two.png");
  CHECK(index.entries[0].label == class_index("Foreign Body"));
  CHECK(index.entries[1].label == class_index("Worms"));

  write_file(dir.path / "bad.csv", "file,class\nimg/three.png,Worms\n");
  CHECK_THROWS_AS(scan_dataset(dir.path / "bad.csv"), DataError);
  write_file(dir.path / "unknown.csv", "path,label\nimg/three.png,Tumour\n");
  CHECK_THROWS_AS(scan_dataset(dir.path / "unknown.csv"), LabelError);
}

TEST_CASE("batches cover every index exactly once") {
  Rng rng(5);
  const auto batches = make_batches(10, 4, true, &rng);
  REQUIRE(batches.size() == 3);
  CHECK(batches[2].size() == 2);
  std::vector<std::size_t> all;
  for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(10);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(all == expect);
  const auto plain = make_batches(5, 2, false, nullptr);
  CHECK(plain == std::vector<std::vector<std::size_t>>{{0, 1}, {2, 3}, {4}});
  CHECK_THROWS_AS(make_batches(DatasetIndex{}, 4, false, nullptr), DataError);
}

TEST_CASE("assemble_batch stacks images and one-hot labels") {
  LabeledImages data;
  for (std::size_t i = 0; i < 3; ++i) {
    data.images.push_back(Tensor::full({3, 2, 2}, static_cast<float>(i)));
    data.labels.push_back(i + 4);
  }
  const auto b = assemble_batch(data, {2, 0});
  CHECK(b.images.shape() == Shape{2, 3, 2, 2});
  CHECK(b.images.at({0, 0, 0, 0}) == 2.0f);
  CHECK(b.labels == std::vector<std::size_t>{6, 4});
  CHECK(b.onehot.at({0, 6}) == 1.0f);
  CHECK(b.onehot.at({1, 4}) == 1.0f);
  float total = 0;
  for (float v : b.onehot.data()) total += v;
  CHECK(total == 2.0f);
}

TEST_CASE("synthetic data is seeded and balanced") {
  const auto a = synth_dataset(3, 16, 42);
  const auto b = synth_dataset(3, 16, 42);
  const auto c = synth_dataset(3, 16, 43);
  REQUIRE(a.images.size() == 30);
  CHECK(a.images == b.images);
  CHECK_FALSE(a.images == c.images);
  CHECK(a.class_names == canonical_class_names());
  for (std::size_t k = 0; k < 10; ++k) CHECK(std::count(a.labels.begin(), a.labels.end(), k) == 3);
}

TEST_CASE("synthetic classes are separable by nearest centroid") {
  // Centroids from one seed classify fresh samples from another.
  const std::size_t size = 32;
  const auto fit = synth_dataset(8, size, 1);
  const auto test = synth_dataset(4, size, 2);
  const std::size_t dim = size * size * 3;
  std::vector<std::vector<double>> centroid(10, std::vector<double>(dim, 0.0));
  for (std::size_t i = 0; i < fit.images.size(); ++i)
    for (std::size_t d = 0; d < dim; ++d) centroid[fit.labels[i]][d] += fit.images[i].pixels[d] / 8.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.images.size(); ++i) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < 10; ++k) {
      double dist = 0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = test.images[i].pixels[d] - centroid[k][d];
        dist += diff * diff;
      }
      if (dist < best_d) best_d = dist, best = k;
    }
    correct += best == test.labels[i];
  }
  CHECK(static_cast<double>(correct) / test.images.size() >= 0.9);
}
