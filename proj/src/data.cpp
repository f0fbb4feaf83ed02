#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "capsule/data.hpp"
#include "capsule/model.hpp"

namespace capsule {

namespace fs = std::filesystem;

namespace {

bool supported_extension(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".ppm";
}

bool readable(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char c;
  return in && in.read(&c, 1);
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string unquote(std::string s) {
  s = trim(std::move(s));
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    s = s.substr(1, s.size() - 2);
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
      out.push_back(s[i]);
      if (s[i] == '"' && i + 1 < s.size() && s[i + 1] == '"') ++i;
    }
    return out;
  }
  return s;
}

void add_file(DatasetIndex& index, const fs::path& path, std::size_t label) {
  if (!supported_extension(path)) {
    index.skipped.push_back({path, "unsupported file type"});
  } else if (!readable(path)) {
    index.skipped.push_back({path, "unreadable"});
  } else {
    index.entries.push_back({path, label});
  }
}

void scan_directory(DatasetIndex& index, const fs::path& root) {
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  std::map<std::size_t, std::size_t> per_class;
  for (const auto& dir : class_dirs) {
    const std::string name = dir.filename().string();
    std::size_t label;
    try {
      label = class_index(name);
    } catch (const LabelError&) {
      throw LabelError("unknown class directory '" + name + "' in " + root.string());
    }
    const std::size_t before = index.entries.size();
    for (const auto& file : fs::directory_iterator(dir)) {
      if (file.is_regular_file()) add_file(index, file.path(), label);
    }
    per_class[label] += index.entries.size() - before;
  }
  for (std::size_t c = 0; c < kClassNames.size(); ++c) {
    if (per_class[c] == 0) index.warnings.push_back("class '" + std::string(kClassNames[c]) + "' has no images");
  }
}

void scan_csv(DatasetIndex& index, const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw DataError("cannot read labels file " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("labels file is empty: " + csv.string());
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (trim(line) != "path,label") throw DataError("labels file must start with header 'path,label': " + csv.string());

  std::vector<std::size_t> per_class(kClassNames.size(), 0);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw DataError("labels file row " + std::to_string(row) + " has no label column");
    }
    const std::string rel = unquote(line.substr(0, comma));
    const std::string name = unquote(line.substr(comma + 1));
    std::size_t label;
    try {
      label = class_index(name);
    } catch (const LabelError&) {
      throw LabelError("unknown class '" + name + "' at row " + std::to_string(row) + " of " + csv.string());
    }
    const fs::path path = csv.parent_path() / rel;
    if (!fs::exists(path)) {
      index.skipped.push_back({path, "missing"});
      continue;
    }
    const std::size_t before = index.entries.size();
    add_file(index, path, label);
    per_class[label] += index.entries.size() - before;
  }
  for (std::size_t c = 0; c < kClassNames.size(); ++c) {
    if (per_class[c] == 0) index.warnings.push_back("class '" + std::string(kClassNames[c]) + "' has no images");
  }
}

}  // namespace

DatasetIndex scan_dataset(const fs::path& source, Split split) {
  DatasetIndex index;
  index.class_names = canonical_class_names();
  index.split = split;
  if (fs::is_directory(source)) {
    scan_directory(index, source);
  } else if (fs::is_regular_file(source)) {
    scan_csv(index, source);
  } else {
    throw DataError("dataset source not found: " + source.string());
  }
  std::sort(index.entries.begin(), index.entries.end(),
            [](const DatasetEntry& a, const DatasetEntry& b) { return a.path < b.path; });
  return index;
}

LabeledImages load_images(const DatasetIndex& index, std::size_t height, std::size_t width) {
  LabeledImages out;
  out.images.reserve(index.size());
  out.labels.reserve(index.size());
  for (const auto& entry : index.entries) {
    out.images.push_back(load_image(entry.path, height, width));
    out.labels.push_back(entry.label);
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size, bool shuffle,
                                                   Rng* rng) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  if (shuffle) {
    if (rng == nullptr) throw ContractError("make_batches: shuffling needs an rng");
    for (std::size_t i = count; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng->below(i));
      std::swap(order[i - 1], order[j]);
    }
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<std::vector<std::size_t>> make_batches(const DatasetIndex& index, std::size_t batch_size, bool shuffle,
                                                   Rng* rng) {
  if (index.entries.empty()) throw DataError("cannot batch an empty dataset");
  return make_batches(index.size(), batch_size, shuffle, rng);
}

Batch assemble_batch(const LabeledImages& data, const std::vector<std::size_t>& indices, std::size_t num_classes) {
  if (indices.empty()) throw DataError("empty batch");
  const Shape& sample = data.images.at(indices.front()).shape();
  const std::size_t per = shape_numel(sample);
  std::vector<float> pixels(indices.size() * per);
  Batch batch;
  batch.onehot = Tensor::zeros({indices.size(), num_classes});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& image = data.images.at(indices[i]);
    if (image.shape() != sample) throw ShapeError("batch mixes image shapes");
    std::copy(image.data().begin(), image.data().end(), pixels.begin() + static_cast<std::ptrdiff_t>(i * per));
    const std::size_t label = data.labels.at(indices[i]);
    if (label >= num_classes) throw LabelError("label " + std::to_string(label) + " out of range");
    batch.labels.push_back(label);
    batch.onehot[i * num_classes + label] = 1.0f;
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), sample.begin(), sample.end());
  batch.images = Tensor(std::move(shape), std::move(pixels));
  return batch;
}

}  // namespace capsule
