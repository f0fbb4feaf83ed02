#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "capsule/model.hpp"

namespace capsule {

const char* to_string(CheckpointError::Kind kind) noexcept {
  using K = CheckpointError::Kind;
  switch (kind) {
    case K::bad_magic: return "bad_magic";
    case K::version_mismatch: return "version_mismatch";
    case K::truncated: return "truncated";
    case K::malformed_header: return "malformed_header";
    case K::unknown_tensor: return "unknown_tensor";
    case K::missing_tensor: return "missing_tensor";
    case K::duplicate_tensor: return "duplicate_tensor";
    case K::shape_mismatch: return "shape_mismatch";
    case K::trailing_data: return "trailing_data";
  }
  return "?";
}

namespace {

constexpr char kMagic[4] = {'C', 'V', 'C', '1'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  template <typename U>
  void le(U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
    if (n > remaining()) {
      throw CheckpointError(CheckpointError::Kind::truncated,
                            std::string("checkpoint truncated while reading ") + what + " at offset " +
                                std::to_string(pos_));
    }
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename U>
  U le(const char* what) {
    auto s = bytes(sizeof(U), what);
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(static_cast<U>(s[i]) << (8 * i));
    return value;
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

// Parameter count implied by a spec, in floating point so hostile headers
// cannot overflow it.
long double implied_parameters(const ModelSpec& spec) {
  long double total = 0;
  long double in_ch = static_cast<long double>(spec.channels);
  for (auto f : spec.block_filters) {
    for (std::size_t c = 0; c < spec.convs_per_block; ++c) {
      total += static_cast<long double>(f) * (in_ch * 9 + 1);
      in_ch = static_cast<long double>(f);
    }
  }
  total += (static_cast<long double>(spec.flatten_features()) + 1) * static_cast<long double>(spec.dense_units);
  total += (static_cast<long double>(spec.dense_units) + 1) * static_cast<long double>(spec.num_classes);
  return total;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model) {
  const nlohmann::json header = {
      {"format", "CVC1"},
      {"version", kCheckpointVersion},
      {"dtype", to_string(DType::float32)},
      {"class_names", model.class_names()},
      {"spec", model.spec()},
  };
  const std::string text = header.dump();

  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.bytes(text.data(), text.size());
  const auto params = model.parameters();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.le<std::uint16_t>(static_cast<std::uint16_t>(p->name.size()));
    w.bytes(p->name.data(), p->name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(p->value.rank()));
    for (auto d : p->value.shape()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float x : p->value.data()) w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(x));
  }
  return w.take();
}

Model deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  using K = CheckpointError::Kind;
  Reader r(bytes);
  auto magic = r.bytes(sizeof(kMagic), "magic");
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(K::bad_magic, "not a CVC1 checkpoint (bad magic bytes)");
  }
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(K::version_mismatch, "unsupported checkpoint version " + std::to_string(version) +
                                                   " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = r.le<std::uint32_t>("header length");
  auto header_bytes = r.bytes(header_len, "header");

  ModelSpec spec;
  std::vector<std::string> class_names;
  try {
    const auto header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
    if (header.at("dtype").get<std::string>() != to_string(DType::float32)) {
      throw CheckpointError(K::malformed_header, "checkpoint dtype must be float32");
    }
    spec = header.at("spec").get<ModelSpec>();
    class_names = header.at("class_names").get<std::vector<std::string>>();
    spec.validate();
    if (implied_parameters(spec) * 4 > static_cast<long double>(r.remaining())) {
      throw CheckpointError(K::truncated, "checkpoint too short for the parameters its header declares");
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(K::malformed_header, std::string("malformed checkpoint header: ") + e.what());
  }

  Model model = Model::allocate(spec);
  try {
    model.set_class_names(std::move(class_names));
  } catch (const SpecError& e) {
    throw CheckpointError(K::malformed_header, e.what());
  }

  std::map<std::string, Parameter<float>*> by_name;
  for (auto* p : model.parameters()) by_name[p->name] = p;
  std::set<std::string> seen;

  const auto count = r.le<std::uint32_t>("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = r.le<std::uint16_t>("tensor name length");
    auto name_bytes = r.bytes(name_len, "tensor name");
    const std::string name(name_bytes.begin(), name_bytes.end());
    const auto rank = r.le<std::uint8_t>("tensor rank");
    Shape dims(rank);
    for (auto& d : dims) d = r.le<std::uint32_t>("tensor dims");

    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError(K::unknown_tensor, "unknown tensor '" + name + "' in checkpoint");
    if (!seen.insert(name).second) throw CheckpointError(K::duplicate_tensor, "tensor '" + name + "' appears twice");
    Parameter<float>& p = *it->second;
    if (dims != p.value.shape()) {
      throw CheckpointError(K::shape_mismatch, "tensor '" + name + "' has shape " + shape_string(dims) +
                                                   ", model expects " + shape_string(p.value.shape()));
    }
    auto raw = r.bytes(p.value.size() * 4, "tensor data");
    auto out = p.value.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::uint32_t bits = 0;
      for (std::size_t b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(raw[4 * i + b]) << (8 * b);
      out[i] = std::bit_cast<float>(bits);
    }
  }
  for (const auto& [name, _] : by_name) {
    if (!seen.count(name)) throw CheckpointError(K::missing_tensor, "checkpoint lacks tensor '" + name + "'");
  }
  if (r.remaining() != 0) {
    throw CheckpointError(K::trailing_data, std::to_string(r.remaining()) + " unexpected bytes after last tensor");
  }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace capsule
