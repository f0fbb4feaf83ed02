#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "capsule/model.hpp"
#include "fuzz_cases.hpp"
#include "oracles.hpp"

using namespace capsule;

namespace {

Model small_model(std::uint64_t seed) {
  ModelSpec spec;
  spec.height = 12;
  spec.width = 14;
  spec.block_filters = {4, 6};
  spec.dense_units = 8;
  spec.set_padding(PaddingPolicy::per_block);
  return Model::build(spec, seed);
}

}  // namespace

TEST_CASE("round trip is bitwise and preserves forward output") {
  const Model m = small_model(3);
  const auto bytes = serialize_checkpoint(m);
  REQUIRE(bytes.size() > 12);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "CVC1");
  CHECK(bytes[4] == 1);  // little-endian version

  const Model back = deserialize_checkpoint(bytes);
  CHECK(back.spec() == m.spec());
  CHECK(back.class_names() == m.class_names());
  const auto pa = m.parameters(), pb = back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK(pa[i]->value == pb[i]->value);
  }
  CHECK(serialize_checkpoint(back) == bytes);

  Rng rng(1);
  const Tensor x = oracle::random_tensor({3, 3, 12, 14}, rng, 0, 1).cast<float>();
  CHECK(back.forward(x, Mode::eval) == m.forward(x, Mode::eval));
}

TEST_CASE("custom class names survive") {
  Model m = small_model(4);
  auto names = canonical_class_names();
  names[0] = "Angio";
  m.set_class_names(names);
  CHECK(deserialize_checkpoint(serialize_checkpoint(m)).class_names() == names);
}

TEST_CASE("file save and load") {
  const auto dir = std::filesystem::temp_directory_path() / "capsule_test_checkpoint";
  std::filesystem::create_directories(dir);
  const Model m = small_model(5);
  save_checkpoint(m, dir / "m.cvc");
  CHECK(serialize_checkpoint(load_checkpoint(dir / "m.cvc")) == serialize_checkpoint(m));
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.cvc"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupted checkpoints raise typed errors") {
  const auto good = serialize_checkpoint(small_model(6));
  const auto cases = fuzz::cases(good);
  CHECK(cases.size() == 20);
  for (const auto& c : cases) {
    CAPTURE(c.name);
    bool typed = false;
    try {
      deserialize_checkpoint(c.bytes);
    } catch (const CheckpointError& e) {
      typed = true;
      CHECK_MESSAGE(e.kind() == c.expected, "got ", to_string(e.kind()), " expected ", to_string(c.expected));
    }
    CHECK_MESSAGE(typed, "no error for ", c.name);
  }
}

TEST_CASE("every truncation point fails cleanly") {
  const auto good = serialize_checkpoint(small_model(7));
  for (std::size_t n = 0; n < good.size(); n += 7) {
    CHECK_THROWS_AS(deserialize_checkpoint(fuzz::truncate(good, n)), CheckpointError);
  }
}
