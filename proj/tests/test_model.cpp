#include <doctest.h>

#include <cmath>

#include "capsule/model.hpp"
#include "oracles.hpp"

using namespace capsule;

namespace {

ModelSpec tiny_spec() {
  ModelSpec spec;
  spec.height = spec.width = 10;
  spec.block_filters = {2, 3};
  spec.dense_units = 5;
  spec.set_padding(PaddingPolicy::per_block);
  return spec;
}

}  // namespace

TEST_CASE("class names are alphabetical with Polyp at index 7") {
  const auto names = canonical_class_names();
  REQUIRE(names.size() == 10);
  CHECK(std::is_sorted(names.begin(), names.end()));
  CHECK(names[7] == "Polyp");
  CHECK(class_index("Foreign Body") == 4);
  CHECK_THROWS_AS(class_index("Tumour"), LabelError);
}

TEST_CASE("canonical spec layout") {
  const auto spec = ModelSpec::canonical();
  CHECK(spec.block_filters == std::vector<std::size_t>{32, 64, 128, 256, 512});
  CHECK(spec.convs_per_block == 2);
  CHECK(spec.dense_units == 1500);
  CHECK(spec.num_classes == 10);
  CHECK(spec.conv_dropout == 0.25);
  CHECK(spec.dense_dropout == 0.40);
  REQUIRE(spec.padding.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(spec.padding[i] == (i % 2 == 0 ? Padding::same : Padding::valid));
}

TEST_CASE("spatial trace and minimum input size") {
  auto spec = ModelSpec::canonical(224, 224);
  // 224 -> 111 -> 54 -> 26 -> 12 -> 5
  CHECK(spec.final_extent() == std::array<std::size_t, 2>{5, 5});
  CHECK(spec.flatten_features() == 5 * 5 * 512);
  CHECK(min_input_extent(spec) == 94);
  CHECK_NOTHROW(ModelSpec::canonical(94, 94).validate());
  CHECK_THROWS_AS(ModelSpec::canonical(93, 93).validate(), SpecError);
  CHECK_THROWS_AS(ModelSpec::canonical(64, 64).validate(), SpecError);
  CHECK_NOTHROW(ModelSpec::canonical(64, 64, PaddingPolicy::all_same).validate());
}

TEST_CASE("parameter count matches the analytic formula") {
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{224, 224}, {96, 96}, {128, 100}}) {
    for (auto policy : {PaddingPolicy::per_block, PaddingPolicy::all_same}) {
      const auto spec = ModelSpec::canonical(h, w, policy);
      const auto model = Model::allocate(spec);
      CHECK(model.parameter_count() ==
            oracle::parameter_count(h, w, spec.block_filters, spec.padding, spec.dense_units, spec.num_classes));
    }
  }
  // hand-computed totals
  CHECK(Model::allocate(ModelSpec::canonical(224, 224)).parameter_count() == 23928734);
  CHECK(Model::allocate(ModelSpec::canonical(96, 96)).parameter_count() == 5496734);
}

TEST_CASE("parameter names and order") {
  auto model = Model::allocate(tiny_spec());
  const auto params = model.parameters();
  REQUIRE(params.size() == 12);
  CHECK(params[0]->name == "block1.conv1.weight");
  CHECK(params[3]->name == "block1.conv2.bias");
  CHECK(params[8]->name == "dense.weight");
  CHECK(params[11]->name == "output.bias");
}

TEST_CASE("spec JSON round trip") {
  auto spec = ModelSpec::canonical(96, 128, PaddingPolicy::first_layer_only);
  nlohmann::json j = spec;
  CHECK(j.at("input_size") == nlohmann::json::array({96, 128}));
  CHECK(j.get<ModelSpec>() == spec);
}

TEST_CASE("He initialisation is seeded and scaled by fan-in") {
  const auto spec = ModelSpec::canonical(96, 96);
  const auto a = Model::build(spec, 42);
  const auto b = Model::build(spec, 42);
  const auto c = Model::build(spec, 43);
  CHECK(a.convs()[9].weights.value == b.convs()[9].weights.value);
  CHECK_FALSE(a.convs()[9].weights.value == c.convs()[9].weights.value);
  // block5.conv2: fan_in 512*9, std sqrt(2/4608)
  double ss = 0;
  const auto& w = a.convs()[9].weights.value;
  for (float x : w.data()) ss += double(x) * x;
  CHECK(std::sqrt(ss / w.size()) == doctest::Approx(std::sqrt(2.0 / 4608)).epsilon(0.01));
  for (float x : a.hidden().bias.value.data()) CHECK(x == 0.0f);
}

TEST_CASE("forward shapes, softmax rows and input validation") {
  const auto model = BasicModel<double>::build(tiny_spec(), 1);
  Rng rng(3);
  const auto x = oracle::random_tensor({4, 3, 10, 10}, rng, 0, 1);
  const auto p = model.forward(x, Mode::eval);
  REQUIRE(p.shape() == Shape{4, 10});
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 10; ++c) s += p.at({r, c});
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(model.forward(x, Mode::eval) == p);
  CHECK_THROWS_AS(model.forward(Tensor64::zeros({1, 3, 12, 12}), Mode::eval), ShapeError);
  CHECK_THROWS_AS(model.forward(x, Mode::train), ContractError);
  Rng drop(5);
  CHECK(model.forward(x, Mode::train, &drop).shape() == Shape{4, 10});
}

TEST_CASE("miniature network gradients pass grad_check") {
  auto model = BasicModel<double>::build(tiny_spec(), 7);
  Rng rng(4);
  const auto x = oracle::random_tensor({2, 3, 10, 10}, rng, 0, 1);
  auto onehot = Tensor64::zeros({2, 10});
  onehot.at({0, 2}) = 1;
  onehot.at({1, 7}) = 1;
  LossFn<double> f = [&](Tape<double>& t) {
    return softmax_cross_entropy(model.forward_logits(t, t.constant(x), Mode::eval, nullptr), onehot);
  };
  for (auto* p : model.parameters()) CHECK_MESSAGE(grad_check(f, *p) < 1e-4, p->name);
}
