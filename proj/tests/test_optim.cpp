#include <doctest.h>

#include <cmath>

#include "capsule/optim.hpp"
#include "oracles.hpp"

using namespace capsule;

namespace {

ModelSpec tiny_spec() {
  ModelSpec spec;
  spec.height = spec.width = 10;
  spec.block_filters = {4, 8};
  spec.dense_units = 16;
  spec.set_padding(PaddingPolicy::per_block);
  return spec;
}

LabeledImages random_images(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  LabeledImages data;
  for (std::size_t i = 0; i < n; ++i) {
    data.images.push_back(oracle::random_tensor({3, 10, 10}, rng, 0, 1).cast<float>());
    data.labels.push_back(i % kNumClasses);
  }
  return data;
}

}  // namespace

TEST_CASE("first Adam step moves each coordinate by about lr against the gradient") {
  Parameter<float> p("p", Tensor({3}, {1.0f, -2.0f, 0.5f}));
  p.grad = Tensor({3}, {0.3f, -4.0f, 1e-3f});
  Parameter<float>* params[] = {&p};
  AdamState adam;
  const auto stats = adam_step<float>(params, adam);
  CHECK(adam.t == 1);
  CHECK(p.value[0] == doctest::Approx(1.0 - 1e-4).epsilon(1e-6));
  CHECK(p.value[1] == doctest::Approx(-2.0 + 1e-4).epsilon(1e-6));
  CHECK(p.value[2] == doctest::Approx(0.5 - 1e-4 * 1e-3 / (1e-3 + 1e-8)).epsilon(1e-6));
  CHECK(stats.max_abs_update == doctest::Approx(1e-4).epsilon(1e-3));
  // gradients are left for the caller to clear
  CHECK(p.grad[1] == -4.0f);
}

TEST_CASE("Adam matches the bias-corrected recurrence over several steps") {
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Parameter<double> p("p", Tensor64({2}, {0.7, -0.3}));
  Parameter<double>* params[] = {&p};
  AdamState adam;
  adam.lr = lr;
  double x[2] = {0.7, -0.3}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 5; ++t) {
    for (int i = 0; i < 2; ++i) p.grad[i] = std::sin(3.0 * t + i);
    adam_step<double>(params, adam);
    for (int i = 0; i < 2; ++i) {
      const double g = std::sin(3.0 * t + i);
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mh = m[i] / (1 - std::pow(b1, t)), vh = v[i] / (1 - std::pow(b2, t));
      x[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
  CHECK(p.value[0] == doctest::Approx(x[0]).epsilon(1e-12));
  CHECK(p.value[1] == doctest::Approx(x[1]).epsilon(1e-12));
}

TEST_CASE("Adam rejects non-finite gradients and naming the parameter") {
  Parameter<float> p("block1.conv1.weight", Tensor::zeros({2}));
  p.grad[0] = NAN;
  Parameter<float>* params[] = {&p};
  AdamState adam;
  try {
    adam_step<float>(params, adam);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("block1.conv1.weight") != std::string::npos);
  }
}

TEST_CASE("Adam rejects moments that do not mirror the parameters") {
  Parameter<float> p("p", Tensor::zeros({2}));
  Parameter<float>* params[] = {&p};
  AdamState adam;
  adam.m = {Tensor64::zeros({3})};
  adam.v = {Tensor64::zeros({3})};
  CHECK_THROWS_AS(adam_step<float>(params, adam), ShapeError);
}

TEST_CASE("a single sample is memorised") {
  auto model = Model::build(tiny_spec(), 1);
  const auto data = random_images(1, 2);
  const auto batch = assemble_batch(data, {0});
  AdamState adam;
  adam.lr = 1e-3;
  double loss = 0;
  for (int step = 0; step < 200; ++step) {
    Tape<float> tape;
    auto l = softmax_cross_entropy(model.forward_logits(tape, tape.constant(batch.images), Mode::eval, nullptr),
                                   batch.onehot);
    loss = l.value().item();
    tape.backward(l);
    auto params = model.parameters();
    adam_step<float>(params, adam);
    model.zero_grad();
  }
  CHECK(loss < 1e-2);
}

TEST_CASE("train_epoch is deterministic and bounded by the Adam step size") {
  const auto data = random_images(12, 3);
  auto run = [&] {
    auto model = Model::build(tiny_spec(), 9);
    AdamState adam;
    Rng shuffle = Rng::substream(9, "shuffle"), drop = Rng::substream(9, "dropout");
    EpochStats last;
    for (int e = 1; e <= 3; ++e) last = train_epoch(model, data, 5, adam, shuffle, drop, e);
    return std::make_pair(last, serialize_checkpoint(model));
  };
  const auto [a, ckpt_a] = run();
  const auto [b, ckpt_b] = run();
  CHECK(ckpt_a == ckpt_b);
  CHECK(a.loss == b.loss);
  CHECK(a.samples == 12);
  CHECK(a.max_abs_update > 0.0);
  CHECK(a.max_abs_update <= 10 * 1e-4);
}

TEST_CASE("evaluate is unshuffled and consistent with forward") {
  const auto model = Model::build(tiny_spec(), 4);
  const auto data = random_images(7, 5);
  const auto r = evaluate(model, data, 3);
  REQUIRE(r.probabilities.shape() == Shape{7, 10});
  const auto one = model.forward(assemble_batch(data, {6}).images, Mode::eval);
  for (std::size_t c = 0; c < 10; ++c) CHECK(r.probabilities.at({6, c}) == doctest::Approx(one.at({0, c})));
  CHECK(std::isfinite(r.loss));
  CHECK_THROWS_AS(evaluate(model, LabeledImages{}, 3), DataError);
  auto m = Model::build(tiny_spec(), 4);
  AdamState adam;
  Rng s(1), d(2);
  CHECK_THROWS_AS(train_epoch(m, LabeledImages{}, 3, adam, s, d), DataError);
}
