#include <doctest.h>

#include "capsule/rng.hpp"
#include "capsule/tensor.hpp"
#include "oracles.hpp"

using namespace capsule;

TEST_CASE("construction checks length and dims") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>(5)), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rank() == 2);
  CHECK(t.size() == 6);
  CHECK(t.strides() == Shape{3, 1});
  CHECK(t.at({1, 2}) == 6.0f);
  CHECK_THROWS_AS(t.dim(2), AxisError);
}

TEST_CASE("scalar is rank 0 with one element") {
  const auto s = Tensor::scalar(2.5f);
  CHECK(s.rank() == 0);
  CHECK(s.size() == 1);
  CHECK(s.item() == 2.5f);
  CHECK(Tensor::full({}, 1.0f).size() == 1);
}

TEST_CASE("reshape keeps data and rejects mismatched sizes") {
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto r = reshape(t, {3, 2});
  CHECK(r.shape() == Shape{3, 2});
  CHECK(r.buffer() == t.buffer());
  CHECK_THROWS_AS(reshape(t, {4, 2}), ShapeError);
}

TEST_CASE("matmul with transposes against explicit loops") {
  Rng rng(3);
  const auto a = oracle::random_tensor({4, 5}, rng);
  const auto b = oracle::random_tensor({5, 3}, rng);
  const auto c = matmul(a, b);
  REQUIRE(c.shape() == Shape{4, 3});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 5; ++k) acc += a.at({i, k}) * b.at({k, j});
      CHECK(c.at({i, j}) == doctest::Approx(acc).epsilon(1e-12));
    }
  // (a^T)^T b == a b
  Tensor64 at({5, 4}, std::vector<double>(20));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 5; ++k) at.at({k, i}) = a.at({i, k});
  const auto c2 = matmul(at, b, Transpose::yes, Transpose::no);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c2[i] == doctest::Approx(c[i]).epsilon(1e-12));
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("identity is neutral for matmul") {
  Rng rng(4);
  const auto a = oracle::random_tensor({3, 3}, rng);
  const auto c = matmul(a, Tensor64::identity(3));
  for (std::size_t i = 0; i < 9; ++i) CHECK(c[i] == doctest::Approx(a[i]).epsilon(1e-15));
}

TEST_CASE("elementwise ops broadcast a rank-1 bias") {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor bias({2}, {10, 20});
  CHECK(add(a, bias).buffer() == std::vector<float>{11, 22, 13, 24});
  CHECK(sub(a, a).buffer() == std::vector<float>{0, 0, 0, 0});
  CHECK(mul(a, a).buffer() == std::vector<float>{1, 4, 9, 16});
  CHECK_THROWS_AS(add(a, Tensor({3}, {1, 2, 3})), ShapeError);
}

TEST_CASE("reductions along an axis") {
  const Tensor a({2, 3}, {1, 5, 5, 7, 2, 3});
  CHECK(reduce(a, 1, ReduceOp::sum).buffer() == std::vector<float>{11, 12});
  CHECK(reduce(a, 0, ReduceOp::max).buffer() == std::vector<float>{7, 5, 5});
  CHECK(reduce(a, 1, ReduceOp::mean).buffer() == std::vector<float>{11.0f / 3, 4});
  // ties resolve to the lowest index
  CHECK(reduce(a, 1, ReduceOp::argmax).buffer() == std::vector<float>{1, 0});
  CHECK(argmax_rows(a) == std::vector<std::size_t>{1, 0});
  CHECK_THROWS_AS(reduce(a, 2, ReduceOp::sum), AxisError);
}

TEST_CASE("cast and equality") {
  const Tensor a({2}, {1.5f, -2.0f});
  const auto d = a.cast<double>();
  CHECK(d.buffer() == std::vector<double>{1.5, -2.0});
  CHECK(d.cast<float>() == a);
  auto b = a;
  b += a;
  CHECK(b.buffer() == std::vector<float>{3.0f, -4.0f});
}
