#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "capsule/errors.hpp"

namespace capsule {

enum class DType { float32, float64 };

template <typename T>
struct dtype_of;
template <>
struct dtype_of<float> {
  static constexpr DType value = DType::float32;
};
template <>
struct dtype_of<double> {
  static constexpr DType value = DType::float64;
};

const char* to_string(DType dtype) noexcept;

using Shape = std::vector<std::size_t>;

std::string shape_string(std::span<const std::size_t> shape);
std::size_t shape_numel(std::span<const std::size_t> shape);

// Dense row-major array. No views or aliasing: every tensor owns its buffer.
// Rank 0 is a scalar holding exactly one element.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  static constexpr DType dtype = dtype_of<T>::value;

  BasicTensor() : data_(1, T{0}) {}
  BasicTensor(Shape shape, std::vector<T> data);

  static BasicTensor zeros(Shape shape) { return full(std::move(shape), T{0}); }
  static BasicTensor ones(Shape shape) { return full(std::move(shape), T{1}); }
  static BasicTensor full(Shape shape, T value);
  static BasicTensor scalar(T value) { return BasicTensor({}, {value}); }
  static BasicTensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  Shape strides() const;

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& buffer() const noexcept { return data_; }

  T& operator[](std::size_t flat) { return data_[flat]; }
  const T& operator[](std::size_t flat) const { return data_[flat]; }

  T& at(std::initializer_list<std::size_t> index);
  const T& at(std::initializer_list<std::size_t> index) const;

  // Value of a rank-0 or single-element tensor.
  T item() const;

  BasicTensor reshaped(Shape new_shape) const&;
  BasicTensor reshaped(Shape new_shape) &&;

  void fill(T value);
  BasicTensor& operator+=(const BasicTensor& other);

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

enum class Transpose { no, yes };
enum class BinaryOp { add, sub, mul };
enum class ReduceOp { sum, mean, max, argmax };

// c = op(a) * op(b) for rank-2 operands.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b,
                      Transpose ta = Transpose::no, Transpose tb = Transpose::no);

// Identical shapes, or b rank-1 matching a's last axis (bias broadcast).
template <typename T>
BasicTensor<T> elementwise(const BasicTensor<T>& a, const BasicTensor<T>& b, BinaryOp op);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(a, b, BinaryOp::add);
}
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(a, b, BinaryOp::sub);
}
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(a, b, BinaryOp::mul);
}

// Output rank is input rank - 1. argmax yields indices stored as T; ties go
// to the lowest index.
template <typename T>
BasicTensor<T> reduce(const BasicTensor<T>& a, std::size_t axis, ReduceOp op);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape new_shape) {
  return a.reshaped(std::move(new_shape));
}

// Row-wise argmax of a rank-2 tensor as integer indices.
template <typename T>
std::vector<std::size_t> argmax_rows(const BasicTensor<T>& a);

}  // namespace capsule
