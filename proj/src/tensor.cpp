#include "capsule/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <sstream>

namespace capsule {

const char* to_string(DType dtype) noexcept {
  return dtype == DType::float32 ? "float32" : "float64";
}

std::string shape_string(std::span<const std::size_t> shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

void validate_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("invalid shape " + shape_string(shape) + ": dimensions must be >= 1");
  }
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value) {
  if (shape.empty()) return scalar(value);
  validate_shape(shape);
  std::vector<T> data(shape_numel(shape), value);
  return BasicTensor(std::move(shape), std::move(data));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::identity(std::size_t n) {
  auto eye = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) eye.data_[i * n + i] = T{1};
  return eye;
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw AxisError("axis " + std::to_string(axis) + " out of range for rank " +
                    std::to_string(shape_.size()));
  }
  return shape_[axis];
}

template <typename T>
Shape BasicTensor<T>::strides() const {
  Shape s(shape_.size(), 1);
  for (std::size_t i = shape_.size(); i-- > 1;) s[i - 1] = s[i] * shape_[i];
  return s;
}

template <typename T>
std::size_t BasicTensor<T>::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("index rank " + std::to_string(index.size()) + " != tensor rank " +
                     std::to_string(shape_.size()));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape_[axis]) throw ShapeError("index out of bounds on axis " + std::to_string(axis));
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

template <typename T>
T& BasicTensor<T>::at(std::initializer_list<std::size_t> index) {
  return data_[offset(index)];
}

template <typename T>
const T& BasicTensor<T>::at(std::initializer_list<std::size_t> index) const {
  return data_[offset(index)];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape new_shape) const& {
  return BasicTensor(*this).reshaped(std::move(new_shape));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape new_shape) && {
  validate_shape(new_shape);
  if (shape_numel(new_shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(new_shape));
  }
  shape_ = std::move(new_shape);
  return std::move(*this);
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::operator+=(const BasicTensor& other) {
  if (other.shape_ != shape_) {
    throw ShapeError("accumulate " + shape_string(other.shape_) + " into " + shape_string(shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, Transpose ta, Transpose tb) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects rank-2 operands, got " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const bool at = ta == Transpose::yes;
  const bool bt = tb == Transpose::yes;
  const std::size_t m = at ? a.dim(1) : a.dim(0);
  const std::size_t k = at ? a.dim(0) : a.dim(1);
  const std::size_t kb = bt ? b.dim(1) : b.dim(0);
  const std::size_t n = bt ? b.dim(0) : b.dim(1);
  if (k != kb) {
    throw ShapeError("matmul inner dimension mismatch: " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }

  using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const RowMat>;
  ConstMap ma(a.data().data(), static_cast<Eigen::Index>(a.dim(0)), static_cast<Eigen::Index>(a.dim(1)));
  ConstMap mb(b.data().data(), static_cast<Eigen::Index>(b.dim(0)), static_cast<Eigen::Index>(b.dim(1)));

  auto c = BasicTensor<T>::zeros({m, n});
  Eigen::Map<RowMat> mc(c.data().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (!at && !bt) mc.noalias() = ma * mb;
  else if (at && !bt) mc.noalias() = ma.transpose() * mb;
  else if (!at && bt) mc.noalias() = ma * mb.transpose();
  else mc.noalias() = ma.transpose() * mb.transpose();
  return c;
}

template <typename T>
BasicTensor<T> elementwise(const BasicTensor<T>& a, const BasicTensor<T>& b, BinaryOp op) {
  const bool same = a.shape() == b.shape();
  const bool bias = !same && b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.dim(0);
  if (!same && !bias) {
    throw ShapeError("elementwise shapes incompatible: " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  auto out = a;
  auto o = out.data();
  auto bd = b.data();
  const std::size_t width = bd.size();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const T rhs = same ? bd[i] : bd[i % width];
    switch (op) {
      case BinaryOp::add: o[i] += rhs; break;
      case BinaryOp::sub: o[i] -= rhs; break;
      case BinaryOp::mul: o[i] *= rhs; break;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> reduce(const BasicTensor<T>& a, std::size_t axis, ReduceOp op) {
  if (axis >= a.rank()) {
    throw AxisError("reduce axis " + std::to_string(axis) + " out of range for rank " +
                    std::to_string(a.rank()));
  }
  const auto& shape = a.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];

  Shape out_shape;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out_shape.push_back(shape[i]);
  }
  auto out = BasicTensor<T>::zeros(out_shape);
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const T* base = src.data() + o * len * inner + in;
      T acc = base[0];
      std::size_t best = 0;
      for (std::size_t j = 1; j < len; ++j) {
        const T v = base[j * inner];
        switch (op) {
          case ReduceOp::sum:
          case ReduceOp::mean: acc += v; break;
          case ReduceOp::max:
          case ReduceOp::argmax:
            if (v > acc) {
              acc = v;
              best = j;
            }
            break;
        }
      }
      T result = acc;
      if (op == ReduceOp::mean) result = acc / static_cast<T>(len);
      if (op == ReduceOp::argmax) result = static_cast<T>(best);
      dst[o * inner + in] = result;
    }
  }
  return out;
}

template <typename T>
std::vector<std::size_t> argmax_rows(const BasicTensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("argmax_rows expects rank 2, got " + shape_string(a.shape()));
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<std::size_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = a.data().data() + r * cols;
    out[r] = static_cast<std::size_t>(std::max_element(row, row + cols) - row);
  }
  return out;
}

#define CAPSULE_INSTANTIATE(T)                                                                \
  template class BasicTensor<T>;                                                              \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&, Transpose,     \
                                 Transpose);                                                  \
  template BasicTensor<T> elementwise(const BasicTensor<T>&, const BasicTensor<T>&, BinaryOp); \
  template BasicTensor<T> reduce(const BasicTensor<T>&, std::size_t, ReduceOp);               \
  template std::vector<std::size_t> argmax_rows(const BasicTensor<T>&);

CAPSULE_INSTANTIATE(float)
CAPSULE_INSTANTIATE(double)

#undef CAPSULE_INSTANTIATE

}  // namespace capsule
