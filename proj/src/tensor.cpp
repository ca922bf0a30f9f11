#include "akid/tensor.hpp"

#include <atomic>
#include <cstring>
#include <functional>
#include <numeric>

namespace akid {

namespace {

std::atomic<DType> g_default_dtype{DType::f32};

}  // namespace

const char* to_string(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

DType default_dtype() { return g_default_dtype.load(std::memory_order_relaxed); }

void set_default_dtype(DType dtype) { g_default_dtype.store(dtype, std::memory_order_relaxed); }

Shape::Shape(std::initializer_list<std::size_t> extents) : Shape(std::vector<std::size_t>(extents)) {}

Shape::Shape(std::vector<std::size_t> extents) : extents_(std::move(extents)) {
  for (std::size_t axis = 0; axis < extents_.size(); ++axis) {
    if (extents_[axis] == 0) {
      throw ShapeError("shape " + to_string() + " has a zero extent on axis " + std::to_string(axis));
    }
  }
}

std::size_t Shape::operator[](std::size_t axis) const {
  if (axis >= extents_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string());
  }
  return extents_[axis];
}

std::size_t Shape::numel() const {
  return std::accumulate(extents_.begin(), extents_.end(), std::size_t{1}, std::multiplies<>());
}

Shape Shape::with_leading(std::size_t extent) const {
  if (extents_.empty()) throw ShapeError("scalar shape has no leading axis");
  auto extents = extents_;
  extents[0] = extent;
  return Shape(std::move(extents));
}

std::string Shape::to_string() const {
  std::string out = "[";
  for (std::size_t i = 0; i < extents_.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(extents_[i]);
  }
  return out + "]";
}

Tensor::Tensor() : Tensor(Shape{}, default_dtype()) {}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)) {
  if (dtype == DType::f32) {
    storage_ = std::vector<float>(shape_.numel(), 0.0F);
  } else {
    storage_ = std::vector<double>(shape_.numel(), 0.0);
  }
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return Tensor(std::move(shape), dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor out(std::move(shape), dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    for (auto& v : out.data<T>()) v = static_cast<T>(value);
  });
  return out;
}

Tensor Tensor::scalar(double value, DType dtype) { return full(Shape{}, value, dtype); }

Tensor Tensor::from(Shape shape, const std::vector<double>& values, DType dtype) {
  if (values.size() != shape.numel()) {
    throw ShapeError("shape " + shape.to_string() + " needs " + std::to_string(shape.numel()) + " values, got " +
                     std::to_string(values.size()));
  }
  Tensor out(std::move(shape), dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto dst = out.data<T>();
    for (std::size_t i = 0; i < values.size(); ++i) dst[i] = static_cast<T>(values[i]);
  });
  return out;
}

DType Tensor::dtype() const { return std::holds_alternative<std::vector<float>>(storage_) ? DType::f32 : DType::f64; }

double Tensor::at(std::size_t flat) const {
  if (flat >= numel()) throw ShapeError("flat index " + std::to_string(flat) + " out of range for " + shape_.to_string());
  return std::visit([flat](const auto& values) { return static_cast<double>(values[flat]); }, storage_);
}

void Tensor::set(std::size_t flat, double value) {
  if (flat >= numel()) throw ShapeError("flat index " + std::to_string(flat) + " out of range for " + shape_.to_string());
  std::visit(
      [flat, value](auto& values) {
        using T = typename std::decay_t<decltype(values)>::value_type;
        values[flat] = static_cast<T>(value);
      },
      storage_);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() needs a one-element tensor, got " + shape_.to_string());
  return at(0);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.numel() != numel()) {
    throw ShapeError("cannot reshape " + shape_.to_string() + " to " + shape.to_string());
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

Tensor Tensor::cast(DType dtype) const {
  if (dtype == this->dtype()) return *this;
  Tensor out(shape_, dtype);
  std::visit(
      [&](const auto& src) {
        dispatch(dtype, [&](auto tag) {
          using T = decltype(tag);
          auto dst = out.data<T>();
          for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
        });
      },
      storage_);
  return out;
}

std::vector<double> Tensor::to_vector() const {
  return std::visit([](const auto& values) { return std::vector<double>(values.begin(), values.end()); }, storage_);
}

bool Tensor::identical(const Tensor& other) const {
  if (shape_ != other.shape_ || dtype() != other.dtype()) return false;
  return std::visit(
      [&](const auto& mine) {
        using V = std::decay_t<decltype(mine)>;
        const auto& theirs = std::get<V>(other.storage_);
        return std::memcmp(mine.data(), theirs.data(), mine.size() * sizeof(typename V::value_type)) == 0;
      },
      storage_);
}

}  // namespace akid
