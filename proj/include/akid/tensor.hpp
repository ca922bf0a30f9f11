#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "akid/error.hpp"

namespace akid {

enum class DType { f32, f64 };

const char* to_string(DType dtype);

// Process-wide precision used by every tensor factory that is not given an
// explicit dtype. Training runs at f32; gradient-check suites switch to f64.
DType default_dtype();
void set_default_dtype(DType dtype);

// Restores the previous default dtype on scope exit.
class PrecisionScope {
 public:
  explicit PrecisionScope(DType dtype) : previous_(default_dtype()) { set_default_dtype(dtype); }
  ~PrecisionScope() { set_default_dtype(previous_); }
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  DType previous_;
};

// Calls `fn` with a value-initialized float or double matching `dtype`.
template <class Fn>
decltype(auto) dispatch(DType dtype, Fn&& fn) {
  if (dtype == DType::f32) return std::forward<Fn>(fn)(float{});
  return std::forward<Fn>(fn)(double{});
}

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

// Extents of a tensor. Every extent is positive; rank 0 denotes a scalar.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> extents);
  explicit Shape(std::vector<std::size_t> extents);

  std::size_t rank() const { return extents_.size(); }
  std::size_t operator[](std::size_t axis) const;
  std::size_t numel() const;
  const std::vector<std::size_t>& extents() const { return extents_; }
  auto begin() const { return extents_.begin(); }
  auto end() const { return extents_.end(); }

  // Same extents with axis 0 replaced; used to compare shapes across batch sizes.
  Shape with_leading(std::size_t extent) const;

  std::string to_string() const;
  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> extents_;
};

// Dense row-major n-dimensional array. The shape is fixed at construction; the
// element type is f32 or f64.
class Tensor {
 public:
  // Zero-filled rank-0 tensor.
  Tensor();
  explicit Tensor(Shape shape, DType dtype = default_dtype());

  static Tensor zeros(Shape shape, DType dtype = default_dtype());
  static Tensor full(Shape shape, double value, DType dtype = default_dtype());
  static Tensor scalar(double value, DType dtype = default_dtype());
  static Tensor from(Shape shape, const std::vector<double>& values, DType dtype = default_dtype());

  const Shape& shape() const { return shape_; }
  DType dtype() const;
  std::size_t numel() const { return shape_.numel(); }
  std::size_t rank() const { return shape_.rank(); }

  template <class T>
  std::span<T> data() {
    auto* values = std::get_if<std::vector<T>>(&storage_);
    if (values == nullptr) throw Error("tensor element type mismatch: tensor is " + std::string(to_string(dtype())));
    return {values->data(), values->size()};
  }
  template <class T>
  std::span<const T> data() const {
    const auto* values = std::get_if<std::vector<T>>(&storage_);
    if (values == nullptr) throw Error("tensor element type mismatch: tensor is " + std::string(to_string(dtype())));
    return {values->data(), values->size()};
  }

  double at(std::size_t flat) const;
  void set(std::size_t flat, double value);
  // The single element of a one-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;
  Tensor cast(DType dtype) const;
  std::vector<double> to_vector() const;

  // Bitwise equality of shape, dtype and contents.
  bool identical(const Tensor& other) const;

 private:
  Shape shape_;
  std::variant<std::vector<float>, std::vector<double>> storage_;
};

}  // namespace akid
