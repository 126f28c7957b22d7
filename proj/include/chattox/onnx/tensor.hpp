#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <type_traits>
#include <vector>

namespace chattox::onnx {

enum class DType : std::uint8_t { Float32, Float64, Int64, Int32, Int8, UInt8, Bool };

std::string_view dtype_name(DType dtype) noexcept;
std::size_t dtype_size(DType dtype) noexcept;

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape) noexcept;

template <class T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::Float32;
  else if constexpr (std::is_same_v<T, double>) return DType::Float64;
  else if constexpr (std::is_same_v<T, std::int64_t>) return DType::Int64;
  else if constexpr (std::is_same_v<T, std::int32_t>) return DType::Int32;
  else if constexpr (std::is_same_v<T, std::int8_t>) return DType::Int8;
  else if constexpr (std::is_same_v<T, std::uint8_t>) return DType::UInt8;
  else static_assert(!sizeof(T), "unsupported element type");
}

/// Dense row-major tensor. The element buffer is shared between copies and
/// reshapes; kernels only write to tensors they have just allocated.
/// Bool tensors store one byte per element and are accessed as uint8_t.
class Tensor {
 public:
  Tensor() = default;
  /// Zero-initialised tensor.
  Tensor(DType dtype, Shape shape);

  template <class T>
  static Tensor from(Shape shape, const std::vector<T>& values) {
    Tensor t(dtype_of<T>(), std::move(shape));
    std::copy(values.begin(), values.end(), t.mutable_data<T>());
    return t;
  }

  template <class T>
  static Tensor scalar(T value) {
    return from<T>({}, std::vector<T>{value});
  }

  static Tensor bools(Shape shape, const std::vector<bool>& values);

  DType dtype() const noexcept { return dtype_; }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return numel_; }
  bool empty() const noexcept { return !buffer_; }

  template <class T>
  const T* data() const {
    check<T>();
    return reinterpret_cast<const T*>(buffer_->data());
  }

  template <class T>
  T* mutable_data() {
    check<T>();
    return reinterpret_cast<T*>(buffer_->data());
  }

  template <class T>
  std::span<const T> values() const {
    return {data<T>(), numel_};
  }

  const void* raw() const noexcept { return buffer_ ? buffer_->data() : nullptr; }
  void* mutable_raw() noexcept { return buffer_ ? buffer_->data() : nullptr; }

  /// Same buffer, new shape (element count must match).
  Tensor reshaped(Shape shape) const;

  /// Integer tensor (any width) widened to int64.
  std::vector<std::int64_t> as_int64() const;
  /// Any numeric tensor converted to double.
  std::vector<double> as_double() const;

 private:
  template <class T>
  void check() const {
    if (dtype_of<T>() == dtype_) return;
    if (std::is_same_v<T, std::uint8_t> && dtype_ == DType::Bool) return;
    type_mismatch(dtype_of<T>());
  }
  [[noreturn]] void type_mismatch(DType requested) const;

  DType dtype_ = DType::Float32;
  Shape shape_;
  std::size_t numel_ = 0;
  std::shared_ptr<std::vector<std::byte>> buffer_;
};

}  // namespace chattox::onnx
