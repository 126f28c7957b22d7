#include "chattox/onnx/tensor.hpp"

#include <algorithm>
#include <string>

#include "chattox/errors.hpp"

namespace chattox::onnx {

std::string_view dtype_name(DType dtype) noexcept {
  switch (dtype) {
    case DType::Float32:
      return "float32";
    case DType::Float64:
      return "float64";
    case DType::Int64:
      return "int64";
    case DType::Int32:
      return "int32";
    case DType::Int8:
      return "int8";
    case DType::UInt8:
      return "uint8";
    case DType::Bool:
      return "bool";
  }
  return "?";
}

std::size_t dtype_size(DType dtype) noexcept {
  switch (dtype) {
    case DType::Float64:
    case DType::Int64:
      return 8;
    case DType::Float32:
    case DType::Int32:
      return 4;
    default:
      return 1;
  }
}

std::int64_t shape_numel(const Shape& shape) noexcept {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(DType dtype, Shape shape) : dtype_(dtype), shape_(std::move(shape)) {
  for (auto d : shape_)
    if (d < 0) throw InvalidArgument("negative tensor dimension");
  numel_ = static_cast<std::size_t>(shape_numel(shape_));
  buffer_ = std::make_shared<std::vector<std::byte>>(std::max<std::size_t>(numel_ * dtype_size(dtype_), 1));
}

Tensor Tensor::bools(Shape shape, const std::vector<bool>& values) {
  Tensor t(DType::Bool, std::move(shape));
  auto* out = t.mutable_data<std::uint8_t>();
  for (std::size_t i = 0; i < values.size() && i < t.numel(); ++i) out[i] = values[i] ? 1 : 0;
  return t;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (static_cast<std::size_t>(shape_numel(shape)) != numel_)
    throw InvalidArgument("reshape changes the element count");
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

std::vector<std::int64_t> Tensor::as_int64() const {
  std::vector<std::int64_t> out(numel_);
  switch (dtype_) {
    case DType::Int64:
      std::copy_n(data<std::int64_t>(), numel_, out.begin());
      break;
    case DType::Int32:
      std::copy_n(data<std::int32_t>(), numel_, out.begin());
      break;
    case DType::Int8:
      std::copy_n(data<std::int8_t>(), numel_, out.begin());
      break;
    case DType::UInt8:
    case DType::Bool:
      std::copy_n(data<std::uint8_t>(), numel_, out.begin());
      break;
    default:
      throw InvalidArgument("expected an integer tensor, got " + std::string(dtype_name(dtype_)));
  }
  return out;
}

std::vector<double> Tensor::as_double() const {
  std::vector<double> out(numel_);
  switch (dtype_) {
    case DType::Float32:
      std::copy_n(data<float>(), numel_, out.begin());
      break;
    case DType::Float64:
      std::copy_n(data<double>(), numel_, out.begin());
      break;
    default: {
      const auto ints = as_int64();
      std::copy(ints.begin(), ints.end(), out.begin());
    }
  }
  return out;
}

void Tensor::type_mismatch(DType requested) const {
  throw InvalidArgument("tensor holds " + std::string(dtype_name(dtype_)) + ", accessed as " +
                        std::string(dtype_name(requested)));
}

}  // namespace chattox::onnx
