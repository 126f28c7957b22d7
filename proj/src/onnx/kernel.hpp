#pragma once

// Internal operator interface of the ONNX interpreter.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chattox/errors.hpp"
#include "chattox/onnx/tensor.hpp"

namespace chattox::onnx::detail {

struct Attribute {
  enum class Kind { Int, Float, String, Ints, Floats, Tensor, Other };
  Kind kind = Kind::Other;
  std::int64_t i = 0;
  float f = 0.0f;
  std::string s;
  std::vector<std::int64_t> ints;
  std::vector<float> floats;
  chattox::onnx::Tensor t;
};

using Attributes = std::map<std::string, Attribute, std::less<>>;

class KernelContext {
 public:
  KernelContext(std::string_view op, std::int64_t opset, const Attributes& attrs,
                std::span<const Tensor* const> inputs, std::vector<Tensor>& outputs,
                const std::vector<bool>& output_wanted)
      : op_(op), opset_(opset), attrs_(attrs), inputs_(inputs), outputs_(outputs), wanted_(output_wanted) {}

  std::string_view op() const noexcept { return op_; }
  std::int64_t opset() const noexcept { return opset_; }

  std::size_t input_count() const noexcept { return inputs_.size(); }
  bool has_input(std::size_t i) const noexcept { return i < inputs_.size() && inputs_[i] != nullptr; }
  const Tensor& input(std::size_t i) const {
    if (!has_input(i)) fail("missing input " + std::to_string(i));
    return *inputs_[i];
  }
  const Tensor* optional_input(std::size_t i) const noexcept { return has_input(i) ? inputs_[i] : nullptr; }

  std::size_t output_count() const noexcept { return outputs_.size(); }
  bool wants_output(std::size_t i) const noexcept { return i < wanted_.size() && wanted_[i]; }
  void set_output(std::size_t i, Tensor t) {
    if (i < outputs_.size()) outputs_[i] = std::move(t);
  }

  bool has_attr(std::string_view name) const { return attrs_.find(name) != attrs_.end(); }
  std::int64_t attr_int(std::string_view name, std::int64_t fallback) const;
  float attr_float(std::string_view name, float fallback) const;
  std::string attr_string(std::string_view name, std::string fallback) const;
  std::optional<std::vector<std::int64_t>> attr_ints(std::string_view name) const;
  const Tensor* attr_tensor(std::string_view name) const;

  [[noreturn]] void fail(const std::string& message) const {
    throw Error(std::string(op_) + ": " + message);
  }

 private:
  std::string_view op_;
  std::int64_t opset_;
  const Attributes& attrs_;
  std::span<const Tensor* const> inputs_;
  std::vector<Tensor>& outputs_;
  const std::vector<bool>& wanted_;
};

using Kernel = void (*)(KernelContext&);

/// Keyed by (domain, op_type); the default domain is "".
using KernelRegistry = std::map<std::pair<std::string, std::string>, Kernel, std::less<>>;

const KernelRegistry& kernels();

void register_elementwise(KernelRegistry& r);
void register_shape_ops(KernelRegistry& r);
void register_math(KernelRegistry& r);
void register_quantization(KernelRegistry& r);
void register_contrib(KernelRegistry& r);

// ---------------------------------------------------------------------------
// helpers shared by kernels

/// Normalises a possibly negative axis against `rank`.
std::size_t normalize_axis(std::int64_t axis, std::size_t rank);

/// Multidirectional (numpy) broadcast of two shapes.
Shape broadcast_shapes(const Shape& a, const Shape& b);

/// Strides of `shape` when broadcast to `out` (0 on broadcast dimensions).
std::vector<std::int64_t> broadcast_strides(const Shape& shape, const Shape& out);

std::vector<std::int64_t> contiguous_strides(const Shape& shape);

/// Calls fn(out_index, offsets) for every element of `out`, where offsets[k]
/// is the flat index into input k.
template <std::size_t N, class Fn>
void for_each_broadcast(const Shape& out, const std::array<std::vector<std::int64_t>, N>& strides, Fn&& fn) {
  const std::size_t rank = out.size();
  const auto total = shape_numel(out);
  if (total == 0) return;
  if (rank == 0) {
    std::array<std::int64_t, N> offs{};
    fn(std::int64_t{0}, offs);
    return;
  }
  std::vector<std::int64_t> counter(rank, 0);
  std::array<std::int64_t, N> offs{};
  const std::int64_t inner = out[rank - 1];
  std::array<std::int64_t, N> inner_stride{};
  for (std::size_t k = 0; k < N; ++k) inner_stride[k] = strides[k][rank - 1];
  std::int64_t index = 0;
  while (index < total) {
    std::array<std::int64_t, N> cur = offs;
    for (std::int64_t j = 0; j < inner; ++j) {
      fn(index++, cur);
      for (std::size_t k = 0; k < N; ++k) cur[k] += inner_stride[k];
    }
    // advance the outer dimensions
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++counter[d];
      for (std::size_t k = 0; k < N; ++k) offs[k] += strides[k][d];
      if (counter[d] < out[d]) break;
      for (std::size_t k = 0; k < N; ++k) offs[k] -= strides[k][d] * out[d];
      counter[d] = 0;
    }
  }
}

template <class Fn>
decltype(auto) dispatch_numeric(DType dtype, Fn&& fn) {
  switch (dtype) {
    case DType::Float32:
      return fn(float{});
    case DType::Float64:
      return fn(double{});
    case DType::Int64:
      return fn(std::int64_t{});
    case DType::Int32:
      return fn(std::int32_t{});
    case DType::Int8:
      return fn(std::int8_t{});
    case DType::UInt8:
    case DType::Bool:
      return fn(std::uint8_t{});
  }
  throw Error("unknown dtype");
}

template <class Fn>
decltype(auto) dispatch_float(DType dtype, std::string_view op, Fn&& fn) {
  switch (dtype) {
    case DType::Float32:
      return fn(float{});
    case DType::Float64:
      return fn(double{});
    default:
      throw Error(std::string(op) + ": expected a floating-point tensor, got " + std::string(dtype_name(dtype)));
  }
}

/// Batched matrix product layout with numpy semantics: 1-D operands are
/// promoted and the leading dimensions broadcast. `batches` lists, for each
/// output matrix, the matrix index into a and into b.
struct MatMulPlan {
  Shape out_shape;
  std::int64_t m = 0, k = 0, n = 0;
  std::vector<std::pair<std::int64_t, std::int64_t>> batches;
};
MatMulPlan plan_matmul(const Shape& a, const Shape& b);

/// Asymmetric uint8 quantisation with range [min(0, x), max(0, x)].
struct DynamicQuant {
  Tensor values;  // uint8, shape of x
  float scale = 1.0f;
  std::uint8_t zero_point = 0;
};
DynamicQuant dynamic_quantize(const Tensor& x);

/// Exact int32 product of 8-bit operands minus their zero points. `a_zp` is
/// a scalar or per-row [M]; `b_zp` a scalar or per-column [N].
Tensor integer_matmul(const Tensor& a, const Tensor& b, const Tensor* a_zp, const Tensor* b_zp);

/// Copies `src` converted to `dtype` (ONNX Cast semantics).
Tensor cast_tensor(const Tensor& src, DType dtype);

/// Reads a 0-d or 1-element tensor as double / int64.
double scalar_double(const Tensor& t);
std::int64_t scalar_int(const Tensor& t);

/// Round half to even, as used by the quantisation operators.
float round_half_even(float x);

}  // namespace chattox::onnx::detail
