#include <cfenv>
#include <cmath>

#include "kernel.hpp"

namespace chattox::onnx::detail {

std::int64_t KernelContext::attr_int(std::string_view name, std::int64_t fallback) const {
  auto it = attrs_.find(name);
  if (it == attrs_.end()) return fallback;
  if (it->second.kind != Attribute::Kind::Int) fail("attribute " + std::string(name) + " is not an int");
  return it->second.i;
}

float KernelContext::attr_float(std::string_view name, float fallback) const {
  auto it = attrs_.find(name);
  if (it == attrs_.end()) return fallback;
  if (it->second.kind == Attribute::Kind::Int) return static_cast<float>(it->second.i);
  if (it->second.kind != Attribute::Kind::Float) fail("attribute " + std::string(name) + " is not a float");
  return it->second.f;
}

std::string KernelContext::attr_string(std::string_view name, std::string fallback) const {
  auto it = attrs_.find(name);
  if (it == attrs_.end()) return fallback;
  if (it->second.kind != Attribute::Kind::String) fail("attribute " + std::string(name) + " is not a string");
  return it->second.s;
}

std::optional<std::vector<std::int64_t>> KernelContext::attr_ints(std::string_view name) const {
  auto it = attrs_.find(name);
  if (it == attrs_.end()) return std::nullopt;
  if (it->second.kind != Attribute::Kind::Ints) fail("attribute " + std::string(name) + " is not an int list");
  return it->second.ints;
}

const Tensor* KernelContext::attr_tensor(std::string_view name) const {
  auto it = attrs_.find(name);
  if (it == attrs_.end()) return nullptr;
  if (it->second.kind != Attribute::Kind::Tensor) fail("attribute " + std::string(name) + " is not a tensor");
  return &it->second.t;
}

const KernelRegistry& kernels() {
  static const KernelRegistry registry = [] {
    KernelRegistry r;
    register_elementwise(r);
    register_shape_ops(r);
    register_math(r);
    register_quantization(r);
    register_contrib(r);
    return r;
  }();
  return registry;
}

std::size_t normalize_axis(std::int64_t axis, std::size_t rank) {
  const auto r = static_cast<std::int64_t>(rank);
  if (axis < -r || axis >= r)
    throw Error("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1)
      throw Error("shapes cannot be broadcast (" + std::to_string(da) + " vs " + std::to_string(db) + ")");
    out[i] = da == 1 ? db : da;
  }
  return out;
}

std::vector<std::int64_t> contiguous_strides(const Shape& shape) {
  std::vector<std::int64_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

std::vector<std::int64_t> broadcast_strides(const Shape& shape, const Shape& out) {
  std::vector<std::int64_t> strides(out.size(), 0);
  const auto own = contiguous_strides(shape);
  const std::size_t offset = out.size() - shape.size();
  for (std::size_t i = 0; i < shape.size(); ++i) strides[offset + i] = shape[i] == 1 ? 0 : own[i];
  return strides;
}

namespace {

template <class From, class To>
void convert(const From* src, To* dst, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<To>(src[i]);
}

}  // namespace

Tensor cast_tensor(const Tensor& src, DType dtype) {
  if (src.dtype() == dtype) return src;
  Tensor out(dtype, src.shape());
  const std::size_t n = src.numel();
  if (dtype == DType::Bool) {
    auto* dst = out.mutable_data<std::uint8_t>();
    dispatch_numeric(src.dtype(), [&](auto tag) {
      using From = decltype(tag);
      const From* s = src.data<From>();
      for (std::size_t i = 0; i < n; ++i) dst[i] = s[i] != From{0} ? 1 : 0;
    });
    return out;
  }
  dispatch_numeric(src.dtype(), [&](auto from_tag) {
    using From = decltype(from_tag);
    dispatch_numeric(dtype, [&](auto to_tag) {
      using To = decltype(to_tag);
      convert(src.data<From>(), out.mutable_data<To>(), n);
    });
  });
  return out;
}

double scalar_double(const Tensor& t) {
  if (t.numel() != 1) throw Error("expected a single-element tensor");
  return t.as_double()[0];
}

std::int64_t scalar_int(const Tensor& t) {
  if (t.numel() != 1) throw Error("expected a single-element tensor");
  if (t.dtype() == DType::Float32 || t.dtype() == DType::Float64)
    return static_cast<std::int64_t>(t.as_double()[0]);
  return t.as_int64()[0];
}

float round_half_even(float x) {
  return std::nearbyint(x);  // default FE_TONEAREST rounds half to even
}

}  // namespace chattox::onnx::detail
