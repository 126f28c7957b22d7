// 8-bit quantisation operators.

#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "kernel.hpp"

namespace chattox::onnx::detail {

namespace {

template <class Q>
Q saturate(float v) {
  constexpr float lo = static_cast<float>(std::numeric_limits<Q>::min());
  constexpr float hi = static_cast<float>(std::numeric_limits<Q>::max());
  return static_cast<Q>(std::clamp(v, lo, hi));
}

// Per-element parameter lookup for scalar or per-axis scale/zero-point.
struct AxisParam {
  std::int64_t axis_stride = 1;  // elements per step along the axis
  std::int64_t axis_dim = 1;
  bool per_axis = false;

  std::size_t index(std::size_t flat) const {
    return per_axis ? static_cast<std::size_t>((static_cast<std::int64_t>(flat) / axis_stride) % axis_dim) : 0;
  }
};

AxisParam axis_param(const KernelContext& ctx, const Tensor& x, const Tensor& scale) {
  AxisParam p;
  if (scale.numel() == 1 && scale.rank() <= 1) return p;
  if (scale.rank() != 1) ctx.fail("blocked quantisation is not supported");
  const std::size_t axis = normalize_axis(ctx.attr_int("axis", 1), x.rank());
  if (scale.shape()[0] != x.shape()[axis]) ctx.fail("scale length does not match the quantisation axis");
  p.per_axis = true;
  p.axis_dim = x.shape()[axis];
  for (std::size_t d = axis + 1; d < x.rank(); ++d) p.axis_stride *= x.shape()[d];
  return p;
}

void quantize_linear_kernel(KernelContext& ctx) {
  const Tensor& x = ctx.input(0);
  const Tensor& scale = ctx.input(1);
  const Tensor* zp = ctx.optional_input(2);
  if (x.dtype() != DType::Float32 || scale.dtype() != DType::Float32) ctx.fail("expects float32 input and scale");
  const DType out_type = zp ? zp->dtype() : DType::UInt8;
  if (out_type != DType::UInt8 && out_type != DType::Int8) ctx.fail("zero point must be int8 or uint8");
  if (zp && zp->numel() != scale.numel()) ctx.fail("scale and zero point differ in size");
  const AxisParam p = axis_param(ctx, x, scale);
  const float* in = x.data<float>();
  const float* s = scale.data<float>();
  const auto zps = zp ? zp->as_int64() : std::vector<std::int64_t>(scale.numel(), 0);
  Tensor out(out_type, x.shape());
  dispatch_numeric(out_type, [&](auto tag) {
    using Q = decltype(tag);
    if constexpr (std::is_same_v<Q, std::uint8_t> || std::is_same_v<Q, std::int8_t>) {
      Q* o = out.mutable_data<Q>();
      for (std::size_t i = 0; i < x.numel(); ++i) {
        const std::size_t k = p.index(i);
        o[i] = saturate<Q>(round_half_even(in[i] / s[k]) + static_cast<float>(zps[k]));
      }
    }
  });
  ctx.set_output(0, std::move(out));
}

void dequantize_linear_kernel(KernelContext& ctx) {
  const Tensor& x = ctx.input(0);
  const Tensor& scale = ctx.input(1);
  const Tensor* zp = ctx.optional_input(2);
  if (scale.dtype() != DType::Float32) ctx.fail("expects a float32 scale");
  if (zp && zp->numel() != scale.numel()) ctx.fail("scale and zero point differ in size");
  const AxisParam p = axis_param(ctx, x, scale);
  const auto q = x.as_int64();
  const float* s = scale.data<float>();
  const auto zps = zp ? zp->as_int64() : std::vector<std::int64_t>(scale.numel(), 0);
  Tensor out(DType::Float32, x.shape());
  float* o = out.mutable_data<float>();
  for (std::size_t i = 0; i < q.size(); ++i) {
    const std::size_t k = p.index(i);
    o[i] = static_cast<float>(q[i] - zps[k]) * s[k];
  }
  ctx.set_output(0, std::move(out));
}

void dynamic_quantize_linear_kernel(KernelContext& ctx) {
  const Tensor& x = ctx.input(0);
  if (x.dtype() != DType::Float32) ctx.fail("expects a float32 input");
  DynamicQuant q = dynamic_quantize(x);
  ctx.set_output(0, std::move(q.values));
  ctx.set_output(1, Tensor::scalar<float>(q.scale));
  ctx.set_output(2, Tensor::scalar<std::uint8_t>(q.zero_point));
}

void matmul_integer_kernel(KernelContext& ctx) {
  ctx.set_output(0, integer_matmul(ctx.input(0), ctx.input(1), ctx.optional_input(2), ctx.optional_input(3)));
}

}  // namespace

DynamicQuant dynamic_quantize(const Tensor& x) {
  const float* in = x.data<float>();
  float lo = 0.0f;
  float hi = 0.0f;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    lo = std::min(lo, in[i]);
    hi = std::max(hi, in[i]);
  }
  DynamicQuant q;
  q.scale = hi == lo ? 1.0f : (hi - lo) / 255.0f;
  q.zero_point = saturate<std::uint8_t>(round_half_even(0.0f - lo / q.scale));
  q.values = Tensor(DType::UInt8, x.shape());
  auto* o = q.values.mutable_data<std::uint8_t>();
  const float zp = static_cast<float>(q.zero_point);
  for (std::size_t i = 0; i < x.numel(); ++i) o[i] = saturate<std::uint8_t>(round_half_even(in[i] / q.scale) + zp);
  return q;
}

Tensor integer_matmul(const Tensor& a, const Tensor& b, const Tensor* a_zp, const Tensor* b_zp) {
  auto is_8bit = [](DType t) { return t == DType::UInt8 || t == DType::Int8; };
  if (!is_8bit(a.dtype()) || !is_8bit(b.dtype())) throw Error("MatMulInteger: operands must be 8-bit");
  const MatMulPlan plan = plan_matmul(a.shape(), b.shape());
  const auto av = a.as_int64();
  const auto bv = b.as_int64();
  const auto azp = a_zp ? a_zp->as_int64() : std::vector<std::int64_t>{0};
  const auto bzp = b_zp ? b_zp->as_int64() : std::vector<std::int64_t>{0};
  if (azp.size() != 1 && static_cast<std::int64_t>(azp.size()) != plan.m)
    throw Error("MatMulInteger: a_zero_point must be a scalar or per row");
  if (bzp.size() != 1 && static_cast<std::int64_t>(bzp.size()) != plan.n)
    throw Error("MatMulInteger: b_zero_point must be a scalar or per column");

  using IMat = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  // widen every distinct operand matrix once
  auto widen_a = [&](std::int64_t idx) {
    IMat m(plan.m, plan.k);
    const std::int64_t base = idx * plan.m * plan.k;
    for (std::int64_t r = 0; r < plan.m; ++r) {
      const std::int64_t z = azp.size() == 1 ? azp[0] : azp[r];
      for (std::int64_t c = 0; c < plan.k; ++c) m(r, c) = static_cast<std::int32_t>(av[base + r * plan.k + c] - z);
    }
    return m;
  };
  auto widen_b = [&](std::int64_t idx) {
    IMat m(plan.k, plan.n);
    const std::int64_t base = idx * plan.k * plan.n;
    for (std::int64_t r = 0; r < plan.k; ++r)
      for (std::int64_t c = 0; c < plan.n; ++c)
        m(r, c) = static_cast<std::int32_t>(bv[base + r * plan.n + c] - (bzp.size() == 1 ? bzp[0] : bzp[c]));
    return m;
  };
  Tensor out(DType::Int32, plan.out_shape);
  std::int32_t* po = out.mutable_data<std::int32_t>();
  std::int64_t cached_b = -1;
  IMat bm;
  for (std::size_t i = 0; i < plan.batches.size(); ++i) {
    if (plan.batches[i].second != cached_b) {
      cached_b = plan.batches[i].second;
      bm = widen_b(cached_b);
    }
    Eigen::Map<IMat> C(po + static_cast<std::int64_t>(i) * plan.m * plan.n, plan.m, plan.n);
    C.noalias() = widen_a(plan.batches[i].first) * bm;
  }
  return out;
}

void register_quantization(KernelRegistry& r) {
  r[{"", "QuantizeLinear"}] = quantize_linear_kernel;
  r[{"", "DequantizeLinear"}] = dequantize_linear_kernel;
  r[{"", "DynamicQuantizeLinear"}] = dynamic_quantize_linear_kernel;
  r[{"", "MatMulInteger"}] = matmul_integer_kernel;
}

}  // namespace chattox::onnx::detail
