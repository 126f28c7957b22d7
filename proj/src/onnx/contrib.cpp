// GELU variants and com.microsoft fused operators found in optimised exports.

#include <cmath>

#include "kernel.hpp"

namespace chattox::onnx::detail {

namespace {

constexpr const char* kMs = "com.microsoft";

float gelu_erf(float x) { return 0.5f * x * (1.0f + std::erf(x * static_cast<float>(M_SQRT1_2))); }

float gelu_tanh(float x) {
  constexpr float kAlpha = 0.7978845608028654f;  // sqrt(2 / pi)
  constexpr float kBeta = 0.044715f;
  return 0.5f * x * (1.0f + std::tanh(kAlpha * (x + kBeta * x * x * x)));
}

// x (+ bias broadcast along the last axis), then fn elementwise.
template <float (*Fn)(float)>
Tensor apply_with_bias(const KernelContext& ctx, const Tensor& x, const Tensor* bias) {
  if (x.dtype() != DType::Float32) ctx.fail("expects a float32 input");
  Tensor out(DType::Float32, x.shape());
  const float* in = x.data<float>();
  float* o = out.mutable_data<float>();
  if (!bias) {
    for (std::size_t i = 0; i < x.numel(); ++i) o[i] = Fn(in[i]);
    return out;
  }
  const std::size_t width = bias->numel();
  if (width == 0 || x.numel() % width != 0 || x.rank() == 0 ||
      static_cast<std::size_t>(x.shape().back()) != width)
    ctx.fail("bias does not match the last dimension");
  const float* b = bias->data<float>();
  for (std::size_t i = 0; i < x.numel(); ++i) o[i] = Fn(in[i] + b[i % width]);
  return out;
}

void gelu_kernel(KernelContext& ctx) {
  const std::string approx = ctx.attr_string("approximate", "none");
  if (approx == "tanh") ctx.set_output(0, apply_with_bias<gelu_tanh>(ctx, ctx.input(0), nullptr));
  else if (approx == "none") ctx.set_output(0, apply_with_bias<gelu_erf>(ctx, ctx.input(0), nullptr));
  else ctx.fail("unknown approximation '" + approx + "'");
}

void ms_gelu_kernel(KernelContext& ctx) { ctx.set_output(0, apply_with_bias<gelu_erf>(ctx, ctx.input(0), nullptr)); }

void bias_gelu_kernel(KernelContext& ctx) {
  ctx.set_output(0, apply_with_bias<gelu_erf>(ctx, ctx.input(0), &ctx.input(1)));
}

void fast_gelu_kernel(KernelContext& ctx) {
  ctx.set_output(0, apply_with_bias<gelu_tanh>(ctx, ctx.input(0), ctx.optional_input(1)));
}

// LayerNorm(input + skip + bias) over the last axis.
void skip_layer_norm_kernel(KernelContext& ctx) {
  const Tensor& x = ctx.input(0);
  const Tensor& skip = ctx.input(1);
  const Tensor& gamma = ctx.input(2);
  const Tensor* beta = ctx.optional_input(3);
  const Tensor* bias = ctx.optional_input(4);
  if (x.dtype() != DType::Float32 || x.rank() == 0) ctx.fail("expects a float32 input");
  const auto hidden = x.shape().back();
  const auto rows = static_cast<std::int64_t>(x.numel()) / std::max<std::int64_t>(hidden, 1);
  auto check_vec = [&](const Tensor* t, const char* what) {
    if (t && static_cast<std::int64_t>(t->numel()) != hidden) ctx.fail(std::string(what) + " must have the hidden size");
  };
  check_vec(&gamma, "gamma");
  check_vec(beta, "beta");
  check_vec(bias, "bias");
  if (skip.numel() == 0 || x.numel() % skip.numel() != 0 || skip.shape().back() != hidden)
    ctx.fail("skip cannot be broadcast to the input");
  const float epsilon = ctx.attr_float("epsilon", 1e-12f);
  const float* in = x.data<float>();
  const float* sk = skip.data<float>();
  const float* g = gamma.data<float>();
  const float* be = beta ? beta->data<float>() : nullptr;
  const float* bi = bias ? bias->data<float>() : nullptr;
  const std::size_t skip_n = skip.numel();

  Tensor out(DType::Float32, x.shape());
  Tensor sum_t(DType::Float32, x.shape());
  Shape stat_shape = x.shape();
  stat_shape.back() = 1;
  Tensor mean_t(DType::Float32, stat_shape);
  Tensor inv_std_t(DType::Float32, stat_shape);
  float* o = out.mutable_data<float>();
  float* sum = sum_t.mutable_data<float>();
  for (std::int64_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    double sq = 0.0;
    for (std::int64_t j = 0; j < hidden; ++j) {
      const std::size_t i = static_cast<std::size_t>(r * hidden + j);
      const float v = in[i] + sk[i % skip_n] + (bi ? bi[j] : 0.0f);
      sum[i] = v;
      mean += v;
      sq += static_cast<double>(v) * v;
    }
    mean /= static_cast<double>(hidden);
    const double var = std::max(0.0, sq / static_cast<double>(hidden) - mean * mean);
    const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(epsilon));
    for (std::int64_t j = 0; j < hidden; ++j) {
      const std::size_t i = static_cast<std::size_t>(r * hidden + j);
      o[i] = static_cast<float>((sum[i] - mean) * inv_std) * g[j] + (be ? be[j] : 0.0f);
    }
    mean_t.mutable_data<float>()[r] = static_cast<float>(mean);
    inv_std_t.mutable_data<float>()[r] = static_cast<float>(inv_std);
  }
  ctx.set_output(0, std::move(out));
  if (ctx.wants_output(1)) ctx.set_output(1, std::move(mean_t));
  if (ctx.wants_output(2)) ctx.set_output(2, std::move(inv_std_t));
  if (ctx.wants_output(3)) ctx.set_output(3, std::move(sum_t));
}

// int32 accumulator * (a_scale * b_scale[col]) + bias[col]
Tensor rescale(const KernelContext& ctx, const Tensor& acc, float a_scale, const Tensor& b_scale, const Tensor* bias) {
  const auto n = acc.rank() == 0 ? 1 : acc.shape().back();
  if (b_scale.numel() != 1 && static_cast<std::int64_t>(b_scale.numel()) != n)
    ctx.fail("b_scale must be a scalar or per column");
  if (bias && static_cast<std::int64_t>(bias->numel()) != n) ctx.fail("bias must have one value per column");
  const std::int32_t* in = acc.data<std::int32_t>();
  const float* bs = b_scale.data<float>();
  const float* b = bias ? bias->data<float>() : nullptr;
  Tensor out(DType::Float32, acc.shape());
  float* o = out.mutable_data<float>();
  for (std::size_t i = 0; i < acc.numel(); ++i) {
    const auto col = static_cast<std::size_t>(static_cast<std::int64_t>(i) % n);
    const float scale = a_scale * bs[b_scale.numel() == 1 ? 0 : col];
    o[i] = static_cast<float>(in[i]) * scale + (b ? b[col] : 0.0f);
  }
  return out;
}

void dynamic_quantize_matmul_kernel(KernelContext& ctx) {
  const Tensor& a = ctx.input(0);
  if (a.dtype() != DType::Float32) ctx.fail("A must be float32");
  const DynamicQuant q = dynamic_quantize(a);
  const Tensor a_zp = Tensor::scalar<std::uint8_t>(q.zero_point);
  const Tensor acc = integer_matmul(q.values, ctx.input(1), &a_zp, ctx.optional_input(3));
  ctx.set_output(0, rescale(ctx, acc, q.scale, ctx.input(2), ctx.optional_input(4)));
}

void matmul_integer_to_float_kernel(KernelContext& ctx) {
  const Tensor& a_scale = ctx.input(2);
  if (a_scale.numel() != 1) ctx.fail("a_scale must be a scalar");
  const Tensor acc = integer_matmul(ctx.input(0), ctx.input(1), ctx.optional_input(4), ctx.optional_input(5));
  ctx.set_output(0, rescale(ctx, acc, a_scale.data<float>()[0], ctx.input(3), ctx.optional_input(6)));
}

}  // namespace

void register_contrib(KernelRegistry& r) {
  r[{"", "Gelu"}] = gelu_kernel;
  r[{kMs, "Gelu"}] = ms_gelu_kernel;
  r[{kMs, "BiasGelu"}] = bias_gelu_kernel;
  r[{kMs, "FastGelu"}] = fast_gelu_kernel;
  r[{kMs, "SkipLayerNormalization"}] = skip_layer_norm_kernel;
  r[{kMs, "DynamicQuantizeMatMul"}] = dynamic_quantize_matmul_kernel;
  r[{kMs, "MatMulIntegerToFloat"}] = matmul_integer_to_float_kernel;
}

}  // namespace chattox::onnx::detail
