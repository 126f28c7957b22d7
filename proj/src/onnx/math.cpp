// Matrix products, normalisation and reductions.

#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "kernel.hpp"

namespace chattox::onnx::detail {

MatMulPlan plan_matmul(const Shape& a_in, const Shape& b_in) {
  if (a_in.empty() || b_in.empty()) throw Error("MatMul: operands must have rank >= 1");
  Shape a = a_in;
  Shape b = b_in;
  const bool a_vec = a.size() == 1;
  const bool b_vec = b.size() == 1;
  if (a_vec) a.insert(a.begin(), 1);
  if (b_vec) b.push_back(1);
  MatMulPlan plan;
  plan.m = a[a.size() - 2];
  plan.k = a[a.size() - 1];
  plan.n = b[b.size() - 1];
  if (b[b.size() - 2] != plan.k)
    throw Error("MatMul: inner dimensions differ (" + std::to_string(plan.k) + " vs " +
                std::to_string(b[b.size() - 2]) + ")");
  const Shape a_batch(a.begin(), a.end() - 2);
  const Shape b_batch(b.begin(), b.end() - 2);
  const Shape batch = broadcast_shapes(a_batch, b_batch);
  const std::array<std::vector<std::int64_t>, 2> strides{broadcast_strides(a_batch, batch),
                                                         broadcast_strides(b_batch, batch)};
  plan.batches.reserve(static_cast<std::size_t>(shape_numel(batch)));
  for_each_broadcast<2>(batch, strides, [&](std::int64_t, const std::array<std::int64_t, 2>& o) {
    plan.batches.emplace_back(o[0], o[1]);
  });
  plan.out_shape = batch;
  if (!a_vec) plan.out_shape.push_back(plan.m);
  if (!b_vec) plan.out_shape.push_back(plan.n);
  return plan;
}

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
void matmul_typed(const Tensor& a, const Tensor& b, Tensor& out, const MatMulPlan& plan) {
  const T* pa = a.data<T>();
  const T* pb = b.data<T>();
  T* po = out.mutable_data<T>();
  const std::int64_t a_size = plan.m * plan.k;
  const std::int64_t b_size = plan.k * plan.n;
  const std::int64_t o_size = plan.m * plan.n;
  for (std::size_t i = 0; i < plan.batches.size(); ++i) {
    Eigen::Map<const RowMat<T>> A(pa + plan.batches[i].first * a_size, plan.m, plan.k);
    Eigen::Map<const RowMat<T>> B(pb + plan.batches[i].second * b_size, plan.k, plan.n);
    Eigen::Map<RowMat<T>> C(po + static_cast<std::int64_t>(i) * o_size, plan.m, plan.n);
    C.noalias() = A * B;
  }
}

void matmul_kernel(KernelContext& ctx) {
  const Tensor& a = ctx.input(0);
  const Tensor& b = ctx.input(1);
  if (a.dtype() != b.dtype()) ctx.fail("operand types differ");
  const MatMulPlan plan = plan_matmul(a.shape(), b.shape());
  Tensor out(a.dtype(), plan.out_shape);
  switch (a.dtype()) {
    case DType::Float32:
      matmul_typed<float>(a, b, out, plan);
      break;
    case DType::Float64:
      matmul_typed<double>(a, b, out, plan);
      break;
    case DType::Int32:
      matmul_typed<std::int32_t>(a, b, out, plan);
      break;
    case DType::Int64:
      matmul_typed<std::int64_t>(a, b, out, plan);
      break;
    default:
      ctx.fail("unsupported element type " + std::string(dtype_name(a.dtype())));
  }
  ctx.set_output(0, std::move(out));
}

void gemm_kernel(KernelContext& ctx) {
  const Tensor& a = ctx.input(0);
  const Tensor& b = ctx.input(1);
  const Tensor* c = ctx.optional_input(2);
  if (a.rank() != 2 || b.rank() != 2) ctx.fail("A and B must be matrices");
  if (a.dtype() != b.dtype()) ctx.fail("operand types differ");
  const bool ta = ctx.attr_int("transA", 0) != 0;
  const bool tb = ctx.attr_int("transB", 0) != 0;
  const std::int64_t m = ta ? a.shape()[1] : a.shape()[0];
  const std::int64_t k = ta ? a.shape()[0] : a.shape()[1];
  const std::int64_t kb = tb ? b.shape()[1] : b.shape()[0];
  const std::int64_t n = tb ? b.shape()[0] : b.shape()[1];
  if (k != kb) ctx.fail("inner dimensions differ");
  const float alpha = ctx.attr_float("alpha", 1.0f);
  const float beta = ctx.attr_float("beta", 1.0f);
  Tensor out(a.dtype(), {m, n});
  dispatch_float(a.dtype(), ctx.op(), [&](auto tag) {
    using T = decltype(tag);
    Eigen::Map<const RowMat<T>> A(a.data<T>(), a.shape()[0], a.shape()[1]);
    Eigen::Map<const RowMat<T>> B(b.data<T>(), b.shape()[0], b.shape()[1]);
    Eigen::Map<RowMat<T>> C(out.mutable_data<T>(), m, n);
    if (ta && tb) C.noalias() = A.transpose() * B.transpose();
    else if (ta) C.noalias() = A.transpose() * B;
    else if (tb) C.noalias() = A * B.transpose();
    else C.noalias() = A * B;
    if (alpha != 1.0f) C *= static_cast<T>(alpha);
    if (c && beta != 0.0f) {
      if (c->dtype() != a.dtype()) ctx.fail("C has a different type");
      const Shape shape{m, n};
      const auto strides = broadcast_strides(c->shape(), broadcast_shapes(c->shape(), shape));
      if (broadcast_shapes(c->shape(), shape) != shape) ctx.fail("C cannot be broadcast to the output");
      const T* pc = c->data<T>();
      T* po = out.mutable_data<T>();
      for_each_broadcast<1>(shape, std::array<std::vector<std::int64_t>, 1>{strides},
                            [&](std::int64_t i, const std::array<std::int64_t, 1>& o) {
                              po[i] += static_cast<T>(beta) * pc[o[0]];
                            });
    }
  });
  ctx.set_output(0, std::move(out));
}

// Splits a shape around `axis` into (outer, dim, inner) extents.
struct AxisSplit {
  std::int64_t outer = 1, dim = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  s.dim = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

template <bool Log>
void softmax_kernel(KernelContext& ctx) {
  const Tensor& x = ctx.input(0);
  if (x.rank() == 0) ctx.fail("input must have rank >= 1");
  AxisSplit s;
  if (ctx.opset() < 13) {
    // legacy semantics: coerce to 2-D at `axis`
    const std::size_t axis = normalize_axis(ctx.attr_int("axis", 1), x.rank());
    for (std::size_t d = 0; d < axis; ++d) s.outer *= x.shape()[d];
    s.dim = static_cast<std::int64_t>(x.numel()) / std::max<std::int64_t>(s.outer, 1);
    s.inner = 1;
  } else {
    s = split_at(x.shape(), normalize_axis(ctx.attr_int("axis", -1), x.rank()));
  }
  Tensor out(x.dtype(), x.shape());
  dispatch_float(x.dtype(), ctx.op(), [&](auto tag) {
    using T = decltype(tag);
    const T* in = x.data<T>();
    T* o = out.mutable_data<T>();
    for (std::int64_t a = 0; a < s.outer; ++a) {
      for (std::int64_t c = 0; c < s.inner; ++c) {
        const std::int64_t base = a * s.dim * s.inner + c;
        T max = -std::numeric_limits<T>::infinity();
        for (std::int64_t j = 0; j < s.dim; ++j) max = std::max(max, in[base + j * s.inner]);
        T sum = 0;
        for (std::int64_t j = 0; j < s.dim; ++j) {
          const T e = std::exp(in[base + j * s.inner] - max);
          if constexpr (!Log) o[base + j * s.inner] = e;
          sum += e;
        }
        if constexpr (Log) {
          const T log_sum = std::log(sum);
          for (std::int64_t j = 0; j < s.dim; ++j) o[base + j * s.inner] = in[base + j * s.inner] - max - log_sum;
        } else {
          for (std::int64_t j = 0; j < s.dim; ++j) o[base + j * s.inner] /= sum;
        }
      }
    }
  });
  ctx.set_output(0, std::move(out));
}

void layer_norm_kernel(KernelContext& ctx) {
  const Tensor& x = ctx.input(0);
  const Tensor& scale = ctx.input(1);
  const Tensor* bias = ctx.optional_input(2);
  const std::size_t axis = normalize_axis(ctx.attr_int("axis", -1), x.rank());
  const float epsilon = ctx.attr_float("epsilon", 1e-5f);
  std::int64_t rows = 1;
  for (std::size_t d = 0; d < axis; ++d) rows *= x.shape()[d];
  const std::int64_t cols = static_cast<std::int64_t>(x.numel()) / std::max<std::int64_t>(rows, 1);
  const Shape norm_shape(x.shape().begin() + static_cast<std::ptrdiff_t>(axis), x.shape().end());
  if (broadcast_shapes(scale.shape(), norm_shape) != norm_shape ||
      (bias && broadcast_shapes(bias->shape(), norm_shape) != norm_shape))
    ctx.fail("scale or bias does not match the normalised shape");
  Shape stat_shape = x.shape();
  for (std::size_t d = axis; d < stat_shape.size(); ++d) stat_shape[d] = 1;
  Tensor out(x.dtype(), x.shape());
  Tensor mean_t(x.dtype(), stat_shape);
  Tensor inv_std_t(x.dtype(), stat_shape);
  dispatch_float(x.dtype(), ctx.op(), [&](auto tag) {
    using T = decltype(tag);
    // expand scale and bias to a full row so broadcasting is handled once
    auto expand_row = [&](const Tensor& t) {
      std::vector<T> row(static_cast<std::size_t>(cols));
      const T* p = t.data<T>();
      const auto strides = broadcast_strides(t.shape(), norm_shape);
      for_each_broadcast<1>(norm_shape, std::array<std::vector<std::int64_t>, 1>{strides},
                            [&](std::int64_t i, const std::array<std::int64_t, 1>& o) { row[i] = p[o[0]]; });
      return row;
    };
    const std::vector<T> gamma = expand_row(scale);
    const std::vector<T> beta = bias ? expand_row(*bias) : std::vector<T>(static_cast<std::size_t>(cols), T(0));
    const T* in = x.data<T>();
    T* o = out.mutable_data<T>();
    T* means = mean_t.mutable_data<T>();
    T* inv_stds = inv_std_t.mutable_data<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* row = in + r * cols;
      double mean = 0.0;
      double sq = 0.0;
      for (std::int64_t j = 0; j < cols; ++j) {
        mean += row[j];
        sq += static_cast<double>(row[j]) * row[j];
      }
      mean /= static_cast<double>(cols);
      const double var = std::max(0.0, sq / static_cast<double>(cols) - mean * mean);
      const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(epsilon));
      for (std::int64_t j = 0; j < cols; ++j)
        o[r * cols + j] = static_cast<T>((row[j] - mean) * inv_std) * gamma[j] + beta[j];
      means[r] = static_cast<T>(mean);
      inv_stds[r] = static_cast<T>(inv_std);
    }
  });
  ctx.set_output(0, std::move(out));
  if (ctx.wants_output(1)) ctx.set_output(1, std::move(mean_t));
  if (ctx.wants_output(2)) ctx.set_output(2, std::move(inv_std_t));
}

enum class Reduce { Sum, Mean, Max, Min, Prod, SumSquare, L2 };

template <Reduce Op>
void reduce_kernel(KernelContext& ctx) {
  const Tensor& x = ctx.input(0);
  const std::size_t rank = x.rank();
  std::vector<std::int64_t> axes;
  // axes moved from attribute to input: ReduceSum at 13, the others at 18
  const std::int64_t input_axes_opset = Op == Reduce::Sum ? 13 : 18;
  if (ctx.opset() >= input_axes_opset) {
    if (const Tensor* t = ctx.optional_input(1)) axes = t->as_int64();
  } else {
    axes = ctx.attr_ints("axes").value_or(std::vector<std::int64_t>{});
  }
  const bool keepdims = ctx.attr_int("keepdims", 1) != 0;
  if (axes.empty() && ctx.attr_int("noop_with_empty_axes", 0) != 0) {
    ctx.set_output(0, x);
    return;
  }
  std::vector<bool> reduced(rank, axes.empty());
  for (auto a : axes) reduced[normalize_axis(a, rank)] = true;
  Shape kept_shape = x.shape();
  Shape out_shape;
  std::int64_t count = 1;
  for (std::size_t d = 0; d < rank; ++d) {
    if (reduced[d]) {
      count *= x.shape()[d];
      kept_shape[d] = 1;
      if (keepdims) out_shape.push_back(1);
    } else {
      out_shape.push_back(x.shape()[d]);
    }
  }
  const auto strides = broadcast_strides(kept_shape, x.shape());
  const std::size_t n_out = static_cast<std::size_t>(shape_numel(kept_shape));
  Tensor out(x.dtype(), out_shape);
  dispatch_numeric(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    using Acc = std::conditional_t<std::is_floating_point_v<T>, double, std::int64_t>;
    Acc init = 0;
    if constexpr (Op == Reduce::Max) init = static_cast<Acc>(std::numeric_limits<T>::lowest());
    if constexpr (Op == Reduce::Min) init = static_cast<Acc>(std::numeric_limits<T>::max());
    if constexpr (Op == Reduce::Prod) init = 1;
    if constexpr (Op == Reduce::Max || Op == Reduce::Min) {
      if (count == 0) ctx.fail("cannot reduce an empty set");
    }
    std::vector<Acc> acc(n_out, init);
    const T* in = x.data<T>();
    for_each_broadcast<1>(x.shape(), std::array<std::vector<std::int64_t>, 1>{strides},
                          [&](std::int64_t i, const std::array<std::int64_t, 1>& o) {
                            const Acc v = static_cast<Acc>(in[i]);
                            Acc& a = acc[static_cast<std::size_t>(o[0])];
                            if constexpr (Op == Reduce::Max) a = std::max(a, v);
                            else if constexpr (Op == Reduce::Min) a = std::min(a, v);
                            else if constexpr (Op == Reduce::Prod) a *= v;
                            else if constexpr (Op == Reduce::SumSquare || Op == Reduce::L2) a += v * v;
                            else a += v;
                          });
    T* po = out.mutable_data<T>();
    for (std::size_t i = 0; i < n_out; ++i) {
      if constexpr (Op == Reduce::Mean) po[i] = static_cast<T>(acc[i] / static_cast<Acc>(count));
      else if constexpr (Op == Reduce::L2) po[i] = static_cast<T>(std::sqrt(static_cast<double>(acc[i])));
      else po[i] = static_cast<T>(acc[i]);
    }
  });
  ctx.set_output(0, std::move(out));
}

void cumsum_kernel(KernelContext& ctx) {
  const Tensor& x = ctx.input(0);
  const std::size_t axis = normalize_axis(scalar_int(ctx.input(1)), x.rank());
  const bool exclusive = ctx.attr_int("exclusive", 0) != 0;
  const bool reverse = ctx.attr_int("reverse", 0) != 0;
  const AxisSplit s = split_at(x.shape(), axis);
  Tensor out(x.dtype(), x.shape());
  dispatch_numeric(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* in = x.data<T>();
    T* o = out.mutable_data<T>();
    for (std::int64_t a = 0; a < s.outer; ++a) {
      for (std::int64_t c = 0; c < s.inner; ++c) {
        T run = 0;
        for (std::int64_t step = 0; step < s.dim; ++step) {
          const std::int64_t j = reverse ? s.dim - 1 - step : step;
          const std::int64_t idx = (a * s.dim + j) * s.inner + c;
          if (exclusive) {
            o[idx] = run;
            run = static_cast<T>(run + in[idx]);
          } else {
            run = static_cast<T>(run + in[idx]);
            o[idx] = run;
          }
        }
      }
    }
  });
  ctx.set_output(0, std::move(out));
}

}  // namespace

void register_math(KernelRegistry& r) {
  r[{"", "MatMul"}] = matmul_kernel;
  r[{"", "Gemm"}] = gemm_kernel;
  r[{"", "Softmax"}] = softmax_kernel<false>;
  r[{"", "LogSoftmax"}] = softmax_kernel<true>;
  r[{"", "LayerNormalization"}] = layer_norm_kernel;
  r[{"", "ReduceSum"}] = reduce_kernel<Reduce::Sum>;
  r[{"", "ReduceMean"}] = reduce_kernel<Reduce::Mean>;
  r[{"", "ReduceMax"}] = reduce_kernel<Reduce::Max>;
  r[{"", "ReduceMin"}] = reduce_kernel<Reduce::Min>;
  r[{"", "ReduceProd"}] = reduce_kernel<Reduce::Prod>;
  r[{"", "ReduceSumSquare"}] = reduce_kernel<Reduce::SumSquare>;
  r[{"", "ReduceL2"}] = reduce_kernel<Reduce::L2>;
  r[{"", "CumSum"}] = cumsum_kernel;
}

}  // namespace chattox::onnx::detail
