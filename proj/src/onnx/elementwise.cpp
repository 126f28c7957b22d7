// Broadcasting arithmetic, comparison, logic and unary math operators.

#include <cmath>
#include <limits>
#include <type_traits>

#include "kernel.hpp"

namespace chattox::onnx::detail {

namespace {

template <class In, class Out, class Op>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, DType out_dtype, Op op) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  Tensor out(out_dtype, out_shape);
  const In* pa = a.data<In>();
  const In* pb = b.data<In>();
  Out* po = out.mutable_data<Out>();
  const std::size_t n = out.numel();
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < n; ++i) po[i] = op(pa[i], pb[i]);
  } else if (b.numel() == 1 && a.numel() == n) {
    const In v = pb[0];
    for (std::size_t i = 0; i < n; ++i) po[i] = op(pa[i], v);
  } else if (a.numel() == 1 && b.numel() == n) {
    const In v = pa[0];
    for (std::size_t i = 0; i < n; ++i) po[i] = op(v, pb[i]);
  } else {
    const std::array<std::vector<std::int64_t>, 2> strides{broadcast_strides(a.shape(), out_shape),
                                                           broadcast_strides(b.shape(), out_shape)};
    for_each_broadcast<2>(out_shape, strides, [&](std::int64_t i, const std::array<std::int64_t, 2>& o) {
      po[i] = op(pa[o[0]], pb[o[1]]);
    });
  }
  return out;
}

void require_same_type(const KernelContext& ctx, const Tensor& a, const Tensor& b) {
  if (a.dtype() != b.dtype())
    ctx.fail("operand types differ (" + std::string(dtype_name(a.dtype())) + " vs " +
             std::string(dtype_name(b.dtype())) + ")");
}

enum class Arith { Add, Sub, Mul, Div, Pow, Max, Min };

template <class T>
T apply_arith(Arith op, T x, T y) {
  switch (op) {
    case Arith::Add:
      return static_cast<T>(x + y);
    case Arith::Sub:
      return static_cast<T>(x - y);
    case Arith::Mul:
      return static_cast<T>(x * y);
    case Arith::Div:
      if constexpr (std::is_integral_v<T>) {
        if (y == 0) throw Error("Div: integer division by zero");
      }
      return static_cast<T>(x / y);
    case Arith::Pow:
      if constexpr (std::is_same_v<T, float>) return std::pow(x, y);
      else return static_cast<T>(std::pow(static_cast<double>(x), static_cast<double>(y)));
    case Arith::Max:
      return std::max(x, y);
    case Arith::Min:
      return std::min(x, y);
  }
  return x;
}

template <Arith Op>
Tensor arith(const Tensor& a, const Tensor& b) {
  return dispatch_numeric(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    if constexpr (Op == Arith::Add) return broadcast_binary<T, T>(a, b, a.dtype(), std::plus<>());
    else if constexpr (Op == Arith::Sub) return broadcast_binary<T, T>(a, b, a.dtype(), std::minus<>());
    else if constexpr (Op == Arith::Mul) return broadcast_binary<T, T>(a, b, a.dtype(), std::multiplies<>());
    else return broadcast_binary<T, T>(a, b, a.dtype(), [](T x, T y) { return apply_arith(Op, x, y); });
  });
}

template <Arith Op>
void arith_kernel(KernelContext& ctx) {
  const Tensor& a = ctx.input(0);
  if constexpr (Op == Arith::Pow) {
    // exponent may have a different numeric type; output follows the base
    const Tensor b = cast_tensor(ctx.input(1), a.dtype());
    ctx.set_output(0, arith<Op>(a, b));
  } else {
    const Tensor& b = ctx.input(1);
    require_same_type(ctx, a, b);
    ctx.set_output(0, arith<Op>(a, b));
  }
}

// Max, Min, Sum, Mean over any number of inputs.
template <Arith Op>
void variadic_kernel(KernelContext& ctx) {
  Tensor acc = ctx.input(0);
  for (std::size_t i = 1; i < ctx.input_count(); ++i) {
    require_same_type(ctx, acc, ctx.input(i));
    acc = arith<Op>(acc, ctx.input(i));
  }
  if (ctx.input_count() == 1) acc = cast_tensor(acc, acc.dtype());
  ctx.set_output(0, std::move(acc));
}

void mean_kernel(KernelContext& ctx) {
  Tensor acc = ctx.input(0);
  for (std::size_t i = 1; i < ctx.input_count(); ++i) acc = arith<Arith::Add>(acc, ctx.input(i));
  const Tensor divisor = cast_tensor(Tensor::scalar<double>(static_cast<double>(ctx.input_count())), acc.dtype());
  ctx.set_output(0, arith<Arith::Div>(acc, divisor));
}

enum class Compare { Equal, Less, Greater, LessOrEqual, GreaterOrEqual };

template <Compare Op>
void compare_kernel(KernelContext& ctx) {
  const Tensor& a = ctx.input(0);
  const Tensor& b = ctx.input(1);
  require_same_type(ctx, a, b);
  ctx.set_output(0, dispatch_numeric(a.dtype(), [&](auto tag) {
                   using T = decltype(tag);
                   return broadcast_binary<T, std::uint8_t>(a, b, DType::Bool, [](T x, T y) -> std::uint8_t {
                     if constexpr (Op == Compare::Equal) return x == y;
                     else if constexpr (Op == Compare::Less) return x < y;
                     else if constexpr (Op == Compare::Greater) return x > y;
                     else if constexpr (Op == Compare::LessOrEqual) return x <= y;
                     else return x >= y;
                   });
                 }));
}

enum class Logic { And, Or, Xor };

template <Logic Op>
void logic_kernel(KernelContext& ctx) {
  const Tensor& a = ctx.input(0);
  const Tensor& b = ctx.input(1);
  if (a.dtype() != DType::Bool || b.dtype() != DType::Bool) ctx.fail("expects bool inputs");
  ctx.set_output(0, broadcast_binary<std::uint8_t, std::uint8_t>(a, b, DType::Bool, [](std::uint8_t x, std::uint8_t y) -> std::uint8_t {
                   if constexpr (Op == Logic::And) return x && y;
                   else if constexpr (Op == Logic::Or) return x || y;
                   else return (x != 0) != (y != 0);
                 }));
}

void not_kernel(KernelContext& ctx) {
  const Tensor& x = ctx.input(0);
  if (x.dtype() != DType::Bool) ctx.fail("expects a bool input");
  Tensor out(DType::Bool, x.shape());
  const auto* in = x.data<std::uint8_t>();
  auto* o = out.mutable_data<std::uint8_t>();
  for (std::size_t i = 0; i < x.numel(); ++i) o[i] = in[i] ? 0 : 1;
  ctx.set_output(0, std::move(out));
}

void where_kernel(KernelContext& ctx) {
  const Tensor& cond = ctx.input(0);
  const Tensor& x = ctx.input(1);
  const Tensor& y = ctx.input(2);
  if (cond.dtype() != DType::Bool) ctx.fail("condition must be bool");
  require_same_type(ctx, x, y);
  const Shape out_shape = broadcast_shapes(broadcast_shapes(cond.shape(), x.shape()), y.shape());
  Tensor out(x.dtype(), out_shape);
  const std::array<std::vector<std::int64_t>, 3> strides{broadcast_strides(cond.shape(), out_shape),
                                                         broadcast_strides(x.shape(), out_shape),
                                                         broadcast_strides(y.shape(), out_shape)};
  const auto* pc = cond.data<std::uint8_t>();
  dispatch_numeric(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.data<T>();
    const T* py = y.data<T>();
    T* po = out.mutable_data<T>();
    for_each_broadcast<3>(out_shape, strides, [&](std::int64_t i, const std::array<std::int64_t, 3>& o) {
      po[i] = pc[o[0]] ? px[o[1]] : py[o[2]];
    });
  });
  ctx.set_output(0, std::move(out));
}

// Unary floating-point functions, evaluated in the tensor's own precision.
template <class F>
void unary_float_kernel(KernelContext& ctx) {
  const Tensor& x = ctx.input(0);
  dispatch_float(x.dtype(), ctx.op(), [&](auto tag) {
    using T = decltype(tag);
    Tensor out(x.dtype(), x.shape());
    const T* in = x.data<T>();
    T* o = out.mutable_data<T>();
    for (std::size_t i = 0; i < x.numel(); ++i) o[i] = F::apply(in[i]);
    ctx.set_output(0, std::move(out));
  });
}

// Unary functions that are also defined on signed integers.
template <class F>
void unary_signed_kernel(KernelContext& ctx) {
  const Tensor& x = ctx.input(0);
  dispatch_numeric(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    Tensor out(x.dtype(), x.shape());
    const T* in = x.data<T>();
    T* o = out.mutable_data<T>();
    for (std::size_t i = 0; i < x.numel(); ++i) o[i] = F::apply(in[i]);
    ctx.set_output(0, std::move(out));
  });
}

struct Sqrt { template <class T> static T apply(T x) { return std::sqrt(x); } };
struct Erf { template <class T> static T apply(T x) { return std::erf(x); } };
struct Tanh { template <class T> static T apply(T x) { return std::tanh(x); } };
struct Exp { template <class T> static T apply(T x) { return std::exp(x); } };
struct Log { template <class T> static T apply(T x) { return std::log(x); } };
struct Sigmoid { template <class T> static T apply(T x) { return T(1) / (T(1) + std::exp(-x)); } };
struct Reciprocal { template <class T> static T apply(T x) { return T(1) / x; } };
struct Floor { template <class T> static T apply(T x) { return std::floor(x); } };
struct Ceil { template <class T> static T apply(T x) { return std::ceil(x); } };
struct Round { template <class T> static T apply(T x) { return std::nearbyint(x); } };
struct Sin { template <class T> static T apply(T x) { return std::sin(x); } };
struct Cos { template <class T> static T apply(T x) { return std::cos(x); } };
struct Neg { template <class T> static T apply(T x) { return static_cast<T>(-x); } };
struct Abs {
  template <class T>
  static T apply(T x) {
    if constexpr (std::is_unsigned_v<T>) return x;
    else return static_cast<T>(x < T(0) ? -x : x);
  }
};
struct Relu { template <class T> static T apply(T x) { return x > T(0) ? x : T(0); } };

void isnan_kernel(KernelContext& ctx) {
  const Tensor& x = ctx.input(0);
  Tensor out(DType::Bool, x.shape());
  auto* o = out.mutable_data<std::uint8_t>();
  dispatch_float(x.dtype(), ctx.op(), [&](auto tag) {
    using T = decltype(tag);
    const T* in = x.data<T>();
    for (std::size_t i = 0; i < x.numel(); ++i) o[i] = std::isnan(in[i]) ? 1 : 0;
  });
  ctx.set_output(0, std::move(out));
}

void isinf_kernel(KernelContext& ctx) {
  const Tensor& x = ctx.input(0);
  const bool neg = ctx.attr_int("detect_negative", 1) != 0;
  const bool pos = ctx.attr_int("detect_positive", 1) != 0;
  Tensor out(DType::Bool, x.shape());
  auto* o = out.mutable_data<std::uint8_t>();
  dispatch_float(x.dtype(), ctx.op(), [&](auto tag) {
    using T = decltype(tag);
    const T* in = x.data<T>();
    for (std::size_t i = 0; i < x.numel(); ++i)
      o[i] = std::isinf(in[i]) && ((in[i] > 0 && pos) || (in[i] < 0 && neg)) ? 1 : 0;
  });
  ctx.set_output(0, std::move(out));
}

std::optional<DType> onnx_type_to_dtype(std::int64_t code) {
  switch (code) {
    case 1:
      return DType::Float32;
    case 2:
      return DType::UInt8;
    case 3:
      return DType::Int8;
    case 6:
      return DType::Int32;
    case 7:
      return DType::Int64;
    case 9:
      return DType::Bool;
    case 11:
      return DType::Float64;
    default:
      return std::nullopt;
  }
}

void cast_kernel(KernelContext& ctx) {
  const auto to = onnx_type_to_dtype(ctx.attr_int("to", 0));
  if (!to) ctx.fail("unsupported target type " + std::to_string(ctx.attr_int("to", 0)));
  ctx.set_output(0, cast_tensor(ctx.input(0), *to));
}

void cast_like_kernel(KernelContext& ctx) {
  ctx.set_output(0, cast_tensor(ctx.input(0), ctx.input(1).dtype()));
}

void clip_kernel(KernelContext& ctx) {
  const Tensor& x = ctx.input(0);
  dispatch_numeric(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T lo = std::numeric_limits<T>::lowest();
    T hi = std::numeric_limits<T>::max();
    if (ctx.opset() < 11) {
      if (ctx.has_attr("min")) lo = static_cast<T>(ctx.attr_float("min", 0));
      if (ctx.has_attr("max")) hi = static_cast<T>(ctx.attr_float("max", 0));
    } else {
      if (const Tensor* t = ctx.optional_input(1)) lo = t->data<T>()[0];
      if (const Tensor* t = ctx.optional_input(2)) hi = t->data<T>()[0];
    }
    Tensor out(x.dtype(), x.shape());
    const T* in = x.data<T>();
    T* o = out.mutable_data<T>();
    for (std::size_t i = 0; i < x.numel(); ++i) o[i] = std::min(std::max(in[i], lo), hi);
    ctx.set_output(0, std::move(out));
  });
}

}  // namespace

void register_elementwise(KernelRegistry& r) {
  r[{"", "Add"}] = arith_kernel<Arith::Add>;
  r[{"", "Sub"}] = arith_kernel<Arith::Sub>;
  r[{"", "Mul"}] = arith_kernel<Arith::Mul>;
  r[{"", "Div"}] = arith_kernel<Arith::Div>;
  r[{"", "Pow"}] = arith_kernel<Arith::Pow>;
  r[{"", "Max"}] = variadic_kernel<Arith::Max>;
  r[{"", "Min"}] = variadic_kernel<Arith::Min>;
  r[{"", "Sum"}] = variadic_kernel<Arith::Add>;
  r[{"", "Mean"}] = mean_kernel;
  r[{"", "Equal"}] = compare_kernel<Compare::Equal>;
  r[{"", "Less"}] = compare_kernel<Compare::Less>;
  r[{"", "Greater"}] = compare_kernel<Compare::Greater>;
  r[{"", "LessOrEqual"}] = compare_kernel<Compare::LessOrEqual>;
  r[{"", "GreaterOrEqual"}] = compare_kernel<Compare::GreaterOrEqual>;
  r[{"", "And"}] = logic_kernel<Logic::And>;
  r[{"", "Or"}] = logic_kernel<Logic::Or>;
  r[{"", "Xor"}] = logic_kernel<Logic::Xor>;
  r[{"", "Not"}] = not_kernel;
  r[{"", "Where"}] = where_kernel;
  r[{"", "Sqrt"}] = unary_float_kernel<Sqrt>;
  r[{"", "Erf"}] = unary_float_kernel<Erf>;
  r[{"", "Tanh"}] = unary_float_kernel<Tanh>;
  r[{"", "Exp"}] = unary_float_kernel<Exp>;
  r[{"", "Log"}] = unary_float_kernel<Log>;
  r[{"", "Sigmoid"}] = unary_float_kernel<Sigmoid>;
  r[{"", "Reciprocal"}] = unary_float_kernel<Reciprocal>;
  r[{"", "Floor"}] = unary_float_kernel<Floor>;
  r[{"", "Ceil"}] = unary_float_kernel<Ceil>;
  r[{"", "Round"}] = unary_float_kernel<Round>;
  r[{"", "Sin"}] = unary_float_kernel<Sin>;
  r[{"", "Cos"}] = unary_float_kernel<Cos>;
  r[{"", "Neg"}] = unary_signed_kernel<Neg>;
  r[{"", "Abs"}] = unary_signed_kernel<Abs>;
  r[{"", "Relu"}] = unary_signed_kernel<Relu>;
  r[{"", "IsNaN"}] = isnan_kernel;
  r[{"", "IsInf"}] = isinf_kernel;
  r[{"", "Cast"}] = cast_kernel;
  r[{"", "CastLike"}] = cast_like_kernel;
  r[{"", "Clip"}] = clip_kernel;
}

}  // namespace chattox::onnx::detail
