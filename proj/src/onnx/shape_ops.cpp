// Operators that move data without arithmetic: reshaping, indexing, copying.

#include <cmath>
#include <cstring>
#include <limits>

#include "kernel.hpp"

namespace chattox::onnx::detail {

namespace {

// Calls fn with an unsigned integer type of the tensor's element width, so
// data can be copied element-wise regardless of dtype.
template <class Fn>
void dispatch_width(DType dtype, Fn&& fn) {
  switch (dtype_size(dtype)) {
    case 1:
      fn(std::uint8_t{});
      break;
    case 4:
      fn(std::uint32_t{});
      break;
    default:
      fn(std::uint64_t{});
  }
}

template <class W>
const W* raw_as(const Tensor& t) {
  return static_cast<const W*>(t.raw());
}

template <class W>
W* raw_as(Tensor& t) {
  return static_cast<W*>(t.mutable_raw());
}

// Strided gather into a fresh tensor: out[i] = in[base + sum(c_d * strides[d])].
Tensor strided_copy(const Tensor& in, const Shape& out_shape, const std::vector<std::int64_t>& strides,
                    std::int64_t base) {
  Tensor out(in.dtype(), out_shape);
  dispatch_width(in.dtype(), [&](auto tag) {
    using W = decltype(tag);
    const W* src = raw_as<W>(in) + base;
    W* dst = raw_as<W>(out);
    for_each_broadcast<1>(out_shape, std::array<std::vector<std::int64_t>, 1>{strides},
                          [&](std::int64_t i, const std::array<std::int64_t, 1>& o) { dst[i] = src[o[0]]; });
  });
  return out;
}

std::vector<std::int64_t> int_list(const Tensor& t) { return t.as_int64(); }

void identity_kernel(KernelContext& ctx) {
  ctx.set_output(0, ctx.input(0));
  if (ctx.op() == "Dropout" && ctx.wants_output(1)) {
    Tensor mask(DType::Bool, ctx.input(0).shape());
    std::memset(mask.mutable_raw(), 1, mask.numel());
    ctx.set_output(1, std::move(mask));
  }
}

void reshape_kernel(KernelContext& ctx) {
  const Tensor& data = ctx.input(0);
  const auto spec = int_list(ctx.input(1));
  const bool allowzero = ctx.attr_int("allowzero", 0) != 0;
  Shape shape(spec.size());
  std::int64_t known = 1;
  std::optional<std::size_t> infer;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (spec[i] == -1) {
      if (infer) ctx.fail("more than one -1 in the target shape");
      infer = i;
      continue;
    }
    if (spec[i] == 0 && !allowzero) {
      if (i >= data.rank()) ctx.fail("0 in the target shape refers past the input rank");
      shape[i] = data.shape()[i];
    } else if (spec[i] < 0) {
      ctx.fail("invalid target dimension " + std::to_string(spec[i]));
    } else {
      shape[i] = spec[i];
    }
    known *= shape[i];
  }
  const auto total = static_cast<std::int64_t>(data.numel());
  if (infer) {
    if (known == 0 || total % known != 0) ctx.fail("cannot infer the -1 dimension");
    shape[*infer] = total / known;
  }
  if (shape_numel(shape) != total) ctx.fail("target shape does not match the element count");
  ctx.set_output(0, data.reshaped(std::move(shape)));
}

void flatten_kernel(KernelContext& ctx) {
  const Tensor& data = ctx.input(0);
  const auto rank = static_cast<std::int64_t>(data.rank());
  std::int64_t axis = ctx.attr_int("axis", 1);
  if (axis < 0) axis += rank;
  if (axis < 0 || axis > rank) ctx.fail("axis out of range");
  std::int64_t outer = 1;
  for (std::int64_t i = 0; i < axis; ++i) outer *= data.shape()[i];
  std::int64_t inner = 1;
  for (std::int64_t i = axis; i < rank; ++i) inner *= data.shape()[i];
  ctx.set_output(0, data.reshaped({outer, inner}));
}

void transpose_kernel(KernelContext& ctx) {
  const Tensor& data = ctx.input(0);
  const std::size_t rank = data.rank();
  std::vector<std::int64_t> perm;
  if (auto p = ctx.attr_ints("perm")) {
    perm = *p;
  } else {
    for (std::size_t i = rank; i-- > 0;) perm.push_back(static_cast<std::int64_t>(i));
  }
  if (perm.size() != rank) ctx.fail("perm length does not match the input rank");
  std::vector<bool> seen(rank, false);
  const auto in_strides = contiguous_strides(data.shape());
  Shape out_shape(rank);
  std::vector<std::int64_t> strides(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    const std::size_t src = normalize_axis(perm[d], rank);
    if (seen[src]) ctx.fail("perm is not a permutation");
    seen[src] = true;
    out_shape[d] = data.shape()[src];
    strides[d] = in_strides[src];
  }
  ctx.set_output(0, strided_copy(data, out_shape, strides, 0));
}

std::vector<std::int64_t> axes_from(KernelContext& ctx, std::size_t input_index) {
  if (ctx.opset() >= 13) {
    if (const Tensor* t = ctx.optional_input(input_index)) return int_list(*t);
    return {};
  }
  return ctx.attr_ints("axes").value_or(std::vector<std::int64_t>{});
}

void squeeze_kernel(KernelContext& ctx) {
  const Tensor& data = ctx.input(0);
  const auto axes = axes_from(ctx, 1);
  std::vector<bool> drop(data.rank(), false);
  if (axes.empty()) {
    for (std::size_t i = 0; i < data.rank(); ++i) drop[i] = data.shape()[i] == 1;
  } else {
    for (auto a : axes) {
      const std::size_t ax = normalize_axis(a, data.rank());
      if (data.shape()[ax] != 1) ctx.fail("cannot squeeze a dimension that is not 1");
      drop[ax] = true;
    }
  }
  Shape shape;
  for (std::size_t i = 0; i < data.rank(); ++i)
    if (!drop[i]) shape.push_back(data.shape()[i]);
  ctx.set_output(0, data.reshaped(std::move(shape)));
}

void unsqueeze_kernel(KernelContext& ctx) {
  const Tensor& data = ctx.input(0);
  const auto axes = axes_from(ctx, 1);
  if (axes.empty()) ctx.fail("axes are required");
  const std::size_t rank = data.rank() + axes.size();
  std::vector<bool> inserted(rank, false);
  for (auto a : axes) {
    const std::size_t ax = normalize_axis(a, rank);
    if (inserted[ax]) ctx.fail("repeated axis");
    inserted[ax] = true;
  }
  Shape shape;
  std::size_t src = 0;
  for (std::size_t i = 0; i < rank; ++i) shape.push_back(inserted[i] ? 1 : data.shape()[src++]);
  ctx.set_output(0, data.reshaped(std::move(shape)));
}

void concat_kernel(KernelContext& ctx) {
  const Tensor& first = ctx.input(0);
  const std::size_t rank = first.rank();
  if (rank == 0) ctx.fail("cannot concatenate scalars");
  const std::size_t axis = normalize_axis(ctx.attr_int("axis", 0), rank);
  Shape out_shape = first.shape();
  out_shape[axis] = 0;
  for (std::size_t i = 0; i < ctx.input_count(); ++i) {
    const Tensor& t = ctx.input(i);
    if (t.dtype() != first.dtype() || t.rank() != rank) ctx.fail("inputs differ in type or rank");
    for (std::size_t d = 0; d < rank; ++d)
      if (d != axis && t.shape()[d] != first.shape()[d]) ctx.fail("inputs differ in a non-axis dimension");
    out_shape[axis] += t.shape()[axis];
  }
  Tensor out(first.dtype(), out_shape);
  std::int64_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
  std::int64_t inner = 1;
  for (std::size_t d = axis + 1; d < rank; ++d) inner *= out_shape[d];
  const std::size_t width = dtype_size(first.dtype());
  auto* dst = static_cast<std::byte*>(out.mutable_raw());
  const std::size_t out_row = static_cast<std::size_t>(out_shape[axis] * inner) * width;
  std::size_t col = 0;
  for (std::size_t i = 0; i < ctx.input_count(); ++i) {
    const Tensor& t = ctx.input(i);
    const std::size_t block = static_cast<std::size_t>(t.shape()[axis] * inner) * width;
    const auto* src = static_cast<const std::byte*>(t.raw());
    for (std::int64_t o = 0; o < outer; ++o)
      if (block) std::memcpy(dst + o * out_row + col, src + o * block, block);
    col += block;
  }
  ctx.set_output(0, std::move(out));
}

void split_kernel(KernelContext& ctx) {
  const Tensor& data = ctx.input(0);
  const std::size_t axis = normalize_axis(ctx.attr_int("axis", 0), data.rank());
  const std::int64_t dim = data.shape()[axis];
  const std::size_t n_out = ctx.output_count();
  std::vector<std::int64_t> sizes;
  if (ctx.opset() >= 13) {
    if (const Tensor* s = ctx.optional_input(1)) sizes = int_list(*s);
  } else if (auto s = ctx.attr_ints("split")) {
    sizes = *s;
  }
  if (sizes.empty()) {
    const std::int64_t parts = ctx.has_attr("num_outputs") ? ctx.attr_int("num_outputs", 1)
                                                           : static_cast<std::int64_t>(n_out);
    if (parts <= 0) ctx.fail("invalid number of outputs");
    const std::int64_t chunk = (dim + parts - 1) / parts;
    for (std::int64_t p = 0; p < parts; ++p) sizes.push_back(std::max<std::int64_t>(0, std::min(chunk, dim - p * chunk)));
    if (!ctx.has_attr("num_outputs") && dim % parts != 0) ctx.fail("dimension is not evenly divisible");
  }
  std::int64_t total = 0;
  for (auto s : sizes) {
    if (s < 0) ctx.fail("negative split size");
    total += s;
  }
  if (total != dim || sizes.size() != n_out) ctx.fail("split sizes do not match the input");
  const auto strides = contiguous_strides(data.shape());
  std::int64_t start = 0;
  for (std::size_t i = 0; i < n_out; ++i) {
    Shape shape = data.shape();
    shape[axis] = sizes[i];
    if (ctx.wants_output(i)) ctx.set_output(i, strided_copy(data, shape, strides, start * strides[axis]));
    start += sizes[i];
  }
}

void slice_kernel(KernelContext& ctx) {
  const Tensor& data = ctx.input(0);
  const std::size_t rank = data.rank();
  std::vector<std::int64_t> starts, ends, axes, steps;
  if (ctx.opset() >= 10) {
    starts = int_list(ctx.input(1));
    ends = int_list(ctx.input(2));
    if (const Tensor* t = ctx.optional_input(3)) axes = int_list(*t);
    if (const Tensor* t = ctx.optional_input(4)) steps = int_list(*t);
  } else {
    starts = ctx.attr_ints("starts").value_or(std::vector<std::int64_t>{});
    ends = ctx.attr_ints("ends").value_or(std::vector<std::int64_t>{});
    axes = ctx.attr_ints("axes").value_or(std::vector<std::int64_t>{});
  }
  if (starts.size() != ends.size()) ctx.fail("starts and ends differ in length");
  if (axes.empty())
    for (std::size_t i = 0; i < starts.size(); ++i) axes.push_back(static_cast<std::int64_t>(i));
  if (steps.empty()) steps.assign(starts.size(), 1);
  if (axes.size() != starts.size() || steps.size() != starts.size()) ctx.fail("slice inputs differ in length");

  Shape out_shape = data.shape();
  std::vector<std::int64_t> begin(rank, 0), step(rank, 1);
  std::vector<bool> seen(rank, false);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const std::size_t ax = normalize_axis(axes[i], rank);
    if (seen[ax]) ctx.fail("repeated axis");
    seen[ax] = true;
    const std::int64_t dim = data.shape()[ax];
    const std::int64_t st = steps[i];
    if (st == 0) ctx.fail("step cannot be 0");
    std::int64_t s = starts[i];
    std::int64_t e = ends[i];
    if (s < 0) s += dim;
    if (e < 0) e += dim;
    std::int64_t count = 0;
    if (st > 0) {
      s = std::clamp<std::int64_t>(s, 0, dim);
      e = std::clamp<std::int64_t>(e, 0, dim);
      if (e > s) count = (e - s + st - 1) / st;
    } else {
      s = std::clamp<std::int64_t>(s, -1, dim - 1);
      e = std::clamp<std::int64_t>(e, -1, dim - 1);
      if (s > e) count = (s - e + (-st) - 1) / (-st);
    }
    begin[ax] = s;
    step[ax] = st;
    out_shape[ax] = count;
  }
  const auto in_strides = contiguous_strides(data.shape());
  std::vector<std::int64_t> strides(rank);
  std::int64_t base = 0;
  for (std::size_t d = 0; d < rank; ++d) {
    strides[d] = in_strides[d] * step[d];
    if (out_shape[d] > 0) base += begin[d] * in_strides[d];
  }
  ctx.set_output(0, strided_copy(data, out_shape, strides, base));
}

void gather_kernel(KernelContext& ctx) {
  const Tensor& data = ctx.input(0);
  const Tensor& indices = ctx.input(1);
  if (data.rank() == 0) ctx.fail("data must have rank >= 1");
  const std::size_t axis = normalize_axis(ctx.attr_int("axis", 0), data.rank());
  const auto idx = indices.as_int64();
  const std::int64_t dim = data.shape()[axis];
  Shape out_shape(data.shape().begin(), data.shape().begin() + static_cast<std::ptrdiff_t>(axis));
  out_shape.insert(out_shape.end(), indices.shape().begin(), indices.shape().end());
  out_shape.insert(out_shape.end(), data.shape().begin() + static_cast<std::ptrdiff_t>(axis) + 1, data.shape().end());
  std::int64_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= data.shape()[d];
  std::int64_t inner = 1;
  for (std::size_t d = axis + 1; d < data.rank(); ++d) inner *= data.shape()[d];
  Tensor out(data.dtype(), out_shape);
  const std::size_t width = dtype_size(data.dtype());
  const std::size_t block = static_cast<std::size_t>(inner) * width;
  const auto* src = static_cast<const std::byte*>(data.raw());
  auto* dst = static_cast<std::byte*>(out.mutable_raw());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      std::int64_t j = idx[k];
      if (j < 0) j += dim;
      if (j < 0 || j >= dim) ctx.fail("index " + std::to_string(idx[k]) + " out of range");
      if (block)
        std::memcpy(dst + (o * static_cast<std::int64_t>(idx.size()) + static_cast<std::int64_t>(k)) * static_cast<std::int64_t>(block),
                    src + (o * dim + j) * static_cast<std::int64_t>(block), block);
    }
  }
  ctx.set_output(0, std::move(out));
}

void gather_elements_kernel(KernelContext& ctx) {
  const Tensor& data = ctx.input(0);
  const Tensor& indices = ctx.input(1);
  const std::size_t rank = data.rank();
  if (indices.rank() != rank) ctx.fail("indices must have the same rank as data");
  const std::size_t axis = normalize_axis(ctx.attr_int("axis", 0), rank);
  const auto idx = indices.as_int64();
  const auto data_strides = contiguous_strides(data.shape());
  const auto out_strides = contiguous_strides(indices.shape());
  const std::int64_t dim = data.shape()[axis];
  for (std::size_t d = 0; d < rank; ++d)
    if (d != axis && indices.shape()[d] > data.shape()[d]) ctx.fail("indices exceed the data shape");
  Tensor out(data.dtype(), indices.shape());
  dispatch_width(data.dtype(), [&](auto tag) {
    using W = decltype(tag);
    const W* src = raw_as<W>(data);
    W* dst = raw_as<W>(out);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::int64_t rem = static_cast<std::int64_t>(i);
      std::int64_t offset = 0;
      for (std::size_t d = 0; d < rank; ++d) {
        std::int64_t c = rem / out_strides[d];
        rem %= out_strides[d];
        if (d == axis) {
          c = idx[i] < 0 ? idx[i] + dim : idx[i];
          if (c < 0 || c >= dim) ctx.fail("index " + std::to_string(idx[i]) + " out of range");
        }
        offset += c * data_strides[d];
      }
      dst[i] = src[offset];
    }
  });
  ctx.set_output(0, std::move(out));
}

void expand_kernel(KernelContext& ctx) {
  const Tensor& data = ctx.input(0);
  const Shape target = int_list(ctx.input(1));
  const Shape out_shape = broadcast_shapes(data.shape(), target);
  ctx.set_output(0, strided_copy(data, out_shape, broadcast_strides(data.shape(), out_shape), 0));
}

void tile_kernel(KernelContext& ctx) {
  const Tensor& data = ctx.input(0);
  const auto repeats = int_list(ctx.input(1));
  const std::size_t rank = data.rank();
  if (repeats.size() != rank) ctx.fail("repeats length does not match the input rank");
  Shape out_shape(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    if (repeats[d] < 0) ctx.fail("negative repeat");
    out_shape[d] = data.shape()[d] * repeats[d];
  }
  const auto in_strides = contiguous_strides(data.shape());
  const auto out_strides = contiguous_strides(out_shape);
  Tensor out(data.dtype(), out_shape);
  dispatch_width(data.dtype(), [&](auto tag) {
    using W = decltype(tag);
    const W* src = raw_as<W>(data);
    W* dst = raw_as<W>(out);
    for (std::size_t i = 0; i < out.numel(); ++i) {
      std::int64_t rem = static_cast<std::int64_t>(i);
      std::int64_t offset = 0;
      for (std::size_t d = 0; d < rank; ++d) {
        const std::int64_t c = rem / out_strides[d];
        rem %= out_strides[d];
        offset += (c % data.shape()[d]) * in_strides[d];
      }
      dst[i] = src[offset];
    }
  });
  ctx.set_output(0, std::move(out));
}

void shape_kernel(KernelContext& ctx) {
  const Shape& shape = ctx.input(0).shape();
  const auto rank = static_cast<std::int64_t>(shape.size());
  std::int64_t start = ctx.attr_int("start", 0);
  std::int64_t end = ctx.attr_int("end", rank);
  if (start < 0) start += rank;
  if (end < 0) end += rank;
  start = std::clamp<std::int64_t>(start, 0, rank);
  end = std::clamp<std::int64_t>(end, 0, rank);
  std::vector<std::int64_t> dims;
  for (std::int64_t i = start; i < end; ++i) dims.push_back(shape[i]);
  const auto n = static_cast<std::int64_t>(dims.size());
  ctx.set_output(0, Tensor::from<std::int64_t>({n}, dims));
}

void size_kernel(KernelContext& ctx) {
  ctx.set_output(0, Tensor::scalar<std::int64_t>(static_cast<std::int64_t>(ctx.input(0).numel())));
}

void constant_kernel(KernelContext& ctx) {
  if (const Tensor* t = ctx.attr_tensor("value")) {
    ctx.set_output(0, *t);
  } else if (ctx.has_attr("value_float")) {
    ctx.set_output(0, Tensor::scalar<float>(ctx.attr_float("value_float", 0)));
  } else if (ctx.has_attr("value_int")) {
    ctx.set_output(0, Tensor::scalar<std::int64_t>(ctx.attr_int("value_int", 0)));
  } else if (auto ints = ctx.attr_ints("value_ints")) {
    ctx.set_output(0, Tensor::from<std::int64_t>({static_cast<std::int64_t>(ints->size())}, *ints));
  } else {
    ctx.fail("unsupported constant attribute");
  }
}

void constant_of_shape_kernel(KernelContext& ctx) {
  const Shape shape = int_list(ctx.input(0));
  const Tensor* value = ctx.attr_tensor("value");
  if (!value) {
    ctx.set_output(0, Tensor(DType::Float32, shape));
    return;
  }
  if (value->numel() != 1) ctx.fail("value must hold one element");
  Tensor out(value->dtype(), shape);
  dispatch_width(value->dtype(), [&](auto tag) {
    using W = decltype(tag);
    const W v = raw_as<W>(*value)[0];
    W* dst = raw_as<W>(out);
    std::fill(dst, dst + out.numel(), v);
  });
  ctx.set_output(0, std::move(out));
}

void range_kernel(KernelContext& ctx) {
  const Tensor& start_t = ctx.input(0);
  dispatch_numeric(start_t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T start = start_t.data<T>()[0];
    const T limit = ctx.input(1).data<T>()[0];
    const T delta = ctx.input(2).data<T>()[0];
    if (delta == T(0)) ctx.fail("delta cannot be 0");
    const double span = std::ceil((static_cast<double>(limit) - static_cast<double>(start)) / static_cast<double>(delta));
    const auto n = static_cast<std::int64_t>(std::max(0.0, span));
    Tensor out(start_t.dtype(), {n});
    T* o = out.mutable_data<T>();
    for (std::int64_t i = 0; i < n; ++i) o[i] = static_cast<T>(start + static_cast<T>(i) * delta);
    ctx.set_output(0, std::move(out));
  });
}

}  // namespace

void register_shape_ops(KernelRegistry& r) {
  r[{"", "Identity"}] = identity_kernel;
  r[{"", "Dropout"}] = identity_kernel;
  r[{"", "Reshape"}] = reshape_kernel;
  r[{"", "Flatten"}] = flatten_kernel;
  r[{"", "Transpose"}] = transpose_kernel;
  r[{"", "Squeeze"}] = squeeze_kernel;
  r[{"", "Unsqueeze"}] = unsqueeze_kernel;
  r[{"", "Concat"}] = concat_kernel;
  r[{"", "Split"}] = split_kernel;
  r[{"", "Slice"}] = slice_kernel;
  r[{"", "Gather"}] = gather_kernel;
  r[{"", "GatherElements"}] = gather_elements_kernel;
  r[{"", "Expand"}] = expand_kernel;
  r[{"", "Tile"}] = tile_kernel;
  r[{"", "Shape"}] = shape_kernel;
  r[{"", "Size"}] = size_kernel;
  r[{"", "Constant"}] = constant_kernel;
  r[{"", "ConstantOfShape"}] = constant_of_shape_kernel;
  r[{"", "Range"}] = range_kernel;
}

}  // namespace chattox::onnx::detail
