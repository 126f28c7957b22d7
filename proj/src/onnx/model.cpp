#include "chattox/onnx/model.hpp"

#include <algorithm>
#include <climits>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include <google/protobuf/io/coded_stream.h>

#include "chattox/errors.hpp"
#include "kernel.hpp"
#include "onnx.pb.h"

namespace chattox::onnx {

namespace {

using detail::Attribute;
using detail::Attributes;
using detail::Kernel;

constexpr std::string_view kMsDomain = "com.microsoft";

std::string normalize_domain(const std::string& domain) {
  return domain == "ai.onnx" ? std::string() : domain;
}

std::optional<DType> dtype_from_proto(int code) {
  switch (code) {
    case ::onnx::TensorProto::FLOAT:
      return DType::Float32;
    case ::onnx::TensorProto::DOUBLE:
      return DType::Float64;
    case ::onnx::TensorProto::INT64:
      return DType::Int64;
    case ::onnx::TensorProto::INT32:
      return DType::Int32;
    case ::onnx::TensorProto::INT8:
      return DType::Int8;
    case ::onnx::TensorProto::UINT8:
      return DType::UInt8;
    case ::onnx::TensorProto::BOOL:
      return DType::Bool;
    default:
      return std::nullopt;
  }
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw LoadError("cannot read " + path.string());
  return std::move(buf).str();
}

struct LoadContext {
  std::string origin;
  std::optional<std::filesystem::path> base_dir;  // for external tensor data

  [[noreturn]] void fail(const std::string& message) const { throw LoadError(origin + ": " + message); }
};

std::string external_bytes(const ::onnx::TensorProto& proto, const LoadContext& lc) {
  if (!lc.base_dir) lc.fail("tensor '" + proto.name() + "' uses external data, which needs a file path");
  std::string location;
  std::int64_t offset = 0;
  std::int64_t length = -1;
  for (const auto& entry : proto.external_data()) {
    if (entry.key() == "location") location = entry.value();
    else if (entry.key() == "offset") offset = std::stoll(entry.value());
    else if (entry.key() == "length") length = std::stoll(entry.value());
  }
  const std::filesystem::path file = *lc.base_dir / location;
  if (location.empty() || std::filesystem::path(location).is_absolute() || location.find("..") != std::string::npos)
    lc.fail("tensor '" + proto.name() + "' has an invalid external data location");
  std::ifstream in(file, std::ios::binary);
  if (!in) lc.fail("cannot open external data " + file.string());
  in.seekg(0, std::ios::end);
  const std::int64_t size = in.tellg();
  if (length < 0) length = size - offset;
  if (offset < 0 || offset + length > size) lc.fail("external data range out of bounds for '" + proto.name() + "'");
  std::string bytes(static_cast<std::size_t>(length), '\0');
  in.seekg(offset);
  in.read(bytes.data(), length);
  if (!in) lc.fail("cannot read external data " + file.string());
  return bytes;
}

Tensor tensor_from_proto(const ::onnx::TensorProto& proto, const LoadContext& lc) {
  const auto dtype = dtype_from_proto(proto.data_type());
  if (!dtype) lc.fail("tensor '" + proto.name() + "' has unsupported element type " + std::to_string(proto.data_type()));
  Shape shape(proto.dims().begin(), proto.dims().end());
  Tensor t(*dtype, shape);
  const std::size_t n = t.numel();
  const std::size_t bytes = n * dtype_size(*dtype);

  auto copy_raw = [&](const std::string& raw) {
    if (raw.size() != bytes) lc.fail("tensor '" + proto.name() + "' has " + std::to_string(raw.size()) + " bytes, expected " + std::to_string(bytes));
    if (bytes) std::memcpy(t.mutable_raw(), raw.data(), bytes);  // little-endian host assumed
  };
  auto check_count = [&](int count) {
    if (static_cast<std::size_t>(count) != n) lc.fail("tensor '" + proto.name() + "' has the wrong number of values");
  };

  if (proto.data_location() == ::onnx::TensorProto::EXTERNAL) {
    copy_raw(external_bytes(proto, lc));
  } else if (proto.has_raw_data()) {
    copy_raw(proto.raw_data());
  } else {
    switch (*dtype) {
      case DType::Float32:
        check_count(proto.float_data_size());
        std::copy(proto.float_data().begin(), proto.float_data().end(), t.mutable_data<float>());
        break;
      case DType::Float64:
        check_count(proto.double_data_size());
        std::copy(proto.double_data().begin(), proto.double_data().end(), t.mutable_data<double>());
        break;
      case DType::Int64:
        check_count(proto.int64_data_size());
        std::copy(proto.int64_data().begin(), proto.int64_data().end(), t.mutable_data<std::int64_t>());
        break;
      case DType::Int32:
        check_count(proto.int32_data_size());
        std::copy(proto.int32_data().begin(), proto.int32_data().end(), t.mutable_data<std::int32_t>());
        break;
      case DType::Int8:
        check_count(proto.int32_data_size());
        for (std::size_t i = 0; i < n; ++i) t.mutable_data<std::int8_t>()[i] = static_cast<std::int8_t>(proto.int32_data(static_cast<int>(i)));
        break;
      case DType::UInt8:
      case DType::Bool:
        check_count(proto.int32_data_size());
        for (std::size_t i = 0; i < n; ++i) t.mutable_data<std::uint8_t>()[i] = static_cast<std::uint8_t>(proto.int32_data(static_cast<int>(i)));
        break;
    }
  }
  return t;
}

Attribute attribute_from_proto(const ::onnx::AttributeProto& proto, const LoadContext& lc) {
  Attribute a;
  switch (proto.type()) {
    case ::onnx::AttributeProto::INT:
      a.kind = Attribute::Kind::Int;
      a.i = proto.i();
      break;
    case ::onnx::AttributeProto::FLOAT:
      a.kind = Attribute::Kind::Float;
      a.f = proto.f();
      break;
    case ::onnx::AttributeProto::STRING:
      a.kind = Attribute::Kind::String;
      a.s = proto.s();
      break;
    case ::onnx::AttributeProto::INTS:
      a.kind = Attribute::Kind::Ints;
      a.ints.assign(proto.ints().begin(), proto.ints().end());
      break;
    case ::onnx::AttributeProto::FLOATS:
      a.kind = Attribute::Kind::Floats;
      a.floats.assign(proto.floats().begin(), proto.floats().end());
      break;
    case ::onnx::AttributeProto::TENSOR:
      a.kind = Attribute::Kind::Tensor;
      a.t = tensor_from_proto(proto.t(), lc);
      break;
    default:
      a.kind = Attribute::Kind::Other;
  }
  return a;
}

ValueInfo value_info_from_proto(const ::onnx::ValueInfoProto& proto) {
  ValueInfo info;
  info.name = proto.name();
  if (proto.type().has_tensor_type()) {
    const auto& tt = proto.type().tensor_type();
    info.dtype = dtype_from_proto(tt.elem_type());
    if (tt.has_shape()) {
      std::vector<std::optional<std::int64_t>> dims;
      for (const auto& d : tt.shape().dim()) {
        if (d.has_dim_value()) dims.emplace_back(d.dim_value());
        else dims.emplace_back(std::nullopt);
      }
      info.dims = std::move(dims);
    }
  }
  return info;
}

bool is_quantization_op(const std::string& op) {
  static const std::set<std::string, std::less<>> ops{
      "MatMulInteger", "DynamicQuantizeLinear", "QuantizeLinear", "DequantizeLinear", "DynamicQuantizeMatMul",
      "MatMulIntegerToFloat", "QLinearMatMul", "QLinearConv", "ConvInteger", "QAttention"};
  return ops.count(op) != 0;
}

}  // namespace

struct OnnxModel::Impl {
  struct Node {
    std::string name;
    std::string op;
    std::int64_t opset = 0;
    Kernel kernel = nullptr;
    Attributes attrs;
    std::vector<int> inputs;   // slot index, -1 for an omitted optional input
    std::vector<int> outputs;  // slot index, -1 when unused
    std::vector<int> release;  // dynamic slots whose last use is this node
  };

  std::vector<ValueInfo> inputs;
  std::vector<ValueInfo> outputs;
  std::vector<int> input_slots;
  std::vector<int> output_slots;
  std::int64_t opset = 0;
  bool quantized = false;
  std::size_t node_count = 0;
  std::set<std::string> op_types;

  std::size_t slot_count = 0;
  std::vector<std::optional<Tensor>> constants;  // per slot, set for folded values
  std::vector<Node> nodes;                        // nodes left after folding
};

namespace {

// Executes one node on resolved input pointers.
void execute_node(const OnnxModel::Impl::Node& node, std::span<const Tensor* const> inputs, std::vector<Tensor>& outputs) {
  std::vector<bool> wanted(node.outputs.size());
  for (std::size_t i = 0; i < node.outputs.size(); ++i) wanted[i] = node.outputs[i] >= 0;
  outputs.assign(node.outputs.size(), Tensor());
  detail::KernelContext ctx(node.op, node.opset, node.attrs, inputs, outputs, wanted);
  try {
    node.kernel(ctx);
  } catch (const Error& e) {
    const std::string where = node.name.empty() ? node.op : node.name + " (" + node.op + ")";
    throw Error("node " + where + ": " + e.what());
  }
  for (std::size_t i = 0; i < outputs.size(); ++i)
    if (wanted[i] && outputs[i].empty())
      throw Error("node " + node.name + " (" + node.op + "): output " + std::to_string(i) + " was not produced");
}

std::shared_ptr<const OnnxModel::Impl> build(const ::onnx::ModelProto& model, const LoadContext& lc) {
  auto impl = std::make_shared<OnnxModel::Impl>();
  std::map<std::string, std::int64_t> opsets;
  for (const auto& imp : model.opset_import()) opsets[normalize_domain(imp.domain())] = imp.version();
  if (!opsets.count("")) lc.fail("model does not import the default operator set");
  impl->opset = opsets[""];
  const auto& graph = model.graph();

  std::unordered_map<std::string, int> slot_of;
  auto slot = [&](const std::string& name) {
    auto [it, inserted] = slot_of.try_emplace(name, static_cast<int>(slot_of.size()));
    if (inserted) impl->constants.emplace_back();
    return it->second;
  };

  for (const auto& init : graph.initializer()) {
    const int s = slot(init.name());
    Tensor t = tensor_from_proto(init, lc);
    if (t.dtype() == DType::Int8 || t.dtype() == DType::UInt8) impl->quantized = true;
    impl->constants[static_cast<std::size_t>(s)] = std::move(t);
  }
  for (const auto& in : graph.input()) {
    // older exports also list initializers as graph inputs
    if (slot_of.count(in.name()) && impl->constants[static_cast<std::size_t>(slot_of[in.name()])]) continue;
    if (slot_of.count(in.name())) lc.fail("duplicate graph input '" + in.name() + "'");
    impl->inputs.push_back(value_info_from_proto(in));
    impl->input_slots.push_back(slot(in.name()));
  }

  // topological order; the format requires it but some writers are sloppy
  std::vector<const ::onnx::NodeProto*> pending;
  for (const auto& n : graph.node()) pending.push_back(&n);
  std::set<std::string> available;
  for (const auto& [name, s] : slot_of) available.insert(name);
  std::vector<const ::onnx::NodeProto*> ordered;
  while (!pending.empty()) {
    std::vector<const ::onnx::NodeProto*> next;
    for (const auto* n : pending) {
      const bool ready = std::all_of(n->input().begin(), n->input().end(),
                                     [&](const std::string& in) { return in.empty() || available.count(in); });
      if (ready) {
        ordered.push_back(n);
        for (const auto& out : n->output())
          if (!out.empty()) available.insert(out);
      } else {
        next.push_back(n);
      }
    }
    if (next.size() == pending.size()) lc.fail("graph has a cycle or an undefined input ('" + next.front()->name() + "')");
    pending = std::move(next);
  }

  const auto& registry = detail::kernels();
  std::vector<OnnxModel::Impl::Node> nodes;
  for (const auto* n : ordered) {
    const std::string domain = normalize_domain(n->domain());
    impl->op_types.insert(domain.empty() ? n->op_type() : domain + "." + n->op_type());
    if (is_quantization_op(n->op_type())) impl->quantized = true;
    auto it = registry.find(std::make_pair(domain, n->op_type()));
    if (it == registry.end())
      lc.fail("unsupported operator " + (domain.empty() ? n->op_type() : domain + "." + n->op_type()) +
              (n->name().empty() ? "" : " (node " + n->name() + ")"));
    OnnxModel::Impl::Node node;
    node.name = n->name();
    node.op = n->op_type();
    node.kernel = it->second;
    const auto op_it = opsets.find(domain);
    node.opset = op_it != opsets.end() ? op_it->second : 1;
    for (const auto& attr : n->attribute()) {
      if (attr.type() == ::onnx::AttributeProto::GRAPH || attr.type() == ::onnx::AttributeProto::GRAPHS)
        lc.fail("operator " + n->op_type() + " with subgraphs is not supported");
      node.attrs[attr.name()] = attribute_from_proto(attr, lc);
    }
    for (const auto& in : n->input()) node.inputs.push_back(in.empty() ? -1 : slot(in));
    for (const auto& out : n->output()) node.outputs.push_back(out.empty() ? -1 : slot(out));
    nodes.push_back(std::move(node));
  }
  impl->node_count = nodes.size();

  for (const auto& out : graph.output()) {
    if (!slot_of.count(out.name())) lc.fail("graph output '" + out.name() + "' is never produced");
    impl->outputs.push_back(value_info_from_proto(out));
    impl->output_slots.push_back(slot_of[out.name()]);
  }
  impl->slot_count = slot_of.size();

  // constant folding: evaluate nodes whose inputs are all known
  std::vector<Tensor> outs;
  for (auto& node : nodes) {
    const bool foldable =
        std::all_of(node.inputs.begin(), node.inputs.end(), [&](int s) { return s < 0 || impl->constants[static_cast<std::size_t>(s)]; });
    if (!foldable) {
      impl->nodes.push_back(std::move(node));
      continue;
    }
    std::vector<const Tensor*> ins;
    for (int s : node.inputs) ins.push_back(s < 0 ? nullptr : &*impl->constants[static_cast<std::size_t>(s)]);
    try {
      execute_node(node, ins, outs);
    } catch (const Error& e) {
      lc.fail(e.what());
    }
    for (std::size_t i = 0; i < node.outputs.size(); ++i)
      if (node.outputs[i] >= 0) impl->constants[static_cast<std::size_t>(node.outputs[i])] = std::move(outs[i]);
  }

  // mark the last consumer of every dynamic slot so it can be freed early
  std::vector<int> last_use(impl->slot_count, -1);
  for (std::size_t i = 0; i < impl->nodes.size(); ++i)
    for (int s : impl->nodes[i].inputs)
      if (s >= 0) last_use[static_cast<std::size_t>(s)] = static_cast<int>(i);
  for (int s : impl->output_slots) last_use[static_cast<std::size_t>(s)] = -1;
  for (std::size_t s = 0; s < impl->slot_count; ++s)
    if (last_use[s] >= 0 && !impl->constants[s]) impl->nodes[static_cast<std::size_t>(last_use[s])].release.push_back(static_cast<int>(s));
  return impl;
}

}  // namespace

OnnxModel OnnxModel::from_bytes(std::string_view bytes, const std::string& origin) {
  LoadContext lc{origin, std::nullopt};
  ::onnx::ModelProto proto;
  google::protobuf::io::CodedInputStream stream(reinterpret_cast<const std::uint8_t*>(bytes.data()),
                                                static_cast<int>(std::min<std::size_t>(bytes.size(), INT_MAX)));
  stream.SetTotalBytesLimit(INT_MAX);
  if (bytes.size() > static_cast<std::size_t>(INT_MAX) || !proto.ParseFromCodedStream(&stream) ||
      !stream.ConsumedEntireMessage())
    lc.fail("not a valid ONNX model");
  return OnnxModel(build(proto, lc));
}

OnnxModel OnnxModel::load(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  LoadContext lc{path.string(), path.parent_path()};
  ::onnx::ModelProto proto;
  google::protobuf::io::CodedInputStream stream(reinterpret_cast<const std::uint8_t*>(bytes.data()),
                                                static_cast<int>(std::min<std::size_t>(bytes.size(), INT_MAX)));
  stream.SetTotalBytesLimit(INT_MAX);
  if (bytes.size() > static_cast<std::size_t>(INT_MAX) || !proto.ParseFromCodedStream(&stream))
    lc.fail("not a valid ONNX model");
  return OnnxModel(build(proto, lc));
}

const std::vector<ValueInfo>& OnnxModel::inputs() const noexcept { return impl_->inputs; }
const std::vector<ValueInfo>& OnnxModel::outputs() const noexcept { return impl_->outputs; }
std::int64_t OnnxModel::opset() const noexcept { return impl_->opset; }
bool OnnxModel::quantized() const noexcept { return impl_->quantized; }
std::size_t OnnxModel::node_count() const noexcept { return impl_->node_count; }
const std::set<std::string>& OnnxModel::op_types() const noexcept { return impl_->op_types; }

std::vector<Tensor> OnnxModel::run(const std::vector<std::pair<std::string, Tensor>>& feeds) const {
  const Impl& m = *impl_;
  std::vector<Tensor> slots(m.slot_count);
  std::vector<bool> fed(m.inputs.size(), false);
  for (const auto& [name, tensor] : feeds) {
    auto it = std::find_if(m.inputs.begin(), m.inputs.end(), [&](const ValueInfo& v) { return v.name == name; });
    if (it == m.inputs.end()) throw InvalidArgument("model has no input named '" + name + "'");
    const auto idx = static_cast<std::size_t>(it - m.inputs.begin());
    if (fed[idx]) throw InvalidArgument("input '" + name + "' fed twice");
    fed[idx] = true;
    if (tensor.empty()) throw InvalidArgument("input '" + name + "' is empty");
    if (it->dtype && *it->dtype != tensor.dtype())
      throw InvalidArgument("input '" + name + "' expects " + std::string(dtype_name(*it->dtype)) + ", got " +
                            std::string(dtype_name(tensor.dtype())));
    if (it->dims) {
      if (it->dims->size() != tensor.rank())
        throw InvalidArgument("input '" + name + "' expects rank " + std::to_string(it->dims->size()));
      for (std::size_t d = 0; d < tensor.rank(); ++d)
        if ((*it->dims)[d] && *(*it->dims)[d] != tensor.shape()[d])
          throw InvalidArgument("input '" + name + "' dimension " + std::to_string(d) + " must be " +
                                std::to_string(*(*it->dims)[d]));
    }
    slots[static_cast<std::size_t>(m.input_slots[idx])] = tensor;
  }
  for (std::size_t i = 0; i < fed.size(); ++i)
    if (!fed[i]) throw InvalidArgument("input '" + m.inputs[i].name + "' was not fed");

  std::vector<const Tensor*> ins;
  std::vector<Tensor> outs;
  auto value = [&](int s) -> const Tensor* {
    if (s < 0) return nullptr;
    const auto& c = m.constants[static_cast<std::size_t>(s)];
    return c ? &*c : &slots[static_cast<std::size_t>(s)];
  };
  for (const auto& node : m.nodes) {
    ins.clear();
    for (int s : node.inputs) ins.push_back(value(s));
    execute_node(node, ins, outs);
    for (std::size_t i = 0; i < node.outputs.size(); ++i)
      if (node.outputs[i] >= 0) slots[static_cast<std::size_t>(node.outputs[i])] = std::move(outs[i]);
    for (int s : node.release) slots[static_cast<std::size_t>(s)] = Tensor();
  }
  std::vector<Tensor> result;
  for (int s : m.output_slots) {
    const Tensor* t = value(s);
    if (t->empty()) throw Error("graph output was not computed");
    result.push_back(*t);
  }
  return result;
}

}  // namespace chattox::onnx
