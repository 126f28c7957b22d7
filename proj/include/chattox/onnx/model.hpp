#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chattox/onnx/tensor.hpp"

namespace chattox::onnx {

/// Declared graph input or output. A dimension is nullopt when symbolic.
struct ValueInfo {
  std::string name;
  std::optional<DType> dtype;  // nullopt for element types the runtime cannot hold
  std::optional<std::vector<std::optional<std::int64_t>>> dims;
};

/// A loaded ONNX graph executed on the CPU by a built-in interpreter.
///
/// Supports the standard operators that BERT-family exports use (float and
/// dynamically quantised), plus a handful of com.microsoft fusions. Loading
/// resolves every node to a kernel and folds constant subgraphs, so an
/// unsupported operator is reported at load time. The model is immutable
/// once loaded; `run` may be called concurrently.
class OnnxModel {
 public:
  /// Throws LoadError on I/O failure, a corrupt file or an unsupported operator.
  static OnnxModel load(const std::filesystem::path& path);
  static OnnxModel from_bytes(std::string_view bytes, const std::string& origin = "<memory>");

  const std::vector<ValueInfo>& inputs() const noexcept;
  const std::vector<ValueInfo>& outputs() const noexcept;

  /// Default-domain opset.
  std::int64_t opset() const noexcept;
  /// True when the graph holds 8-bit weights or quantisation operators.
  bool quantized() const noexcept;
  std::size_t node_count() const noexcept;
  const std::set<std::string>& op_types() const noexcept;

  /// Runs the graph. Every declared input must be fed; returns the graph
  /// outputs in declaration order. Throws InvalidArgument on bad feeds and
  /// ModelError-compatible Error on kernel failures.
  std::vector<Tensor> run(const std::vector<std::pair<std::string, Tensor>>& feeds) const;

  struct Impl;

 private:
  explicit OnnxModel(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<const Impl> impl_;
};

}  // namespace chattox::onnx
