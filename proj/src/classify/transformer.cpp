#include <algorithm>
#include <cmath>
#include <set>

#include "chattox/classify.hpp"
#include "chattox/errors.hpp"

namespace chattox {

namespace {

const std::set<std::string, std::less<>> kKnownInputs{"input_ids", "attention_mask", "token_type_ids"};

void check_signature(const onnx::OnnxModel& model, const std::filesystem::path& path, bool& int32_inputs) {
  bool has_ids = false;
  bool has_mask = false;
  std::optional<onnx::DType> id_type;
  for (const auto& in : model.inputs()) {
    if (!kKnownInputs.count(in.name))
      throw LoadError(path.string() + ": unexpected model input '" + in.name +
                      "' (expected input_ids, attention_mask and optionally token_type_ids)");
    if (in.dtype != onnx::DType::Int64 && in.dtype != onnx::DType::Int32)
      throw LoadError(path.string() + ": input '" + in.name + "' must be int64 or int32");
    if (in.dims && in.dims->size() != 2) throw LoadError(path.string() + ": input '" + in.name + "' must be [batch, sequence]");
    if (id_type && *id_type != *in.dtype) throw LoadError(path.string() + ": model inputs mix integer widths");
    id_type = in.dtype;
    has_ids = has_ids || in.name == "input_ids";
    has_mask = has_mask || in.name == "attention_mask";
  }
  if (!has_ids || !has_mask) throw LoadError(path.string() + ": model needs input_ids and attention_mask inputs");
  int32_inputs = id_type == onnx::DType::Int32;
  if (model.outputs().empty()) throw LoadError(path.string() + ": model has no outputs");
}

[[noreturn]] void not_binary(const std::filesystem::path& path, const std::string& detail) {
  throw LoadError(path.string() + ": not a binary toxicity head (" + detail + ")");
}

}  // namespace

TransformerClassifier::TransformerClassifier(onnx::OnnxModel model, WordPieceTokenizer tokenizer,
                                             std::size_t max_tokens, std::filesystem::path path)
    : model_(std::move(model)), tokenizer_(std::move(tokenizer)), max_tokens_(max_tokens), path_(std::move(path)) {}

std::shared_ptr<const TransformerClassifier> TransformerClassifier::load(const std::filesystem::path& model_path,
                                                                         const std::filesystem::path& tokenizer_path,
                                                                         const ClassifierConfig& config) {
  config.validate();
  if (!std::filesystem::is_regular_file(model_path)) throw LoadError("model file not found: " + model_path.string());
  if (!std::filesystem::is_regular_file(tokenizer_path))
    throw LoadError("tokenizer file not found: " + tokenizer_path.string());
  onnx::OnnxModel model = onnx::OnnxModel::load(model_path);
  bool int32_inputs = false;
  check_signature(model, model_path, int32_inputs);
  WordPieceTokenizer tokenizer = WordPieceTokenizer::load(tokenizer_path);

  const auto& out = model.outputs().front();
  if (out.dims) {
    if (out.dims->size() != 2) not_binary(model_path, "logits must be [batch, 2]");
    const auto& last = out.dims->back();
    if (last && *last != 2) not_binary(model_path, std::to_string(*last) + " outputs per text");
  }

  std::shared_ptr<TransformerClassifier> clf(
      new TransformerClassifier(std::move(model), std::move(tokenizer), config.max_tokens, model_path));
  clf->int32_inputs_ = int32_inputs;

  // symbolic output shapes are resolved by a probe run on an empty text
  std::vector<onnx::Tensor> probe;
  try {
    std::vector<std::pair<std::string, onnx::Tensor>> feeds;
    const auto& sp = clf->tokenizer_.special();
    for (const auto& in : clf->model_.inputs()) {
      std::vector<std::int64_t> v = in.name == "input_ids" ? std::vector<std::int64_t>{sp.start, sp.end}
                                    : in.name == "attention_mask" ? std::vector<std::int64_t>{1, 1}
                                                                  : std::vector<std::int64_t>{0, 0};
      onnx::Tensor t = onnx::Tensor::from<std::int64_t>({1, 2}, v);
      if (int32_inputs) t = onnx::Tensor::from<std::int32_t>({1, 2}, std::vector<std::int32_t>(v.begin(), v.end()));
      feeds.emplace_back(in.name, std::move(t));
    }
    probe = clf->model_.run(feeds);
  } catch (const Error& e) {
    throw LoadError(model_path.string() + ": probe inference failed: " + e.what());
  }
  const auto& logits = probe.front();
  if (logits.rank() != 2 || logits.shape()[0] != 1) not_binary(model_path, "logits must be [batch, 2]");
  if (logits.shape()[1] != 2) not_binary(model_path, std::to_string(logits.shape()[1]) + " outputs per text");
  if (logits.dtype() != onnx::DType::Float32 && logits.dtype() != onnx::DType::Float64)
    throw LoadError(model_path.string() + ": logits must be floating point");

  ModelInfo& info = clf->info_;
  for (const auto& in : clf->model_.inputs()) info.input_names.push_back(in.name);
  info.quantized = clf->model_.quantized();
  info.opset = clf->model_.opset();
  info.output_dim = 2;
  info.vocab_size = clf->tokenizer_.vocab_size();
  info.lowercase = clf->tokenizer_.lowercase();
  return clf;
}

std::string TransformerClassifier::name() const {
  return "transformer:" + path_.filename().string() + (info_.quantized ? " (quantized)" : "");
}

std::vector<std::pair<double, double>> TransformerClassifier::run_ids(
    const std::vector<std::vector<TokenId>>& rows) const {
  if (rows.empty()) return {};
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.size());
  const auto b = static_cast<std::int64_t>(rows.size());
  const auto s = static_cast<std::int64_t>(width);
  std::vector<std::int64_t> ids(rows.size() * width, tokenizer_.special().pad);
  std::vector<std::int64_t> mask(rows.size() * width, 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r].begin(), rows[r].end(), ids.begin() + static_cast<std::ptrdiff_t>(r * width));
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(r * width), rows[r].size(), 1);
  }
  auto make = [&](const std::vector<std::int64_t>& v) {
    if (!int32_inputs_) return onnx::Tensor::from<std::int64_t>({b, s}, v);
    return onnx::Tensor::from<std::int32_t>({b, s}, std::vector<std::int32_t>(v.begin(), v.end()));
  };
  std::vector<std::pair<std::string, onnx::Tensor>> feeds;
  for (const auto& in : model_.inputs()) {
    if (in.name == "input_ids") feeds.emplace_back(in.name, make(ids));
    else if (in.name == "attention_mask") feeds.emplace_back(in.name, make(mask));
    else feeds.emplace_back(in.name, make(std::vector<std::int64_t>(ids.size(), 0)));
  }
  const auto outputs = model_.run(feeds);
  const auto& logits = outputs.front();
  if (logits.rank() != 2 || logits.shape()[0] != b || logits.shape()[1] != 2)
    throw Error("unexpected logits shape from the model");
  const auto values = logits.as_double();
  std::vector<std::pair<double, double>> out;
  out.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double l0 = values[2 * r];
    const double l1 = values[2 * r + 1];
    if (!std::isfinite(l0) || !std::isfinite(l1)) throw Error("model produced non-finite logits");
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m);
    const double e1 = std::exp(l1 - m);
    out.emplace_back(e0 / (e0 + e1), e1 / (e0 + e1));
  }
  return out;
}

std::vector<std::pair<double, double>> TransformerClassifier::probabilities(std::span<const std::string> texts) const {
  std::vector<std::vector<TokenId>> rows;
  rows.reserve(texts.size());
  for (const auto& t : texts) rows.push_back(tokenizer_.encode(t, max_tokens_));
  return run_ids(rows);
}

std::vector<double> TransformerClassifier::score(std::span<const std::string> texts) const {
  std::vector<double> out;
  out.reserve(texts.size());
  for (const auto& [p0, p1] : probabilities(texts)) out.push_back(p1);
  return out;
}

}  // namespace chattox
