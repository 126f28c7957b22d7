#include <cmath>
#include <limits>

#include "chattox/errors.hpp"
#include "chattox/onnx/model.hpp"
#include "chattox/tokenizer.hpp"
#include "doctest.h"
#include "test_support.hpp"

using chattox::onnx::DType;
using chattox::onnx::OnnxModel;
using chattox::onnx::Shape;
using chattox::onnx::Tensor;
using nlohmann::json;

namespace {

DType dtype_from(const std::string& name) {
  if (name == "float32") return DType::Float32;
  if (name == "float64") return DType::Float64;
  if (name == "int64") return DType::Int64;
  if (name == "int32") return DType::Int32;
  if (name == "int8") return DType::Int8;
  if (name == "uint8") return DType::UInt8;
  if (name == "bool") return DType::Bool;
  throw std::runtime_error("unknown dtype " + name);
}

Tensor tensor_from(const json& j) {
  const DType dtype = dtype_from(j["dtype"]);
  Tensor t(dtype, j["shape"].get<Shape>());
  const auto& data = j["data"];
  for (std::size_t i = 0; i < t.numel(); ++i) {
    switch (dtype) {
      case DType::Float32:
        t.mutable_data<float>()[i] = data[i].is_null() ? std::numeric_limits<float>::quiet_NaN() : data[i].get<float>();
        break;
      case DType::Float64:
        t.mutable_data<double>()[i] = data[i].get<double>();
        break;
      case DType::Int64:
        t.mutable_data<std::int64_t>()[i] = data[i].get<std::int64_t>();
        break;
      case DType::Int32:
        t.mutable_data<std::int32_t>()[i] = data[i].get<std::int32_t>();
        break;
      case DType::Int8:
        t.mutable_data<std::int8_t>()[i] = static_cast<std::int8_t>(data[i].get<int>());
        break;
      case DType::UInt8:
      case DType::Bool:
        t.mutable_data<std::uint8_t>()[i] = static_cast<std::uint8_t>(data[i].get<int>());
        break;
    }
  }
  return t;
}

void check_close(const Tensor& got, const json& want, const std::string& label) {
  INFO(label);
  REQUIRE(got.dtype() == dtype_from(want["dtype"]));
  REQUIRE(got.shape() == want["shape"].get<Shape>());
  const auto& data = want["data"];
  const bool is_float = got.dtype() == DType::Float32 || got.dtype() == DType::Float64;
  const auto values = got.as_double();
  for (std::size_t i = 0; i < values.size(); ++i) {
    INFO("element " << i);
    if (data[i].is_null()) {
      CHECK(std::isnan(values[i]));
    } else if (is_float) {
      const double w = data[i].get<double>();
      CHECK(std::abs(values[i] - w) <= 1e-5 + 1e-4 * std::abs(w));
    } else {
      CHECK(values[i] == data[i].get<double>());
    }
  }
}

struct Batch {
  Tensor ids, mask, types;
};

// Right-padded batch, as a Hugging Face tokenizer produces with padding=True.
Batch encode_batch(const chattox::WordPieceTokenizer& tok, const std::vector<std::string>& texts, std::size_t max_tokens) {
  std::vector<std::vector<chattox::TokenId>> rows;
  std::size_t width = 0;
  for (const auto& t : texts) {
    rows.push_back(tok.encode(t, max_tokens));
    width = std::max(width, rows.back().size());
  }
  const auto b = static_cast<std::int64_t>(rows.size());
  const auto s = static_cast<std::int64_t>(width);
  Batch batch{Tensor(DType::Int64, {b, s}), Tensor(DType::Int64, {b, s}), Tensor(DType::Int64, {b, s})};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const bool real = c < rows[r].size();
      batch.ids.mutable_data<std::int64_t>()[r * width + c] = real ? rows[r][c] : tok.special().pad;
      batch.mask.mutable_data<std::int64_t>()[r * width + c] = real ? 1 : 0;
    }
  }
  return batch;
}

std::vector<std::pair<std::string, Tensor>> feeds_for(const OnnxModel& model, const Batch& batch) {
  std::vector<std::pair<std::string, Tensor>> feeds;
  for (const auto& in : model.inputs()) {
    if (in.name == "input_ids") feeds.emplace_back(in.name, batch.ids);
    else if (in.name == "attention_mask") feeds.emplace_back(in.name, batch.mask);
    else if (in.name == "token_type_ids") feeds.emplace_back(in.name, batch.types);
  }
  return feeds;
}

}  // namespace

TEST_CASE("single-operator graphs match the reference runtime") {
  const json cases = test_support::read_json("onnx_ops_golden.json");
  REQUIRE(cases.size() >= 50);
  for (const auto& c : cases) {
    const std::string name = c["name"];
    SUBCASE(name.c_str()) {
      const OnnxModel model = OnnxModel::load(test_support::data_path("onnx_ops/" + name + ".onnx"));
      std::vector<std::pair<std::string, Tensor>> feeds;
      for (const auto& [key, value] : c["inputs"].items()) feeds.emplace_back(key, tensor_from(value));
      const auto outputs = model.run(feeds);
      REQUIRE(outputs.size() == c["outputs"].size());
      for (std::size_t i = 0; i < outputs.size(); ++i) check_close(outputs[i], c["outputs"][i], name);
    }
  }
}

TEST_CASE("transformer exports reproduce reference logits") {
  const json golden = test_support::read_json("model_golden.json");
  const auto tok = chattox::WordPieceTokenizer::load(test_support::data_path("model/tokenizer.json"));
  const auto texts = golden["texts"].get<std::vector<std::string>>();
  const Batch batch = encode_batch(tok, texts, 192);

  for (const auto& [file, logits] : golden["models"].items()) {
    SUBCASE(file.c_str()) {
      const OnnxModel model = OnnxModel::load(test_support::data_path("model/" + file));
      const auto out = model.run(feeds_for(model, batch));
      REQUIRE(out.size() == 1);
      const auto& got = out[0];
      REQUIRE(got.shape() == Shape{static_cast<std::int64_t>(texts.size()), static_cast<std::int64_t>(logits[0].size())});
      const bool quantized = file.find("quantized") != std::string::npos;
      CHECK(model.quantized() == quantized);
      const double tol = 1e-4;
      for (std::size_t r = 0; r < texts.size(); ++r)
        for (std::size_t c = 0; c < logits[r].size(); ++c) {
          INFO(file << " row " << r << " col " << c);
          CHECK(std::abs(got.data<float>()[r * logits[r].size() + c] - logits[r][c].get<double>()) <= tol);
        }
    }
  }
}

TEST_CASE("batched and unbatched inference agree") {
  const json golden = test_support::read_json("model_golden.json");
  const auto tok = chattox::WordPieceTokenizer::load(test_support::data_path("model/tokenizer.json"));
  const auto texts = golden["texts"].get<std::vector<std::string>>();
  const OnnxModel model = OnnxModel::load(test_support::data_path("model/tiny_bert.onnx"));
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const Batch one = encode_batch(tok, {texts[i]}, 192);
    const auto out = model.run(feeds_for(model, one));
    for (std::size_t c = 0; c < 2; ++c)
      CHECK(std::abs(out[0].data<float>()[c] - golden["single_fp32"][i][c].get<double>()) <= 1e-3);
  }
}

TEST_CASE("model metadata") {
  const OnnxModel model = OnnxModel::load(test_support::data_path("model/tiny_bert.onnx"));
  REQUIRE(model.inputs().size() == 2);
  CHECK(model.inputs()[0].name == "input_ids");
  CHECK(model.inputs()[0].dtype == DType::Int64);
  REQUIRE(model.inputs()[0].dims.has_value());
  CHECK(model.inputs()[0].dims->size() == 2);
  CHECK_FALSE((*model.inputs()[0].dims)[0].has_value());
  CHECK(model.opset() == 17);
  CHECK(model.node_count() > 10);
  CHECK(model.op_types().count("MatMul") == 1);

  const OnnxModel tt = OnnxModel::load(test_support::data_path("model/tiny_bert_opset14_tt.onnx"));
  CHECK(tt.inputs().size() == 3);
  CHECK(tt.opset() == 14);
}

TEST_CASE("load failures") {
  CHECK_THROWS_AS(OnnxModel::load(test_support::data_path("does_not_exist.onnx")), chattox::LoadError);
  CHECK_THROWS_AS(OnnxModel::from_bytes("definitely not protobuf \xff\xff\xff"), chattox::LoadError);
  try {
    OnnxModel::load(test_support::data_path("onnx_ops/unsupported_op.onnx"));
    FAIL("expected a LoadError");
  } catch (const chattox::LoadError& e) {
    CHECK(std::string(e.what()).find("Hardmax") != std::string::npos);
  }
}

TEST_CASE("external initializer data is resolved beside the model") {
  const OnnxModel model = OnnxModel::load(test_support::data_path("onnx_ops/external_data.onnx"));
  const auto out = model.run({{"x", Tensor::from<float>({2, 3}, {1, 1, 1, 1, 1, 1})}});
  const auto values = out[0].values<float>();
  for (std::size_t i = 0; i < 6; ++i) CHECK(values[i] == doctest::Approx(1.0 + static_cast<double>(i)));

  const std::string bytes = test_support::read_text(test_support::data_path("onnx_ops/external_data.onnx"));
  CHECK_THROWS_AS(OnnxModel::from_bytes(bytes), chattox::LoadError);
}

TEST_CASE("feeds are validated") {
  const OnnxModel model = OnnxModel::load(test_support::data_path("model/tiny_bert.onnx"));
  const Tensor ids = Tensor::from<std::int64_t>({1, 3}, {2, 81, 3});
  const Tensor mask = Tensor::from<std::int64_t>({1, 3}, {1, 1, 1});
  CHECK_NOTHROW(model.run({{"input_ids", ids}, {"attention_mask", mask}}));
  CHECK_THROWS_AS(model.run({{"input_ids", ids}}), chattox::InvalidArgument);
  CHECK_THROWS_AS(model.run({{"input_ids", ids}, {"attention_mask", mask}, {"bogus", mask}}), chattox::InvalidArgument);
  CHECK_THROWS_AS(model.run({{"input_ids", ids}, {"input_ids", ids}, {"attention_mask", mask}}), chattox::InvalidArgument);
  const Tensor ids32 = Tensor::from<std::int32_t>({1, 3}, {2, 81, 3});
  CHECK_THROWS_AS(model.run({{"input_ids", ids32}, {"attention_mask", mask}}), chattox::InvalidArgument);
  const Tensor flat = Tensor::from<std::int64_t>({3}, {2, 81, 3});
  CHECK_THROWS_AS(model.run({{"input_ids", flat}, {"attention_mask", mask}}), chattox::InvalidArgument);
}

TEST_CASE("kernel failures name the node") {
  const OnnxModel model = OnnxModel::load(test_support::data_path("model/tiny_bert.onnx"));
  // out-of-vocabulary id makes the embedding Gather fail
  const Tensor ids = Tensor::from<std::int64_t>({1, 3}, {2, 1000000, 3});
  const Tensor mask = Tensor::from<std::int64_t>({1, 3}, {1, 1, 1});
  try {
    model.run({{"input_ids", ids}, {"attention_mask", mask}});
    FAIL("expected an error");
  } catch (const chattox::Error& e) {
    const std::string what = e.what();
    CHECK(what.find("Gather") != std::string::npos);
    CHECK(what.find("out of range") != std::string::npos);
  }
}

TEST_CASE("tensor basics") {
  const Tensor t = Tensor::from<float>({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  const Tensor r = t.reshaped({3, 2});
  CHECK(r.raw() == t.raw());
  CHECK_THROWS_AS(t.reshaped({4}), chattox::InvalidArgument);
  CHECK_THROWS_AS(t.data<std::int64_t>(), chattox::InvalidArgument);
  CHECK_THROWS_AS(Tensor(DType::Float32, {-1}), chattox::InvalidArgument);
  const Tensor b = Tensor::bools({3}, {true, false, true});
  CHECK(b.as_int64() == std::vector<std::int64_t>{1, 0, 1});
  CHECK(Tensor::scalar<std::int64_t>(7).shape().empty());
  CHECK(Tensor(DType::Int8, {0, 4}).numel() == 0);
}
