#include <cmath>
#include <fstream>
#include <random>

#include "chattox/classify.hpp"
#include "chattox/errors.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace chattox;
using test_support::data_path;

namespace {

const LexiconClassifier& lexicon() {
  static const LexiconClassifier clf(LexiconClassifier::default_lexicon());
  return clf;
}

std::shared_ptr<const TransformerClassifier> tiny(const std::string& file = "tiny_bert.onnx") {
  return TransformerClassifier::load(data_path("model/" + file), data_path("model/tokenizer.json"));
}

std::vector<std::string> fuzz_texts(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> words{"gg",     "noob", "trash", "mid",  "NOOB!!!", "kys",    "report",
                                              "so",     "bad",  "lane",  "ward", "Café",    "😀",     "",
                                              "idiot,", "shut", "up",    "uninstall", "n0000b", "what's"};
  std::mt19937_64 gen(seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string t;
    const std::size_t len = gen() % 12;
    for (std::size_t k = 0; k < len; ++k) t += (k ? " " : "") + words[gen() % words.size()];
    out.push_back(std::move(t));
  }
  return out;
}

class FailingClassifier : public Classifier {
 public:
  explicit FailingClassifier(std::size_t fail_on) : fail_on_(fail_on) {}
  std::vector<double> score(std::span<const std::string> texts) const override {
    if (calls_++ == fail_on_) throw std::runtime_error("kernel exploded");
    return std::vector<double>(texts.size(), 0.25);
  }
  std::string name() const override { return "failing"; }

 private:
  std::size_t fail_on_;
  mutable std::size_t calls_ = 0;
};

class WrongCountClassifier : public Classifier {
 public:
  std::vector<double> score(std::span<const std::string>) const override { return {0.5}; }
  std::string name() const override { return "wrong"; }
};

}  // namespace

TEST_CASE("classify_batch: empty input") {
  const std::vector<std::string> none;
  CHECK(classify_batch(none, lexicon(), {}).empty());
}

TEST_CASE("classify_batch: order, references and threshold") {
  const std::vector<std::string> texts{"gg wp", "mother fucking noob", "nice ult", "kys"};
  ClassifierConfig config;
  config.batch_size = 3;
  const auto out = classify_batch(texts, lexicon(), config);
  REQUIRE(out.size() == texts.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].text_ref == i);
    CHECK(out[i].toxic_score == doctest::Approx(lexicon().score_one(texts[i])));
    CHECK((out[i].label == Label::Toxic) == (out[i].toxic_score >= config.threshold));
  }
  CHECK(out[1].label == Label::Toxic);
  CHECK(out[0].label == Label::NonToxic);
}

TEST_CASE("classify_batch: batch size never changes results") {
  const auto texts = fuzz_texts(1000, 77);
  std::vector<Prediction> reference;
  for (std::size_t batch : {1, 7, 16, 64}) {
    ClassifierConfig config;
    config.batch_size = batch;
    const auto out = classify_batch(texts, lexicon(), config);
    if (reference.empty()) {
      reference = out;
      continue;
    }
    REQUIRE(out.size() == reference.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i].label == reference[i].label);
      CHECK(std::abs(out[i].toxic_score - reference[i].toxic_score) <= 1e-6);
    }
  }
}

TEST_CASE("classify_batch: transformer scores are batch invariant") {
  const auto model = tiny();
  const auto texts = fuzz_texts(80, 5);
  std::vector<Prediction> reference;
  for (std::size_t batch : {1, 7, 16, 64}) {
    ClassifierConfig config;
    config.batch_size = batch;
    const auto out = classify_batch(texts, *model, config);
    if (reference.empty()) {
      reference = out;
      continue;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i].label == reference[i].label);
      CHECK(std::abs(out[i].toxic_score - reference[i].toxic_score) <= 1e-6);
    }
  }
}

TEST_CASE("classify_batch: failures carry the batch index") {
  const std::vector<std::string> texts(10, "gg");
  ClassifierConfig config;
  config.batch_size = 3;
  try {
    classify_batch(texts, FailingClassifier(2), config);
    FAIL("no error");
  } catch (const ModelError& e) {
    CHECK(e.batch() == 2);
    CHECK(std::string(e.what()).find("kernel exploded") != std::string::npos);
  }
  CHECK_THROWS_AS(classify_batch(texts, WrongCountClassifier(), config), ModelError);
}

TEST_CASE("classifier config validation") {
  ClassifierConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.threshold = 1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.max_tokens = 1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("lexicon: annotated toxic text and empty text") {
  CHECK(lexicon().score_one("mother fucking noob") >= 0.5);
  CHECK(lexicon().score_one("") == 0.0);
  CHECK(lexicon().score_one("gg wp") == 0.0);
}

TEST_CASE("lexicon: case and punctuation invariance") {
  CHECK(lexicon().score_one("NOOB!!!") == lexicon().score_one("noob"));
  CHECK(lexicon().score_one("Shut... UP") == lexicon().score_one("shut up"));
  CHECK(lexicon().score_one("don\xE2\x80\x99t") == lexicon().score_one("dont"));
  CHECK(LexiconClassifier::words("K.Y.S, you're") == std::vector<std::string>{"k", "y", "s", "youre"});
}

TEST_CASE("lexicon: multi-word terms need adjacent words") {
  const LexiconClassifier clf(Lexicon{{"kill yourself", 1.0}, {"noob", 0.25}});
  CHECK(clf.score_one("go kill yourself") == 1.0);
  CHECK(clf.score_one("kill the yourself") == 0.0);
  CHECK(clf.score_one("noob noob") == doctest::Approx(0.5));
  CHECK(clf.score_one("noob noob noob noob noob") == 1.0);
}

TEST_CASE("lexicon: appending a term never lowers the score") {
  std::mt19937_64 gen(13);
  const auto texts = fuzz_texts(500, 99);
  std::vector<std::string> terms;
  for (const auto& [term, w] : LexiconClassifier::default_lexicon()) terms.push_back(term);
  for (const auto& t : texts) {
    const auto& term = terms[gen() % terms.size()];
    CHECK(lexicon().score_one(t + " " + term) >= lexicon().score_one(t));
  }
}

TEST_CASE("lexicon: loading and validation") {
  const auto path = std::filesystem::temp_directory_path() / "chattox_lexicon.json";
  {
    std::ofstream out(path);
    out << R"({"feeder": 0.7, "go next": 0.6})";
  }
  const auto clf = LexiconClassifier::load(path);
  CHECK(clf.score_one("FEEDER") == doctest::Approx(0.7));
  CHECK(clf.score_one("go next pls") == doctest::Approx(0.6));
  {
    std::ofstream out(path);
    out << R"({"feeder": "high"})";
  }
  CHECK_THROWS_AS(LexiconClassifier::load(path), LoadError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(LexiconClassifier::load(path), LoadError);
  CHECK_THROWS_AS(LexiconClassifier(Lexicon{}), LoadError);
  CHECK_THROWS_AS(LexiconClassifier(Lexicon{{"x", -1.0}}), LoadError);
  CHECK_THROWS_AS(LexiconClassifier(Lexicon{{"!!!", 1.0}}), LoadError);
}

TEST_CASE("oracle: known answers, conflicts and unknown texts") {
  const std::vector<std::string> texts{"gg", "noob", "gg"};
  const std::vector<Label> labels{Label::NonToxic, Label::Toxic, Label::Toxic};
  const OracleClassifier oracle(texts, labels);
  const std::vector<std::string> query{"noob", "gg"};
  CHECK(oracle.score(query) == std::vector<double>{1.0, 1.0});
  const std::vector<std::string> unknown{"hello"};
  CHECK_THROWS_AS(oracle.score(unknown), InvalidArgument);
  const std::vector<Label> short_labels{Label::Toxic};
  CHECK_THROWS_AS(OracleClassifier(texts, short_labels), InvalidArgument);
}

TEST_CASE("transformer: loads a binary head and reports metadata") {
  const auto model = tiny();
  const auto& info = model->info();
  CHECK(info.output_dim == 2);
  CHECK(info.input_names == std::vector<std::string>{"input_ids", "attention_mask"});
  CHECK_FALSE(info.quantized);
  CHECK(info.lowercase);
  CHECK(model->tokenizer() != nullptr);
  CHECK(model->max_tokens() == 192);
  CHECK(tiny("tiny_bert_quantized.onnx")->info().quantized);
  CHECK(tiny("tiny_bert_opset14_tt.onnx")->info().input_names.size() == 3);
}

TEST_CASE("transformer: six-output head is rejected") {
  try {
    tiny("six_label_head.onnx");
    FAIL("accepted a six-class head");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("not a binary toxicity head") != std::string::npos);
  }
}

TEST_CASE("transformer: missing or corrupt files") {
  try {
    tiny("nope.onnx");
    FAIL("loaded a missing file");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("nope.onnx") != std::string::npos);
  }
  const auto garbage = std::filesystem::temp_directory_path() / "chattox_garbage.onnx";
  {
    std::ofstream out(garbage, std::ios::binary);
    out << "this is not a protobuf";
  }
  CHECK_THROWS_AS(TransformerClassifier::load(garbage, data_path("model/tokenizer.json")), LoadError);
  std::filesystem::remove(garbage);
  CHECK_THROWS_AS(TransformerClassifier::load(data_path("model/tiny_bert.onnx"), data_path("model/none.json")),
                  LoadError);
}

TEST_CASE("transformer: probabilities match reference logits and sum to one") {
  const auto golden = test_support::read_json("model_golden.json");
  const auto texts = golden["texts"].get<std::vector<std::string>>();
  for (const char* file : {"tiny_bert.onnx", "tiny_bert_quantized.onnx"}) {
    const auto model = tiny(file);
    const auto logits = golden["models"][file];
    const auto probs = model->probabilities(texts);
    REQUIRE(probs.size() == texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const double l0 = logits[i][0], l1 = logits[i][1];
      const double want = 1.0 / (1.0 + std::exp(l0 - l1));
      CHECK(probs[i].first + probs[i].second == doctest::Approx(1.0).epsilon(1e-5));
      CHECK(std::abs(probs[i].second - want) <= 1e-4);
    }
  }
}

TEST_CASE("transformer: flags the caption line and the domain over-trigger example") {
  const auto model = tiny();
  const std::vector<std::string> texts{"i hear your trash", "what's a donkey doing here", "gg wp"};
  const auto out = classify_batch(texts, *model, {});
  CHECK(out[0].label == Label::Toxic);
  CHECK(out[1].label == Label::Toxic);
  CHECK(out[2].label == Label::NonToxic);
  CHECK(classify_batch(texts, *model, {}).at(0).toxic_score == out[0].toxic_score);
}
