#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "chattox/corpus.hpp"
#include "chattox/onnx/model.hpp"
#include "chattox/tokenizer.hpp"

namespace chattox {

struct ClassifierConfig {
  std::size_t max_tokens = 192;
  std::size_t batch_size = 16;
  double threshold = 0.5;  // on the toxic-class probability

  /// Throws InvalidArgument when a field is out of range.
  void validate() const;
};

struct Prediction {
  double toxic_score = 0.0;
  Label label = Label::NonToxic;  // Toxic or NonToxic
  std::size_t text_ref = 0;       // index into the classified input
};

/// Scores texts for toxicity. Implementations are immutable once built and
/// may be shared between threads. A text's score must not depend on the
/// other texts passed in the same call.
class Classifier {
 public:
  virtual ~Classifier() = default;

  /// Toxic-class probability for each text, in input order.
  virtual std::vector<double> score(std::span<const std::string> texts) const = 0;

  /// Short backend description for reports.
  virtual std::string name() const = 0;

  /// Tokenizer bounding the model input, or nullptr when input length is
  /// unbounded.
  virtual const WordPieceTokenizer* tokenizer() const noexcept { return nullptr; }
};

/// Scores `texts` in batches of `config.batch_size` and thresholds them.
/// A failing batch is reported as ModelError carrying the batch index.
std::vector<Prediction> classify_batch(std::span<const std::string> texts, const Classifier& classifier,
                                       const ClassifierConfig& config);

// ---------------------------------------------------------------------------

/// Weighted term list. Terms may span several words ("kill yourself").
using Lexicon = std::map<std::string, double, std::less<>>;

/// Deterministic keyword baseline. Text and terms are lowercased and
/// punctuation is treated as a word break; every occurrence of a term adds
/// its weight and the sum is capped at 1.
class LexiconClassifier final : public Classifier {
 public:
  /// Throws LoadError on an empty lexicon, a negative or non-finite weight,
  /// or a term with no words.
  explicit LexiconClassifier(const Lexicon& lexicon);

  /// Reads a JSON object {"term": weight, ...}.
  static LexiconClassifier load(const std::filesystem::path& path);
  static const Lexicon& default_lexicon();

  double score_one(std::string_view text) const;
  std::vector<double> score(std::span<const std::string> texts) const override;
  std::string name() const override { return "lexicon"; }

  /// Lowercased words with punctuation removed.
  static std::vector<std::string> words(std::string_view text);

 private:
  // first word -> (remaining words, weight)
  std::unordered_map<std::string, std::vector<std::pair<std::vector<std::string>, double>>> terms_;
};

/// Looks texts up in a table of known answers: 1 for Toxic, 0 otherwise.
/// Texts that occur with both labels score 1. Unknown texts are an error.
class OracleClassifier final : public Classifier {
 public:
  OracleClassifier(std::span<const std::string> texts, std::span<const Label> labels);

  std::vector<double> score(std::span<const std::string> texts) const override;
  std::string name() const override { return "oracle"; }

 private:
  std::unordered_map<std::string, bool> toxic_;
};

struct ModelInfo {
  std::vector<std::string> input_names;
  bool quantized = false;
  std::int64_t opset = 0;
  std::size_t output_dim = 0;
  std::size_t vocab_size = 0;
  bool lowercase = true;
};

/// Fine-tuned BERT-style sequence classifier run from an ONNX graph. Inputs
/// are padded per call to the longest sequence; the toxic probability is the
/// softmax of logit column 1.
class TransformerClassifier final : public Classifier {
 public:
  /// Throws LoadError for missing or corrupt files, an input signature other
  /// than input_ids + attention_mask (+ token_type_ids), or an output that is
  /// not a [batch, 2] binary head.
  static std::shared_ptr<const TransformerClassifier> load(const std::filesystem::path& model_path,
                                                          const std::filesystem::path& tokenizer_path,
                                                          const ClassifierConfig& config = {});

  std::vector<double> score(std::span<const std::string> texts) const override;
  std::string name() const override;
  const WordPieceTokenizer* tokenizer() const noexcept override { return &tokenizer_; }

  /// Both class probabilities per text (non-toxic, toxic).
  std::vector<std::pair<double, double>> probabilities(std::span<const std::string> texts) const;

  const ModelInfo& info() const noexcept { return info_; }
  std::size_t max_tokens() const noexcept { return max_tokens_; }

 private:
  TransformerClassifier(onnx::OnnxModel model, WordPieceTokenizer tokenizer, std::size_t max_tokens,
                        std::filesystem::path path);

  std::vector<std::pair<double, double>> run_ids(const std::vector<std::vector<TokenId>>& rows) const;

  onnx::OnnxModel model_;
  WordPieceTokenizer tokenizer_;
  std::size_t max_tokens_;
  std::filesystem::path path_;
  ModelInfo info_;
  bool int32_inputs_ = false;
};

}  // namespace chattox
