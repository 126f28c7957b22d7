#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chattox/aggregate.hpp"
#include "chattox/classify.hpp"
#include "chattox/corpus.hpp"

namespace chattox {

enum class Granularity { Message, Grouped, Match };

std::string_view granularity_name(Granularity g) noexcept;
std::optional<Granularity> try_parse_granularity(std::string_view name) noexcept;

struct Split {
  std::vector<LabeledMessage> train;
  std::vector<LabeledMessage> test;
};

/// Per-class shuffle; each class contributes round(n_c * (1 - train_fraction))
/// items to the test side. Both sides keep input order. Throws
/// InvalidArgument on NonEnglish items, a missing class, or an empty side.
Split stratified_split(std::span<const LabeledMessage> dataset, double train_fraction, std::uint64_t seed);

/// Whole matches go to one side: n_train_matches shuffled matches train, the
/// rest test. Needs at least n_train_matches + 1 distinct matches.
Split match_split(std::span<const LabeledMessage> dataset, std::size_t n_train_matches, std::uint64_t seed);

/// Seeded permutation of 0..n-1. Uses its own bounded draw so results are
/// identical across standard libraries.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Positive class is Toxic. Undefined ratios are left empty rather than
/// coerced to a number.
struct MetricsReport {
  Granularity granularity = Granularity::Message;
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  ConfusionCounts confusion;
  std::uint64_t seed = 0;
};

/// Throws InvalidArgument when total() == 0.
MetricsReport metrics_from_counts(const ConfusionCounts& counts, Granularity granularity = Granularity::Message);

/// Pairs predictions and truths by index. Throws InvalidArgument on a length
/// mismatch, empty input, or a NonEnglish truth.
MetricsReport compute_metrics(std::span<const Prediction> predictions, std::span<const Label> truths,
                              Granularity granularity = Granularity::Message);

/// {"granularity","acc","prec","rec","f1","confusion","seed"}, ratios rounded
/// to 4 decimals.
std::string report_json(const MetricsReport& report);
void write_report_table(std::ostream& out, std::span<const MetricsReport> reports);

enum class TranscriptMode { Chunk, Truncate };

struct EvalConfig {
  Granularity granularity = Granularity::Message;
  GroupingConfig grouping;
  ClassifierConfig classifier;
  TranscriptMode transcript_mode = TranscriptMode::Chunk;
  std::optional<std::size_t> stride;  // defaults to max_tokens / 2
  std::uint64_t seed = 0;             // echoed into the report
};

/// One classified unit: message, utterance or transcript.
struct EvalUnit {
  std::string text;
  Label truth = Label::NonToxic;
  double score = 0.0;
  Label predicted = Label::NonToxic;
  std::size_t chunks = 1;
};

struct EvalResult {
  MetricsReport report;
  std::vector<EvalUnit> units;
};

/// Drops NonEnglish messages, aggregates at the configured granularity,
/// classifies and scores. Above message level, with chunk mode and a
/// tokenizer-bounded classifier, long texts are split by chunk_for_model and
/// a unit's score is the maximum over its chunks.
EvalResult evaluate(const Classifier& classifier, std::span<const LabeledMessage> dataset, const EvalConfig& config);

}  // namespace chattox
