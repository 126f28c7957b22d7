#include "chattox/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "chattox/errors.hpp"
#include "json.hpp"

namespace chattox {

namespace {

using json = nlohmann::json;

// Uniform draw in [0, bound) by rejection.
std::uint64_t bounded(std::mt19937_64& gen, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = gen();
    if (r >= threshold) return r % bound;
  }
}

template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& gen) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[bounded(gen, i)]);
}

Split take(std::span<const LabeledMessage> dataset, const std::vector<bool>& in_test) {
  Split out;
  for (std::size_t i = 0; i < dataset.size(); ++i) (in_test[i] ? out.test : out.train).push_back(dataset[i]);
  return out;
}

double round4(double x) { return std::round(x * 1e4) / 1e4; }

json ratio(const std::optional<double>& v) { return v ? json(round4(*v)) : json(nullptr); }

std::string fixed4(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << *v;
  return s.str();
}

}  // namespace

std::string_view granularity_name(Granularity g) noexcept {
  switch (g) {
    case Granularity::Message: return "message";
    case Granularity::Grouped: return "grouped";
    case Granularity::Match: return "match";
  }
  return "message";
}

std::optional<Granularity> try_parse_granularity(std::string_view name) noexcept {
  if (name == "message") return Granularity::Message;
  if (name == "grouped") return Granularity::Grouped;
  if (name == "match") return Granularity::Match;
  return std::nullopt;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  std::mt19937_64 gen(seed);
  shuffle(v, gen);
  return v;
}

Split stratified_split(std::span<const LabeledMessage> dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train fraction must lie in (0, 1)");
  std::vector<std::size_t> toxic, benign;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    switch (dataset[i].label) {
      case Label::Toxic: toxic.push_back(i); break;
      case Label::NonToxic: benign.push_back(i); break;
      case Label::NonEnglish:
        throw InvalidArgument("message " + dataset[i].message.message_id + " is non-English; filter the dataset first");
    }
  }
  if (toxic.empty() || benign.empty()) throw InvalidArgument("stratified split needs both toxic and non-toxic messages");

  std::mt19937_64 gen(seed);
  std::vector<bool> in_test(dataset.size(), false);
  for (auto* cls : {&toxic, &benign}) {
    shuffle(*cls, gen);
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(cls->size()) * (1.0 - train_fraction)));
    for (std::size_t k = 0; k < n_test; ++k) in_test[(*cls)[k]] = true;
  }
  Split out = take(dataset, in_test);
  if (out.train.empty() || out.test.empty())
    throw InvalidArgument("split leaves one side empty (" + std::to_string(dataset.size()) + " messages)");
  return out;
}

Split match_split(std::span<const LabeledMessage> dataset, std::size_t n_train_matches, std::uint64_t seed) {
  std::vector<std::string> matches;
  std::map<std::string, std::size_t, std::less<>> index;
  for (const auto& item : dataset)
    if (index.try_emplace(item.message.match_id, matches.size()).second) matches.push_back(item.message.match_id);
  if (n_train_matches < 1) throw InvalidArgument("at least one training match is required");
  if (matches.size() < n_train_matches + 1)
    throw InvalidArgument("match split needs at least " + std::to_string(n_train_matches + 1) + " matches, found " +
                          std::to_string(matches.size()));
  const auto perm = seeded_permutation(matches.size(), seed);
  std::vector<bool> match_in_test(matches.size(), true);
  for (std::size_t k = 0; k < n_train_matches; ++k) match_in_test[perm[k]] = false;
  std::vector<bool> in_test(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) in_test[i] = match_in_test[index.find(dataset[i].message.match_id)->second];
  return take(dataset, in_test);
}

MetricsReport metrics_from_counts(const ConfusionCounts& c, Granularity granularity) {
  if (c.total() == 0) throw InvalidArgument("metrics need at least one item");
  MetricsReport r;
  r.granularity = granularity;
  r.confusion = c;
  const auto d = [](std::uint64_t v) { return static_cast<double>(v); };
  r.accuracy = d(c.tp + c.tn) / d(c.total());
  if (c.tp + c.fp > 0) r.precision = d(c.tp) / d(c.tp + c.fp);
  if (c.tp + c.fn > 0) r.recall = d(c.tp) / d(c.tp + c.fn);
  if (r.precision && r.recall) r.f1 = 2.0 * d(c.tp) / d(2 * c.tp + c.fp + c.fn);
  return r;
}

MetricsReport compute_metrics(std::span<const Prediction> predictions, std::span<const Label> truths,
                              Granularity granularity) {
  if (predictions.size() != truths.size())
    throw InvalidArgument("got " + std::to_string(predictions.size()) + " predictions for " +
                          std::to_string(truths.size()) + " truths");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] == Label::NonEnglish) throw InvalidArgument("truth " + std::to_string(i) + " is non-English");
    const bool actual = truths[i] == Label::Toxic;
    const bool flagged = predictions[i].label == Label::Toxic;
    if (actual && flagged) ++c.tp;
    else if (flagged) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return metrics_from_counts(c, granularity);
}

std::string report_json(const MetricsReport& r) {
  json obj;
  obj["granularity"] = granularity_name(r.granularity);
  obj["acc"] = round4(r.accuracy);
  obj["prec"] = ratio(r.precision);
  obj["rec"] = ratio(r.recall);
  obj["f1"] = ratio(r.f1);
  obj["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}};
  obj["seed"] = r.seed;
  return obj.dump();
}

void write_report_table(std::ostream& out, std::span<const MetricsReport> reports) {
  const char* header[] = {"granularity", "acc", "prec", "rec", "f1", "tp", "fp", "fn", "tn", "seed"};
  std::vector<std::vector<std::string>> rows;
  rows.emplace_back(std::begin(header), std::end(header));
  for (const auto& r : reports) {
    rows.push_back({std::string(granularity_name(r.granularity)), fixed4(r.accuracy), fixed4(r.precision),
                    fixed4(r.recall), fixed4(r.f1), std::to_string(r.confusion.tp), std::to_string(r.confusion.fp),
                    std::to_string(r.confusion.fn), std::to_string(r.confusion.tn), std::to_string(r.seed)});
  }
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0) out << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      else out << "  " << std::right << std::setw(static_cast<int>(width[c])) << row[c];
    }
    out << '\n';
  }
}

EvalResult evaluate(const Classifier& classifier, std::span<const LabeledMessage> dataset, const EvalConfig& config) {
  config.classifier.validate();
  const auto english = english_only(dataset);

  EvalResult result;
  auto& units = result.units;
  switch (config.granularity) {
    case Granularity::Message:
      for (const auto& item : english) units.push_back({item.message.text, item.label});
      break;
    case Granularity::Grouped:
      for (auto& u : group_messages(english, config.grouping)) units.push_back({std::move(u.text), u.label});
      break;
    case Granularity::Match:
      for (auto& t : match_transcripts(english)) units.push_back({std::move(t.text), t.label});
      break;
  }

  // texts actually sent to the classifier, and the unit each belongs to
  std::vector<std::string> texts;
  std::vector<std::size_t> owner;
  const WordPieceTokenizer* tokenizer = classifier.tokenizer();
  const bool windowed = config.granularity != Granularity::Message && tokenizer != nullptr;
  const bool truncate = config.transcript_mode == TranscriptMode::Truncate;
  const std::size_t max_tokens = config.classifier.max_tokens;
  const std::size_t stride = config.stride.value_or(std::max<std::size_t>(1, max_tokens / 2));
  for (std::size_t u = 0; u < units.size(); ++u) {
    if (windowed) {
      // truncation keeps only the first window
      auto chunks = chunk_for_model(units[u].text, *tokenizer, max_tokens, stride);
      if (truncate) chunks.resize(1);
      units[u].chunks = chunks.size();
      for (auto& c : chunks) {
        texts.push_back(std::move(c.text));
        owner.push_back(u);
      }
    } else {
      texts.push_back(units[u].text);
      owner.push_back(u);
    }
  }

  const auto predictions = classify_batch(texts, classifier, config.classifier);
  for (auto& u : units) u.score = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    auto& u = units[owner[i]];
    u.score = std::max(u.score, predictions[i].toxic_score);
  }
  std::vector<Prediction> pooled;
  std::vector<Label> truths;
  pooled.reserve(units.size());
  for (std::size_t u = 0; u < units.size(); ++u) {
    units[u].predicted = units[u].score >= config.classifier.threshold ? Label::Toxic : Label::NonToxic;
    pooled.push_back({units[u].score, units[u].predicted, u});
    truths.push_back(units[u].truth);
  }
  result.report = compute_metrics(pooled, truths, config.granularity);
  result.report.seed = config.seed;
  return result;
}

}  // namespace chattox
