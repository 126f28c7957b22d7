#include "chattox/classify.hpp"

#include <cmath>
#include <fstream>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "chattox/errors.hpp"
#include "json.hpp"

namespace chattox {

void ClassifierConfig::validate() const {
  if (max_tokens < 2) throw InvalidArgument("max_tokens must be at least 2");
  if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("threshold must lie in (0, 1)");
}

std::vector<Prediction> classify_batch(std::span<const std::string> texts, const Classifier& classifier,
                                       const ClassifierConfig& config) {
  config.validate();
  std::vector<Prediction> out;
  out.reserve(texts.size());
  std::size_t batch = 0;
  for (std::size_t begin = 0; begin < texts.size(); begin += config.batch_size, ++batch) {
    const auto chunk = texts.subspan(begin, std::min(config.batch_size, texts.size() - begin));
    std::vector<double> scores;
    try {
      scores = classifier.score(chunk);
    } catch (const ModelError&) {
      throw;
    } catch (const std::exception& e) {
      throw ModelError(e.what(), batch);
    }
    if (scores.size() != chunk.size())
      throw ModelError("classifier returned " + std::to_string(scores.size()) + " scores for " +
                           std::to_string(chunk.size()) + " texts",
                       batch);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) throw ModelError("score outside [0, 1]", batch);
      out.push_back({scores[i], scores[i] >= config.threshold ? Label::Toxic : Label::NonToxic, begin + i});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// lexicon

std::vector<std::string> LexiconClassifier::words(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  const auto* s = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto length = static_cast<std::int32_t>(text.size());
  std::int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) c = 0xFFFD;
    if (c == '\'' || c == 0x2019) continue;  // "don't" -> "dont"
    if (u_isUWhiteSpace(c) || u_ispunct(c)) {
      flush();
      continue;
    }
    c = u_tolower(c);
    char buf[U8_MAX_LENGTH];
    std::int32_t n = 0;
    U8_APPEND_UNSAFE(buf, n, c);
    current.append(buf, static_cast<std::size_t>(n));
  }
  flush();
  return out;
}

LexiconClassifier::LexiconClassifier(const Lexicon& lexicon) {
  if (lexicon.empty()) throw LoadError("lexicon is empty");
  for (const auto& [term, weight] : lexicon) {
    if (!std::isfinite(weight) || weight < 0.0) throw LoadError("lexicon weight for '" + term + "' must be finite and non-negative");
    auto w = words(term);
    if (w.empty()) throw LoadError("lexicon term '" + term + "' has no words");
    const std::string head = w.front();
    w.erase(w.begin());
    terms_[head].emplace_back(std::move(w), weight);
  }
}

LexiconClassifier LexiconClassifier::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open lexicon " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw LoadError(path.string() + ": lexicon must be a JSON object");
  Lexicon lexicon;
  for (const auto& [term, weight] : j.items()) {
    if (!weight.is_number()) throw LoadError(path.string() + ": weight for '" + term + "' is not a number");
    lexicon[term] = weight.get<double>();
  }
  return LexiconClassifier(lexicon);
}

const Lexicon& LexiconClassifier::default_lexicon() {
  static const Lexicon lexicon{
      {"asshole", 0.8},     {"bitch", 0.7},    {"cancer", 0.4},       {"dumb", 0.4},
      {"fked", 0.6},        {"fuck", 0.4},     {"fuck you", 0.6},     {"fucking", 0.6},
      {"garbage", 0.5},     {"idiot", 0.6},    {"kill yourself", 1.0}, {"kys", 1.0},
      {"loser", 0.5},       {"moron", 0.6},    {"noob", 0.5},         {"retard", 0.9},
      {"retarded", 0.9},    {"scumbag", 0.8},  {"scumbags", 0.8},     {"shit", 0.4},
      {"shut up", 0.4},     {"slut", 0.8},     {"so bad", 0.5},       {"stfu", 0.6},
      {"stupid", 0.5},      {"suck", 0.5},     {"trash", 0.5},        {"uninstall", 0.5},
      {"useless", 0.5},     {"whore", 0.9},
  };
  return lexicon;
}

double LexiconClassifier::score_one(std::string_view text) const {
  const auto w = words(text);
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto it = terms_.find(w[i]);
    if (it == terms_.end()) continue;
    for (const auto& [rest, weight] : it->second) {
      if (i + 1 + rest.size() > w.size()) continue;
      if (std::equal(rest.begin(), rest.end(), w.begin() + static_cast<std::ptrdiff_t>(i) + 1)) total += weight;
    }
  }
  return std::min(total, 1.0);
}

std::vector<double> LexiconClassifier::score(std::span<const std::string> texts) const {
  std::vector<double> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(score_one(t));
  return out;
}

// ---------------------------------------------------------------------------
// oracle

OracleClassifier::OracleClassifier(std::span<const std::string> texts, std::span<const Label> labels) {
  if (texts.size() != labels.size()) throw InvalidArgument("oracle needs one label per text");
  for (std::size_t i = 0; i < texts.size(); ++i) toxic_[texts[i]] = toxic_[texts[i]] || labels[i] == Label::Toxic;
}

std::vector<double> OracleClassifier::score(std::span<const std::string> texts) const {
  std::vector<double> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    auto it = toxic_.find(t);
    if (it == toxic_.end()) throw InvalidArgument("oracle has no answer for '" + t + "'");
    out.push_back(it->second ? 1.0 : 0.0);
  }
  return out;
}

}  // namespace chattox
