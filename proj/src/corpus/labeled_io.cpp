#include <cmath>
#include <fstream>
#include <set>

#include "chattox/corpus.hpp"
#include "chattox/errors.hpp"
#include "records.hpp"

namespace chattox {

namespace {

using detail::json;

constexpr const char* kSchemaName = "chattox/labeled";

}  // namespace

void write_labeled(std::ostream& out, std::span<const LabeledMessage> dataset) {
  out << json{{"schema", kSchemaName}, {"version", kLabeledSchemaVersion}}.dump() << '\n';
  for (const auto& item : dataset) {
    const auto& m = item.message;
    json obj;
    obj["id"] = m.message_id;
    obj["match"] = m.match_id;
    obj["player"] = m.player_id ? json(*m.player_id) : json(nullptr);
    obj["t"] = m.timestamp_s ? json(*m.timestamp_s) : json(nullptr);
    obj["seq"] = m.seq;
    obj["text"] = m.text;
    obj["label"] = label_name(item.label);
    out << obj.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

void write_labeled(const std::filesystem::path& path, std::span<const LabeledMessage> dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_labeled(out, dataset);
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<LabeledMessage> read_labeled(std::istream& in, ParseReport* report) {
  std::vector<LabeledMessage> out;
  detail::MessageSequencer sequencer;
  detail::ExtraFieldWarner warner({"id", "match", "player", "t", "seq", "text", "label"}, report);
  bool first = true;
  detail::for_each_line(in, report, [&](std::size_t number, const std::string& line) {
    const json obj = detail::parse_json_object(line, number);
    if (first) {
      first = false;
      if (obj.contains("schema")) {
        if (obj["schema"] != kSchemaName)
          throw FormatError("unrecognised schema " + obj["schema"].dump());
        const auto version = obj.value("version", json());
        if (!version.is_number_integer() || version.get<int>() != kLabeledSchemaVersion)
          throw FormatError("unsupported labeled schema version " + version.dump() + " (expected " +
                            std::to_string(kLabeledSchemaVersion) + ")");
        return;
      }
    }
    warner.check(obj, number);
    LabeledMessage item;
    auto& m = item.message;
    m.message_id = detail::id_field(obj, "id", number);
    m.match_id = detail::id_field(obj, "match", number);
    m.player_id = detail::optional_string(obj, "player", number);
    m.timestamp_s = detail::optional_time(obj, "t", number);
    m.text = detail::text_field(obj, "text", number);
    auto label = obj.find("label");
    if (label == obj.end() || !label->is_string()) throw ParseError("missing \"label\"", number);
    auto parsed = try_parse_label(label->get<std::string>());
    if (!parsed) throw ParseError("unknown label " + label->dump(), number);
    item.label = *parsed;
    sequencer.add(m, detail::optional_seq(obj, "seq", number), number);
    out.push_back(std::move(item));
  });
  return out;
}

std::vector<LabeledMessage> read_labeled(const std::filesystem::path& path, ParseReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read_labeled(in, report);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

std::vector<LabeledMessage> english_only(std::span<const LabeledMessage> dataset) {
  std::vector<LabeledMessage> out;
  out.reserve(dataset.size());
  for (const auto& m : dataset)
    if (m.label != Label::NonEnglish) out.push_back(m);
  return out;
}

CorpusStats corpus_stats(std::span<const LabeledMessage> dataset) {
  CorpusStats stats;
  std::set<std::string_view> matches;
  // Welford running mean / sum of squared deviations
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t english = 0;
  for (const auto& item : dataset) {
    ++stats.total;
    matches.insert(item.message.match_id);
    switch (item.label) {
      case Label::Toxic:
        ++stats.toxic;
        break;
      case Label::NonToxic:
        ++stats.non_toxic;
        break;
      case Label::NonEnglish:
        ++stats.non_english;
        continue;
    }
    const auto len = static_cast<double>(codepoint_count(item.message.text));
    ++english;
    const double delta = len - mean;
    mean += delta / static_cast<double>(english);
    m2 += delta * (len - mean);
  }
  stats.match_count = matches.size();
  stats.mean_len_chars = mean;
  if (english > 1) stats.std_len_chars = std::sqrt(m2 / static_cast<double>(english - 1));
  return stats;
}

}  // namespace chattox
