#include <cmath>
#include <istream>
#include <iterator>
#include <map>

#include "chattox/corpus.hpp"
#include "chattox/errors.hpp"
#include "records.hpp"

namespace chattox {

std::string_view label_name(Label label) noexcept {
  switch (label) {
    case Label::Toxic:
      return "toxic";
    case Label::NonToxic:
      return "nontoxic";
    case Label::NonEnglish:
      return "nonenglish";
  }
  return "nontoxic";
}

std::optional<Label> try_parse_label(std::string_view token) noexcept {
  if (token == "toxic") return Label::Toxic;
  if (token == "nontoxic") return Label::NonToxic;
  if (token == "nonenglish") return Label::NonEnglish;
  return std::nullopt;
}

namespace {

using detail::json;

std::vector<ChatMessage> parse_jsonl(std::istream& in, ParseReport* report) {
  std::vector<ChatMessage> out;
  detail::MessageSequencer sequencer;
  detail::ExtraFieldWarner warner({"id", "match", "player", "t", "text", "seq"}, report);
  detail::for_each_line(in, report, [&](std::size_t number, const std::string& line) {
    const json obj = detail::parse_json_object(line, number);
    warner.check(obj, number);
    ChatMessage m;
    m.message_id = detail::id_field(obj, "id", number);
    m.match_id = detail::id_field(obj, "match", number);
    m.player_id = detail::optional_string(obj, "player", number);
    m.timestamp_s = detail::optional_time(obj, "t", number);
    m.text = detail::text_field(obj, "text", number);
    sequencer.add(m, detail::optional_seq(obj, "seq", number), number);
    out.push_back(std::move(m));
  });
  return out;
}

struct CsvRecord {
  std::size_t line = 0;  // line on which the record starts
  std::vector<std::string> fields;
};

// RFC 4180: quoted fields may contain separators, doubled quotes and newlines.
std::vector<CsvRecord> read_csv(std::istream& in) {
  const std::string data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  std::vector<CsvRecord> records;
  CsvRecord current;
  std::string field;
  std::size_t line = 1;
  bool quoted = false;
  bool field_was_quoted = false;
  bool record_has_content = false;
  current.line = 1;

  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    if (record_has_content) records.push_back(std::move(current));
    current = CsvRecord{};
    record_has_content = false;
  };

  std::size_t i = 0;
  if (data.starts_with("\xEF\xBB\xBF")) i = 3;
  for (; i < data.size(); ++i) {
    const char c = data[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_was_quoted) throw ParseError("unexpected quote in field", line);
        quoted = true;
        field_was_quoted = true;
        record_has_content = true;
        break;
      case ',':
        record_has_content = true;
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        current.line = line;
        break;
      default:
        record_has_content = true;
        field += c;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", current.line);
  end_record();
  return records;
}

std::vector<ChatMessage> parse_csv(std::istream& in, ParseReport* report) {
  auto records = read_csv(in);
  std::vector<ChatMessage> out;
  if (records.empty()) return out;

  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < records[0].fields.size(); ++i) column[records[0].fields[i]] = i;
  for (const char* required : {"id", "match", "text"})
    if (!column.count(required))
      throw ParseError(std::string("CSV header lacks column \"") + required + "\"", records[0].line);
  for (const auto& [name, index] : column) {
    if (name != "id" && name != "match" && name != "player" && name != "t" && name != "text" &&
        name != "seq" && report)
      report->warnings.push_back("ignoring unknown CSV column \"" + name + "\"");
  }

  detail::MessageSequencer sequencer;
  for (std::size_t r = 1; r < records.size(); ++r) {
    auto& rec = records[r];
    if (rec.fields.size() != records[0].fields.size())
      throw ParseError("expected " + std::to_string(records[0].fields.size()) + " fields, got " +
                           std::to_string(rec.fields.size()),
                       rec.line);
    for (auto& f : rec.fields) {
      const std::size_t replaced = sanitize_utf8(f);
      if (report) report->replaced_sequences += replaced;
    }

    auto cell = [&](const char* name) -> const std::string* {
      auto it = column.find(name);
      return it == column.end() ? nullptr : &rec.fields[it->second];
    };
    ChatMessage m;
    m.message_id = *cell("id");
    m.match_id = *cell("match");
    if (m.message_id.empty()) throw ParseError("empty \"id\"", rec.line);
    if (const auto* p = cell("player"); p && !p->empty()) m.player_id = *p;
    if (const auto* t = cell("t"); t && !t->empty()) {
      std::size_t used = 0;
      double value = 0;
      try {
        value = std::stod(*t, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != t->size() || !std::isfinite(value) || value < 0)
        throw ParseError("\"t\" must be a non-negative number", rec.line);
      m.timestamp_s = value;
    }
    std::optional<std::uint64_t> seq;
    if (const auto* s = cell("seq"); s && !s->empty()) {
      if (s->find_first_not_of("0123456789") != std::string::npos)
        throw ParseError("\"seq\" must be a non-negative integer", rec.line);
      seq = std::stoull(*s);
    }
    m.text = *cell("text");
    sequencer.add(m, seq, rec.line);
    out.push_back(std::move(m));
  }
  return out;
}

std::optional<Label> vote_from_json(const json& v) {
  if (v.is_string()) return try_parse_label(v.get<std::string>());
  if (v.is_number_integer()) {
    const auto n = v.get<long long>();
    if (n == 1) return Label::Toxic;
    if (n == 0) return Label::NonToxic;
  }
  return std::nullopt;
}

}  // namespace

std::vector<ChatMessage> parse_chatlog(std::istream& in, ChatlogFormat format, ParseReport* report) {
  return format == ChatlogFormat::Jsonl ? parse_jsonl(in, report) : parse_csv(in, report);
}

std::vector<AnnotationRecord> parse_annotations(std::istream& in, ParseReport* report) {
  std::vector<AnnotationRecord> out;
  detail::ExtraFieldWarner warner({"id", "votes", "text"}, report);
  detail::for_each_line(in, report, [&](std::size_t number, const std::string& line) {
    const json obj = detail::parse_json_object(line, number);
    warner.check(obj, number);
    AnnotationRecord rec;
    rec.message_id = detail::id_field(obj, "id", number);
    auto votes = obj.find("votes");
    if (votes == obj.end() || !votes->is_array()) throw ParseError("\"votes\" must be an array", number);
    if (votes->empty()) throw ParseError("\"votes\" is empty", number);
    for (const auto& v : *votes) {
      auto label = vote_from_json(v);
      if (!label) throw ParseError("unknown vote category " + v.dump(), number);
      rec.votes.push_back(*label);
    }
    if (!out.empty() && out.front().votes.size() != rec.votes.size())
      throw ParseError("expected " + std::to_string(out.front().votes.size()) + " votes, got " +
                           std::to_string(rec.votes.size()),
                       number);
    out.push_back(std::move(rec));
  });
  return out;
}

}  // namespace chattox
