#pragma once

// Shared helpers for the line-oriented corpus importers.

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>

#include <json.hpp>

#include "chattox/corpus.hpp"

namespace chattox::detail {

using nlohmann::json;

/// Calls `fn(line_number, line)` for every non-blank line, after UTF-8
/// sanitisation. Line numbers are 1-based physical lines.
template <class Fn>
void for_each_line(std::istream& in, ParseReport* report, Fn&& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (number == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::size_t replaced = sanitize_utf8(line);
    if (report) report->replaced_sequences += replaced;
    fn(number, line);
  }
}

json parse_json_object(const std::string& line, std::size_t number);

/// String field that may also be written as an integer (numeric ids).
std::string id_field(const json& obj, const char* key, std::size_t number);
std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t number);
std::optional<double> optional_time(const json& obj, const char* key, std::size_t number);
std::optional<std::uint64_t> optional_seq(const json& obj, const char* key, std::size_t number);
std::string text_field(const json& obj, const char* key, std::size_t number);

/// Records a warning once per unexpected field name.
class ExtraFieldWarner {
 public:
  ExtraFieldWarner(std::set<std::string> known, ParseReport* report)
      : known_(std::move(known)), report_(report) {}

  void check(const json& obj, std::size_t number);

 private:
  std::set<std::string> known_;
  std::set<std::string> warned_;
  ParseReport* report_;
};

/// Assigns and validates `seq`, uniqueness of ids and timestamp ordering.
class MessageSequencer {
 public:
  /// `seq` is the value given in the record, if any.
  void add(ChatMessage& message, std::optional<std::uint64_t> seq, std::size_t number);

 private:
  struct MatchState {
    std::uint64_t next_seq = 0;
    std::optional<std::uint64_t> last_seq;
    std::optional<double> last_time;
  };
  std::unordered_set<std::string> ids_;
  std::map<std::string, MatchState, std::less<>> matches_;
};

}  // namespace chattox::detail
