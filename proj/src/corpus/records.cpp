#include "records.hpp"

#include <cmath>

#include "chattox/errors.hpp"

namespace chattox::detail {

json parse_json_object(const std::string& line, std::size_t number) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), number);
  }
  if (!obj.is_object()) throw ParseError("record is not a JSON object", number);
  return obj;
}

std::string id_field(const json& obj, const char* key, std::size_t number) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) throw ParseError(std::string("missing \"") + key + "\"", number);
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw ParseError(std::string("\"") + key + "\" must be a string", number);
}

std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t number) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw ParseError(std::string("\"") + key + "\" must be a string or null", number);
}

std::optional<double> optional_time(const json& obj, const char* key, std::size_t number) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw ParseError(std::string("\"") + key + "\" must be a number or null", number);
  const double t = it->get<double>();
  if (!std::isfinite(t) || t < 0.0) throw ParseError(std::string("\"") + key + "\" must be >= 0", number);
  return t;
}

std::optional<std::uint64_t> optional_seq(const json& obj, const char* key, std::size_t number) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<long long>() >= 0))
    throw ParseError(std::string("\"") + key + "\" must be a non-negative integer", number);
  return it->get<std::uint64_t>();
}

std::string text_field(const json& obj, const char* key, std::size_t number) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing \"") + key + "\"", number);
  if (!it->is_string()) throw ParseError(std::string("\"") + key + "\" must be a string", number);
  return it->get<std::string>();
}

void ExtraFieldWarner::check(const json& obj, std::size_t number) {
  for (const auto& [key, value] : obj.items()) {
    if (known_.count(key) || warned_.count(key)) continue;
    warned_.insert(key);
    if (report_)
      report_->warnings.push_back("line " + std::to_string(number) + ": ignoring unknown field \"" +
                                  key + "\"");
  }
}

void MessageSequencer::add(ChatMessage& message, std::optional<std::uint64_t> seq,
                           std::size_t number) {
  if (!ids_.insert(message.message_id).second)
    throw ParseError("duplicate message id \"" + message.message_id + "\"", number);

  auto& state = matches_[message.match_id];
  if (seq) {
    if (state.last_seq && *seq <= *state.last_seq)
      throw ParseError("seq " + std::to_string(*seq) + " is not increasing within match \"" +
                           message.match_id + "\"",
                       number);
    message.seq = *seq;
  } else {
    message.seq = state.next_seq;
  }
  state.last_seq = message.seq;
  state.next_seq = message.seq + 1;

  if (message.timestamp_s) {
    if (state.last_time && *message.timestamp_s < *state.last_time)
      throw ParseError("timestamp goes backwards within match \"" + message.match_id + "\"", number);
    state.last_time = message.timestamp_s;
  }
}

}  // namespace chattox::detail
