#include "chattox/aggregate.hpp"

#include <cmath>
#include <map>
#include <ostream>
#include <set>

#include "chattox/errors.hpp"
#include "json.hpp"

namespace chattox {

namespace {

using json = nlohmann::json;

std::string player_key(const ChatMessage& m) { return m.player_id ? *m.player_id : std::string(kUnknownPlayer); }

// Throws unless matches are contiguous, seq strictly increases per match and
// no NonEnglish message is present.
void check_input(std::span<const LabeledMessage> messages) {
  std::set<std::string, std::less<>> closed;
  const ChatMessage* prev = nullptr;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const auto& item = messages[i];
    const auto& m = item.message;
    if (item.label == Label::NonEnglish)
      throw InvalidArgument("message " + m.message_id + " is non-English; filter the dataset first");
    if (prev && prev->match_id != m.match_id) {
      closed.insert(prev->match_id);
      if (closed.count(m.match_id))
        throw InvalidArgument("match " + m.match_id + " is not contiguous (message " + m.message_id + ")");
    } else if (prev && m.seq <= prev->seq) {
      throw InvalidArgument("messages of match " + m.match_id + " are not sorted by seq (message " + m.message_id +
                            ")");
    }
    prev = &m;
  }
}

std::string join_members(const std::string& a, const std::string& b) { return a + ' ' + b; }

}  // namespace

void GroupingConfig::validate() const {
  if (!(std::isfinite(gap_s) && gap_s > 0.0)) throw InvalidArgument("gap_s must be finite and positive");
  if (fallback_run_len < 1) throw InvalidArgument("fallback_run_len must be at least 1");
}

std::vector<Utterance> group_messages(std::span<const LabeledMessage> messages, const GroupingConfig& config) {
  config.validate();
  check_input(messages);
  std::vector<Utterance> out;
  std::map<std::string, std::size_t, std::less<>> open;  // player -> index into out, current match only
  std::string current_match;
  std::optional<std::string> last_speaker;

  for (std::size_t i = 0; i < messages.size(); ++i) {
    const auto& item = messages[i];
    const auto& m = item.message;
    if (i == 0 || m.match_id != current_match) {
      open.clear();
      current_match = m.match_id;
      last_speaker.reset();
    }
    const std::string player = player_key(m);

    bool join = false;
    auto it = open.find(player);
    if (it != open.end()) {
      const Utterance& u = out[it->second];
      if (u.last_t && m.timestamp_s) {
        join = *m.timestamp_s - *u.last_t <= config.gap_s;
      } else {
        join = u.member_ids.size() < config.fallback_run_len && last_speaker == player;
      }
    }

    if (join) {
      Utterance& u = out[it->second];
      const bool all_timed = u.first_t.has_value() && m.timestamp_s.has_value();
      u.member_ids.push_back(m.message_id);
      u.text = join_members(u.text, m.text);
      if (item.label == Label::Toxic) u.label = Label::Toxic;
      u.last_seq = m.seq;
      if (all_timed) {
        u.last_t = m.timestamp_s;
      } else {
        u.first_t.reset();
        u.last_t.reset();
      }
    } else {
      Utterance u;
      u.match_id = m.match_id;
      u.player_id = player;
      u.member_ids.push_back(m.message_id);
      u.text = m.text;
      u.label = item.label == Label::Toxic ? Label::Toxic : Label::NonToxic;
      u.first_seq = u.last_seq = m.seq;
      u.first_t = u.last_t = m.timestamp_s;
      open[player] = out.size();
      out.push_back(std::move(u));
    }
    last_speaker = player;
  }
  return out;
}

std::vector<MatchTranscript> match_transcripts(std::span<const LabeledMessage> messages) {
  check_input(messages);
  std::vector<MatchTranscript> out;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& item : messages) {
    const auto& m = item.message;
    const std::string player = player_key(m);
    auto [it, inserted] = index.try_emplace({m.match_id, player}, out.size());
    if (inserted) {
      MatchTranscript t;
      t.match_id = m.match_id;
      t.player_id = player;
      out.push_back(std::move(t));
    }
    MatchTranscript& t = out[it->second];
    t.text = t.member_ids.empty() ? m.text : join_members(t.text, m.text);
    t.member_ids.push_back(m.message_id);
    if (item.label == Label::Toxic) t.label = Label::Toxic;
  }
  return out;
}

std::vector<TextChunk> chunk_for_model(const std::string& text, const WordPieceTokenizer& tokenizer,
                                       std::size_t max_tokens, std::size_t stride) {
  if (max_tokens < 2) throw InvalidArgument("max_tokens must be at least 2");
  if (stride == 0 || stride > max_tokens) throw InvalidArgument("stride must lie in [1, max_tokens]");
  const auto tokens = tokenizer.encode_content(text);
  const std::size_t window = max_tokens - 2;
  if (tokens.size() <= window) return {TextChunk{text, 0, tokens.size()}};
  if (window == 0) throw InvalidArgument("max_tokens of 2 leaves no room for content tokens");

  const std::size_t step = std::min(stride, window);
  std::vector<TextChunk> out;
  for (std::size_t begin = 0;; begin += step) {
    const std::size_t end = std::min(begin + window, tokens.size());
    const std::span<const TokenId> piece(tokens.data() + begin, end - begin);
    out.push_back({tokenizer.decode(piece), begin, end});
    if (end == tokens.size()) break;
  }
  return out;
}

namespace {

json base_record(const std::string& match, const std::string& player, const std::vector<std::string>& members,
                 const std::string& text, Label label) {
  json obj;
  obj["id"] = members.empty() ? std::string() : members.front();
  obj["match"] = match;
  obj["player"] = player == kUnknownPlayer ? json(nullptr) : json(player);
  obj["text"] = text;
  obj["label"] = label_name(label);
  obj["members"] = members;
  return obj;
}

}  // namespace

void write_utterances(std::ostream& out, std::span<const Utterance> utterances) {
  for (const auto& u : utterances) {
    json obj = base_record(u.match_id, u.player_id, u.member_ids, u.text, u.label);
    obj["t"] = u.first_t ? json(*u.first_t) : json(nullptr);
    obj["seq"] = u.first_seq;
    out << obj.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

void write_transcripts(std::ostream& out, std::span<const MatchTranscript> transcripts) {
  for (const auto& t : transcripts) {
    json obj = base_record(t.match_id, t.player_id, t.member_ids, t.text, t.label);
    obj["t"] = nullptr;
    out << obj.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

}  // namespace chattox
