#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chattox/corpus.hpp"
#include "chattox/tokenizer.hpp"

namespace chattox {

/// Player key used when a message has no player id. All such messages in a
/// match are treated as one unknown speaker.
inline constexpr std::string_view kUnknownPlayer = "<unknown>";

struct GroupingConfig {
  double gap_s = 10.0;               // maximum gap to the previous member
  std::size_t fallback_run_len = 3;  // members per group when timestamps are missing

  void validate() const;
};

/// Consecutive messages of one player combined into a single text.
struct Utterance {
  std::string match_id;
  std::string player_id;
  std::vector<std::string> member_ids;
  std::string text;  // member texts joined by single spaces
  Label label = Label::NonToxic;
  /// First and last member positions: seq, and timestamps when every member has one.
  std::uint64_t first_seq = 0;
  std::uint64_t last_seq = 0;
  std::optional<double> first_t;
  std::optional<double> last_t;
};

/// Everything one player wrote in one match.
struct MatchTranscript {
  std::string match_id;
  std::string player_id;
  std::vector<std::string> member_ids;
  std::string text;
  Label label = Label::NonToxic;
};

/// Greedy left-to-right grouping. Each (match, player) keeps one open
/// utterance; a message joins it when the gap to its last member is at most
/// gap_s (both timestamped) or, lacking timestamps, when the open utterance
/// has fewer than fallback_run_len members and no other player spoke since.
///
/// Input must be English-only and sorted by match (contiguous) then seq;
/// violations throw InvalidArgument. Output is ordered by first member.
std::vector<Utterance> group_messages(std::span<const LabeledMessage> messages, const GroupingConfig& config = {});

/// One transcript per (match, player), ordered by first message.
std::vector<MatchTranscript> match_transcripts(std::span<const LabeledMessage> messages);

struct TextChunk {
  std::string text;
  std::size_t token_begin = 0;  // content-token range covered, [begin, end)
  std::size_t token_end = 0;
};

/// Splits `text` into windows of at most max_tokens - 2 content tokens
/// starting every `stride` tokens (clamped to the window size), so every
/// token lies in some window. Text that fits is returned unchanged as one
/// chunk. Throws InvalidArgument unless max_tokens >= 2 and
/// 0 < stride <= max_tokens, or when max_tokens == 2 and the text has tokens.
std::vector<TextChunk> chunk_for_model(const std::string& text, const WordPieceTokenizer& tokenizer,
                                       std::size_t max_tokens, std::size_t stride);

/// JSONL export: the labeled schema plus "members".
void write_utterances(std::ostream& out, std::span<const Utterance> utterances);
void write_transcripts(std::ostream& out, std::span<const MatchTranscript> transcripts);

}  // namespace chattox
