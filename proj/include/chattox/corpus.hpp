#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chattox {

/// Consensus category of a chat message.
enum class Label : std::uint8_t { Toxic, NonToxic, NonEnglish };

/// Wire token: "toxic", "nontoxic" or "nonenglish".
std::string_view label_name(Label label) noexcept;
std::optional<Label> try_parse_label(std::string_view token) noexcept;

/// One in-game chat line.
struct ChatMessage {
  std::string message_id;
  std::string match_id;
  std::optional<std::string> player_id;
  std::uint64_t seq = 0;  // order within the match
  std::optional<double> timestamp_s;
  std::string text;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct LabeledMessage {
  ChatMessage message;
  Label label = Label::NonToxic;

  friend bool operator==(const LabeledMessage&, const LabeledMessage&) = default;
};

/// Per-message votes, one per annotator, in annotator order.
struct AnnotationRecord {
  std::string message_id;
  std::vector<Label> votes;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

/// One timed caption block. Lines carry text with markup removed.
struct CaptionCue {
  double start_s = 0.0;
  double end_s = 0.0;
  std::vector<std::string> lines;

  friend bool operator==(const CaptionCue&, const CaptionCue&) = default;
};

struct CorpusStats {
  std::size_t total = 0;
  std::size_t toxic = 0;
  std::size_t non_toxic = 0;
  std::size_t non_english = 0;
  double mean_len_chars = 0.0;  // over English messages, in code points
  double std_len_chars = 0.0;   // sample standard deviation
  std::size_t match_count = 0;
};

/// Side information collected while parsing. Parsers never fail on
/// invalid UTF-8; they substitute U+FFFD and count the substitutions here.
struct ParseReport {
  std::size_t replaced_sequences = 0;
  std::vector<std::string> warnings;
};

enum class ChatlogFormat { Jsonl, Csv };

/// Reads chat messages. `seq`, when absent, is the message's position within
/// its match in file order.
///
/// Throws ParseError (with the 1-based line) on malformed records, duplicate
/// message ids, non-increasing seq within a match, or timestamps that
/// contradict seq order.
std::vector<ChatMessage> parse_chatlog(std::istream& in, ChatlogFormat format,
                                       ParseReport* report = nullptr);

/// Reads annotation JSONL. Votes are category tokens, or 0/1 for
/// non-toxic/toxic. Every record must have the same number of votes.
std::vector<AnnotationRecord> parse_annotations(std::istream& in, ParseReport* report = nullptr);

struct VttOptions {
  /// Stable-sort cues by start time instead of rejecting out-of-order files.
  bool reorder = false;
};

/// Parses WebVTT, or SRT when the first block looks like an SRT cue.
/// Throws FormatError when neither header is recognised and ParseError
/// (line = cue index, 1-based) for bad timings.
std::vector<CaptionCue> parse_vtt(std::istream& in, const VttOptions& options = {});
void write_vtt(std::ostream& out, std::span<const CaptionCue> cues);

/// Seconds to "hh:mm:ss.mmm".
std::string format_vtt_timestamp(double seconds);

CorpusStats corpus_stats(std::span<const LabeledMessage> dataset);

/// Current version of the labeled JSONL schema header.
inline constexpr int kLabeledSchemaVersion = 1;

void write_labeled(std::ostream& out, std::span<const LabeledMessage> dataset);
void write_labeled(const std::filesystem::path& path, std::span<const LabeledMessage> dataset);
std::vector<LabeledMessage> read_labeled(std::istream& in, ParseReport* report = nullptr);
std::vector<LabeledMessage> read_labeled(const std::filesystem::path& path,
                                         ParseReport* report = nullptr);

/// Drops NonEnglish messages, keeping order.
std::vector<LabeledMessage> english_only(std::span<const LabeledMessage> dataset);

/// Replaces ill-formed UTF-8 with U+FFFD. Returns the number of replacements.
std::size_t sanitize_utf8(std::string& text);
bool is_valid_utf8(std::string_view text) noexcept;
/// Number of code points; ill-formed sequences count once each.
std::size_t codepoint_count(std::string_view text) noexcept;

}  // namespace chattox
