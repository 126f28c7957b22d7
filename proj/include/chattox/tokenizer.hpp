#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace chattox {

using TokenId = std::int32_t;

struct SpecialTokens {
  TokenId start = 0;  // [CLS]
  TokenId end = 0;    // [SEP]
  TokenId pad = 0;    // [PAD]
  TokenId unk = 0;    // [UNK]
};

/// BERT-style tokenizer: text normalisation, whitespace/punctuation
/// pre-tokenisation, then greedy longest-match-first WordPiece.
class WordPieceTokenizer {
 public:
  static constexpr std::size_t kMaxCharsPerWord = 100;

  /// `special_names` are the start/end/pad/unk pieces, in that order; each must
  /// be present in `vocab`. Throws LoadError otherwise.
  WordPieceTokenizer(std::vector<std::string> vocab, bool lowercase,
                     const std::array<std::string, 4>& special_names);

  /// Loads the JSON sidecar {"lowercase": bool, "vocab": "vocab.txt",
  /// "special": {"start", "end", "pad", "unk"}}. Special tokens may be given as
  /// pieces or ids. The vocabulary path is resolved relative to the sidecar
  /// and defaults to vocab.txt beside it.
  ///
  /// A Hugging Face tokenizer.json with a WordPiece model and a BERT
  /// normalizer is accepted too; its embedded vocabulary is used.
  static WordPieceTokenizer load(const std::filesystem::path& sidecar);

  /// Vocabulary file: one piece per line, line number = id.
  static std::vector<std::string> read_vocab(const std::filesystem::path& path);

  /// Normalised words and punctuation, before WordPiece.
  std::vector<std::string> pre_tokenize(std::string_view text) const;

  /// WordPiece ids without start/end tokens or truncation.
  std::vector<TokenId> encode_content(std::string_view text) const;

  /// [start] content... [end], truncated to `max_tokens` (>= 2) ids.
  std::vector<TokenId> encode(std::string_view text, std::size_t max_tokens) const;

  /// Joins pieces with spaces, merges "##" continuations and attaches
  /// ". , ! ?" to the preceding piece.
  std::string decode(std::span<const TokenId> ids) const;

  const SpecialTokens& special() const noexcept { return special_; }
  bool lowercase() const noexcept { return lowercase_; }
  std::size_t vocab_size() const noexcept { return pieces_.size(); }
  const std::string& piece(TokenId id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  /// -1 when absent.
  TokenId find(std::string_view piece) const;

 private:
  WordPieceTokenizer() = default;

  std::string normalize(std::string_view text) const;
  void word_piece(const std::string& word, std::vector<TokenId>& out) const;

  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> ids_;
  bool lowercase_ = true;
  SpecialTokens special_;
};

}  // namespace chattox
