#include "chattox/tokenizer.hpp"

#include <array>
#include <fstream>

#include <json.hpp>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/ustring.h>
#include <unicode/utf8.h>

#include "chattox/errors.hpp"

namespace chattox {

namespace {

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    out.push_back(c < 0 ? U'�' : static_cast<char32_t>(c));
  }
  return out;
}

void append_utf8(std::string& out, char32_t c) {
  char buf[4];
  int32_t len = 0;
  UBool error = false;
  U8_APPEND(reinterpret_cast<uint8_t*>(buf), len, 4, static_cast<UChar32>(c), error);
  if (!error) out.append(buf, static_cast<std::size_t>(len));
}

bool is_whitespace(char32_t c) {
  return c == U'\t' || c == U'\n' || c == U'\r' || c == U' ' || u_isUWhiteSpace(static_cast<UChar32>(c));
}

// Cc, Cf, Cn, Co and Cs, except the whitespace controls.
bool is_control(char32_t c) {
  if (c == U'\t' || c == U'\n' || c == U'\r') return false;
  switch (u_charType(static_cast<UChar32>(c))) {
    case U_CONTROL_CHAR:
    case U_FORMAT_CHAR:
    case U_UNASSIGNED:
    case U_PRIVATE_USE_CHAR:
    case U_SURROGATE:
      return true;
    default:
      return false;
  }
}

bool is_cjk(char32_t c) {
  return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) || (c >= 0x20000 && c <= 0x2A6DF) ||
         (c >= 0x2A700 && c <= 0x2B73F) || (c >= 0x2B740 && c <= 0x2B81F) || (c >= 0x2B920 && c <= 0x2CEAF) ||
         (c >= 0xF900 && c <= 0xFAFF) || (c >= 0x2F800 && c <= 0x2FA1F);
}

bool is_punctuation(char32_t c) {
  if (c < 0x80) return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
  switch (u_charType(static_cast<UChar32>(c))) {
    case U_DASH_PUNCTUATION:
    case U_START_PUNCTUATION:
    case U_END_PUNCTUATION:
    case U_CONNECTOR_PUNCTUATION:
    case U_OTHER_PUNCTUATION:
    case U_INITIAL_PUNCTUATION:
    case U_FINAL_PUNCTUATION:
      return true;
    default:
      return false;
  }
}

std::u32string strip_accents(const std::u32string& text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfd = icu::Normalizer2::getNFDInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFD normalizer unavailable");
  const auto source = icu::UnicodeString::fromUTF32(reinterpret_cast<const UChar32*>(text.data()),
                                                    static_cast<int32_t>(text.size()));
  const icu::UnicodeString decomposed = nfd->normalize(source, status);
  if (U_FAILURE(status)) throw Error("NFD normalisation failed");
  std::u32string out;
  out.reserve(text.size());
  for (int32_t i = 0; i < decomposed.length();) {
    const UChar32 c = decomposed.char32At(i);
    i += U16_LENGTH(c);
    if (u_charType(c) != U_NON_SPACING_MARK) out.push_back(static_cast<char32_t>(c));
  }
  return out;
}

// Full (one-to-many) lowercase mapping, applied per code point without context.
void append_lower(std::u32string& out, char32_t c) {
  if (c < 0x80) {
    out.push_back(c >= U'A' && c <= U'Z' ? c + 32 : c);
    return;
  }
  UChar src[2];
  int32_t src_len = 0;
  U16_APPEND_UNSAFE(src, src_len, static_cast<UChar32>(c));
  UChar dst[8];
  UErrorCode status = U_ZERO_ERROR;
  const int32_t n = u_strToLower(dst, 8, src, src_len, "", &status);
  if (U_FAILURE(status)) {
    out.push_back(static_cast<char32_t>(u_tolower(static_cast<UChar32>(c))));
    return;
  }
  for (int32_t i = 0; i < n;) {
    UChar32 l;
    U16_NEXT(dst, i, n, l);
    out.push_back(static_cast<char32_t>(l));
  }
}

TokenId resolve_special(const nlohmann::json& value, const std::unordered_map<std::string, TokenId>& ids,
                        std::size_t vocab_size, const char* role) {
  if (value.is_number_integer()) {
    const auto id = value.get<long long>();
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size)
      throw LoadError(std::string("special token \"") + role + "\" id out of range");
    return static_cast<TokenId>(id);
  }
  if (value.is_string()) {
    auto it = ids.find(value.get<std::string>());
    if (it == ids.end())
      throw LoadError(std::string("special token \"") + role + "\" (" + value.get<std::string>() +
                      ") not in vocabulary");
    return it->second;
  }
  throw LoadError(std::string("special token \"") + role + "\" must be a piece or an id");
}

}  // namespace

WordPieceTokenizer::WordPieceTokenizer(std::vector<std::string> vocab, bool lowercase,
                                       const std::array<std::string, 4>& special_names)
    : pieces_(std::move(vocab)), lowercase_(lowercase) {
  ids_.reserve(pieces_.size());
  for (std::size_t i = 0; i < pieces_.size(); ++i) ids_.emplace(pieces_[i], static_cast<TokenId>(i));
  std::array<TokenId, 4> resolved{};
  constexpr std::array<const char*, 4> roles{"start", "end", "pad", "unk"};
  for (std::size_t i = 0; i < 4; ++i)
    resolved[i] = resolve_special(nlohmann::json(special_names[i]), ids_, pieces_.size(), roles[i]);
  special_ = {resolved[0], resolved[1], resolved[2], resolved[3]};
}

std::vector<std::string> WordPieceTokenizer::read_vocab(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open vocabulary " + path.string());
  std::vector<std::string> vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.push_back(line);
  }
  // a trailing newline does not start an extra entry; an empty final line is dropped by getline
  if (vocab.empty()) throw LoadError("empty vocabulary " + path.string());
  return vocab;
}

// tokenizer.json as written by the Hugging Face tokenizers library
static WordPieceTokenizer load_hf(const nlohmann::json& spec, const std::filesystem::path& path) {
  using nlohmann::json;
  auto unsupported = [&](const std::string& what) -> LoadError {
    return LoadError("tokenizer " + path.string() + ": unsupported " + what);
  };
  const json& model = spec["model"];
  if (model.value("type", std::string()) != "WordPiece") throw unsupported("model type (need WordPiece)");
  if (model.value("continuing_subword_prefix", std::string("##")) != "##") throw unsupported("subword prefix");
  if (model.value("max_input_chars_per_word", WordPieceTokenizer::kMaxCharsPerWord) != WordPieceTokenizer::kMaxCharsPerWord)
    throw unsupported("max_input_chars_per_word");

  const json vocab = model.value("vocab", json::object());
  if (!vocab.is_object() || vocab.empty()) throw LoadError("tokenizer " + path.string() + " has no vocabulary");
  std::vector<std::string> pieces(vocab.size());
  std::vector<bool> filled(vocab.size(), false);
  for (const auto& [piece, id] : vocab.items()) {
    if (!id.is_number_integer() || id.get<long long>() < 0 || id.get<std::size_t>() >= pieces.size() ||
        filled[id.get<std::size_t>()])
      throw LoadError("tokenizer " + path.string() + ": vocabulary ids are not 0..n-1");
    pieces[id.get<std::size_t>()] = piece;
    filled[id.get<std::size_t>()] = true;
  }

  // the BERT normalizer, possibly inside a Sequence
  const json* bert = nullptr;
  const json& normalizer = spec.contains("normalizer") ? spec["normalizer"] : json();
  if (normalizer.is_object() && normalizer.value("type", std::string()) == "BertNormalizer") bert = &normalizer;
  if (normalizer.is_object() && normalizer.value("type", std::string()) == "Sequence")
    for (const auto& n : normalizer.value("normalizers", json::array()))
      if (n.value("type", std::string()) == "BertNormalizer") bert = &n;
  if (!bert) throw unsupported("normalizer (need BertNormalizer)");
  const bool lowercase = bert->value("lowercase", true);
  const json& strip = bert->contains("strip_accents") ? (*bert)["strip_accents"] : json();
  if (!strip.is_null() && strip.get<bool>() != lowercase) throw unsupported("strip_accents setting");

  std::string start = "[CLS]", end = "[SEP]", pad = "[PAD]";
  const json& post = spec.contains("post_processor") ? spec["post_processor"] : json();
  if (post.is_object() && post.value("type", std::string()) == "TemplateProcessing") {
    const auto single = post.value("single", json::array());
    if (single.size() != 3 || !single.front().contains("SpecialToken") || !single.back().contains("SpecialToken"))
      throw unsupported("post-processor template");
    start = single.front()["SpecialToken"]["id"];
    end = single.back()["SpecialToken"]["id"];
  } else if (post.is_object() && post.value("type", std::string()) == "BertProcessing") {
    start = post["cls"][0];
    end = post["sep"][0];
  }
  if (spec.contains("padding") && spec["padding"].is_object()) pad = spec["padding"].value("pad_token", pad);
  const std::string unk = model.value("unk_token", std::string("[UNK]"));
  return WordPieceTokenizer(std::move(pieces), lowercase, {start, end, pad, unk});
}

WordPieceTokenizer WordPieceTokenizer::load(const std::filesystem::path& sidecar) {
  std::ifstream in(sidecar, std::ios::binary);
  if (!in) throw LoadError("cannot open tokenizer spec " + sidecar.string());
  nlohmann::json spec;
  try {
    spec = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("invalid tokenizer spec " + sidecar.string() + ": " + e.what());
  }
  if (spec.is_object() && spec.contains("model") && spec["model"].is_object()) return load_hf(spec, sidecar);
  if (!spec.is_object() || !spec.contains("lowercase") || !spec["lowercase"].is_boolean())
    throw LoadError("tokenizer spec " + sidecar.string() + " lacks boolean \"lowercase\"");
  const auto special = spec.value("special", nlohmann::json::object());
  for (const char* role : {"start", "end", "pad", "unk"})
    if (!special.contains(role)) throw LoadError(std::string("tokenizer spec lacks special.") + role);

  const auto vocab_path = sidecar.parent_path() / spec.value("vocab", std::string("vocab.txt"));
  auto vocab = read_vocab(vocab_path);

  WordPieceTokenizer tok;
  tok.pieces_ = std::move(vocab);
  tok.lowercase_ = spec["lowercase"].get<bool>();
  tok.ids_.reserve(tok.pieces_.size());
  for (std::size_t i = 0; i < tok.pieces_.size(); ++i) tok.ids_.emplace(tok.pieces_[i], static_cast<TokenId>(i));
  tok.special_.start = resolve_special(special["start"], tok.ids_, tok.pieces_.size(), "start");
  tok.special_.end = resolve_special(special["end"], tok.ids_, tok.pieces_.size(), "end");
  tok.special_.pad = resolve_special(special["pad"], tok.ids_, tok.pieces_.size(), "pad");
  tok.special_.unk = resolve_special(special["unk"], tok.ids_, tok.pieces_.size(), "unk");
  return tok;
}

TokenId WordPieceTokenizer::find(std::string_view piece) const {
  auto it = ids_.find(std::string(piece));
  return it == ids_.end() ? -1 : it->second;
}

std::string WordPieceTokenizer::normalize(std::string_view text) const {
  std::u32string cleaned;
  cleaned.reserve(text.size());
  for (char32_t c : decode_utf8(text)) {
    if (c == 0 || c == 0xFFFD || is_control(c)) continue;
    if (is_whitespace(c)) {
      cleaned.push_back(U' ');
    } else if (is_cjk(c)) {
      cleaned.push_back(U' ');
      cleaned.push_back(c);
      cleaned.push_back(U' ');
    } else {
      cleaned.push_back(c);
    }
  }
  if (lowercase_) {
    const auto stripped = strip_accents(cleaned);
    cleaned.clear();
    for (char32_t c : stripped) append_lower(cleaned, c);
  }
  std::string out;
  out.reserve(cleaned.size());
  for (char32_t c : cleaned) append_utf8(out, c);
  return out;
}

std::vector<std::string> WordPieceTokenizer::pre_tokenize(std::string_view text) const {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (char32_t c : decode_utf8(normalize(text))) {
    if (is_whitespace(c)) {
      flush();
    } else if (is_punctuation(c)) {
      flush();
      append_utf8(current, c);
      flush();
    } else {
      append_utf8(current, c);
    }
  }
  flush();
  return words;
}

void WordPieceTokenizer::word_piece(const std::string& word, std::vector<TokenId>& out) const {
  // byte offset of every code point boundary
  std::vector<std::size_t> bounds;
  const auto* s = reinterpret_cast<const uint8_t*>(word.data());
  const auto length = static_cast<int32_t>(word.size());
  for (int32_t i = 0; i < length;) {
    bounds.push_back(static_cast<std::size_t>(i));
    U8_FWD_1(s, i, length);
  }
  bounds.push_back(word.size());
  const std::size_t chars = bounds.size() - 1;
  if (chars > kMaxCharsPerWord) {
    out.push_back(special_.unk);
    return;
  }

  const std::size_t mark = out.size();
  std::string candidate;
  std::size_t start = 0;
  while (start < chars) {
    std::size_t end = chars;
    TokenId match = -1;
    while (start < end) {
      candidate.clear();
      if (start > 0) candidate = "##";
      candidate.append(word, bounds[start], bounds[end] - bounds[start]);
      if (auto it = ids_.find(candidate); it != ids_.end()) {
        match = it->second;
        break;
      }
      --end;
    }
    if (match < 0) {
      out.resize(mark);
      out.push_back(special_.unk);
      return;
    }
    out.push_back(match);
    start = end;
  }
}

std::vector<TokenId> WordPieceTokenizer::encode_content(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& word : pre_tokenize(text)) word_piece(word, ids);
  return ids;
}

std::vector<TokenId> WordPieceTokenizer::encode(std::string_view text, std::size_t max_tokens) const {
  if (max_tokens < 2) throw InvalidArgument("max_tokens must leave room for the start and end tokens");
  auto content = encode_content(text);
  if (content.size() > max_tokens - 2) content.resize(max_tokens - 2);
  std::vector<TokenId> ids;
  ids.reserve(content.size() + 2);
  ids.push_back(special_.start);
  ids.insert(ids.end(), content.begin(), content.end());
  ids.push_back(special_.end);
  return ids;
}

std::string WordPieceTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    const auto& p = piece(id);
    if (p.starts_with("##")) {
      out.append(p, 2);
    } else {
      // the reference decoder's cleanup attaches these to the previous piece
      const bool attach = p == "." || p == "," || p == "!" || p == "?";
      if (!out.empty() && !attach) out += ' ';
      out += p;
    }
  }
  return out;
}

}  // namespace chattox
