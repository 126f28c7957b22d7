#include <unicode/utf8.h>

#include "chattox/corpus.hpp"

namespace chattox {

std::size_t sanitize_utf8(std::string& text) {
  if (is_valid_utf8(text)) return 0;

  std::string out;
  out.reserve(text.size() + 8);
  std::size_t replaced = 0;
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t start = i;
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) {
      out += "\xEF\xBF\xBD";
      ++replaced;
    } else {
      out.append(text, static_cast<std::size_t>(start), static_cast<std::size_t>(i - start));
    }
  }
  text = std::move(out);
  return replaced;
}

bool is_valid_utf8(std::string_view text) noexcept {
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) return false;
  }
  return true;
}

std::size_t codepoint_count(std::string_view text) noexcept {
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  std::size_t n = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    ++n;
  }
  return n;
}

}  // namespace chattox
