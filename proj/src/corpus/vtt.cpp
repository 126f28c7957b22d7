#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <iterator>
#include <ostream>

#include "chattox/corpus.hpp"
#include "chattox/errors.hpp"

namespace chattox {

namespace {

std::vector<std::string> split_lines(std::string data) {
  std::vector<std::string> lines;
  std::string current;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const char c = data[i];
    if (c == '\r' || c == '\n') {
      lines.push_back(std::move(current));
      current.clear();
      if (c == '\r' && i + 1 < data.size() && data[i + 1] == '\n') ++i;
    } else {
      current += c;
    }
  }
  if (!current.empty()) lines.push_back(std::move(current));
  return lines;
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t") == std::string_view::npos;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::optional<long long> to_int(std::string_view s) {
  if (!all_digits(s)) return std::nullopt;
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// [hh:]mm:ss.ttt, with ',' accepted as the decimal separator for SRT.
std::optional<long long> parse_timestamp_ms(std::string_view s, bool allow_comma) {
  const auto dot = s.find_last_of(allow_comma ? ".," : ".");
  if (dot == std::string_view::npos) return std::nullopt;
  const auto frac = s.substr(dot + 1);
  if (frac.size() != 3) return std::nullopt;
  auto ms = to_int(frac);
  if (!ms) return std::nullopt;

  std::vector<std::string_view> parts;
  std::string_view head = s.substr(0, dot);
  while (true) {
    const auto colon = head.find(':');
    parts.push_back(head.substr(0, colon));
    if (colon == std::string_view::npos) break;
    head.remove_prefix(colon + 1);
  }
  if (parts.size() < 2 || parts.size() > 3) return std::nullopt;
  long long hours = 0;
  if (parts.size() == 3) {
    auto h = to_int(parts[0]);
    if (!h || parts[0].size() < 2) return std::nullopt;
    hours = *h;
  }
  const auto& mm_part = parts[parts.size() - 2];
  const auto& ss_part = parts[parts.size() - 1];
  auto mm = to_int(mm_part);
  auto ss = to_int(ss_part);
  if (!mm || !ss || mm_part.size() != 2 || ss_part.size() != 2 || *mm > 59 || *ss > 59)
    return std::nullopt;
  return ((hours * 60 + *mm) * 60 + *ss) * 1000 + *ms;
}

void append_utf8(std::string& out, unsigned long cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

std::optional<std::string> decode_entity(std::string_view name) {
  if (name == "amp") return "&";
  if (name == "lt") return "<";
  if (name == "gt") return ">";
  if (name == "quot") return "\"";
  if (name == "apos") return "'";
  if (name == "nbsp") return "\xC2\xA0";
  if (name == "lrm") return "\xE2\x80\x8E";
  if (name == "rlm") return "\xE2\x80\x8F";
  if (name.size() > 1 && name[0] == '#') {
    unsigned long cp = 0;
    const bool hex = name[1] == 'x' || name[1] == 'X';
    const auto digits = name.substr(hex ? 2 : 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), cp, hex ? 16 : 10);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty() || cp > 0x10FFFF ||
        (cp >= 0xD800 && cp <= 0xDFFF))
      return std::nullopt;
    std::string out;
    append_utf8(out, cp);
    return out;
  }
  return std::nullopt;
}

// Removes <tags> (voice, class, timestamp, b/i/u, font) and SRT {\ass} overrides,
// and decodes character references.
std::string strip_markup(std::string_view line, bool srt) {
  std::string out;
  out.reserve(line.size());
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '<') {
      const auto close = line.find('>', i);
      if (close == std::string_view::npos) break;
      i = close;
    } else if (srt && c == '{' && i + 1 < line.size() && line[i + 1] == '\\') {
      const auto close = line.find('}', i);
      if (close == std::string_view::npos) break;
      i = close;
    } else if (c == '&') {
      const auto semi = line.find(';', i);
      std::optional<std::string> decoded;
      if (semi != std::string_view::npos && semi - i <= 10) decoded = decode_entity(line.substr(i + 1, semi - i - 1));
      if (decoded) {
        out += *decoded;
        i = semi;
      } else {
        out += c;
      }
    } else {
      out += c;
    }
  }
  return std::string(trim(out));
}

bool is_vtt_header(std::string_view first) {
  if (!first.starts_with("WEBVTT")) return false;
  return first.size() == 6 || first[6] == ' ' || first[6] == '\t';
}

bool looks_like_srt(const std::vector<std::string>& lines) {
  std::size_t i = 0;
  while (i < lines.size() && is_blank(lines[i])) ++i;
  return i + 1 < lines.size() && all_digits(trim(lines[i])) &&
         lines[i + 1].find("-->") != std::string::npos;
}

bool starts_block_keyword(std::string_view line, std::string_view keyword) {
  return line.starts_with(keyword) &&
         (line.size() == keyword.size() || line[keyword.size()] == ' ' || line[keyword.size()] == '\t');
}

}  // namespace

std::string format_vtt_timestamp(double seconds) {
  auto total_ms = static_cast<long long>(std::llround(seconds * 1000.0));
  const long long ms = total_ms % 1000;
  total_ms /= 1000;
  const long long s = total_ms % 60;
  total_ms /= 60;
  const long long m = total_ms % 60;
  const long long h = total_ms / 60;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld.%03lld", h, m, s, ms);
  return buf;
}

std::vector<CaptionCue> parse_vtt(std::istream& in, const VttOptions& options) {
  std::string data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (data.starts_with("\xEF\xBB\xBF")) data.erase(0, 3);
  sanitize_utf8(data);
  const auto lines = split_lines(std::move(data));

  std::size_t i = 0;
  bool srt = false;
  if (!lines.empty() && is_vtt_header(lines[0])) {
    // header block runs to the first blank line
    while (i < lines.size() && !lines[i].empty()) ++i;
  } else if (looks_like_srt(lines)) {
    srt = true;
  } else {
    throw FormatError("missing WEBVTT header");
  }

  std::vector<CaptionCue> cues;
  while (i < lines.size()) {
    if (is_blank(lines[i])) {
      ++i;
      continue;
    }
    // one block: lines up to the next blank line
    std::size_t end = i;
    while (end < lines.size() && !is_blank(lines[end])) ++end;
    std::size_t pos = i;
    i = end;

    if (!srt && (starts_block_keyword(lines[pos], "NOTE") || starts_block_keyword(lines[pos], "STYLE") ||
                 starts_block_keyword(lines[pos], "REGION")))
      continue;
    if (lines[pos].find("-->") == std::string::npos) ++pos;  // cue identifier / SRT counter
    if (pos >= end || lines[pos].find("-->") == std::string::npos) {
      if (srt) throw CueError("missing timing line", cues.size() + 1);
      continue;
    }

    const std::size_t index = cues.size() + 1;
    const std::string_view timing = lines[pos];
    const auto arrow = timing.find("-->");
    const auto start_text = trim(timing.substr(0, arrow));
    auto rest = trim(timing.substr(arrow + 3));
    const auto end_text = rest.substr(0, rest.find_first_of(" \t"));
    const auto start_ms = parse_timestamp_ms(start_text, srt);
    const auto end_ms = parse_timestamp_ms(end_text, srt);
    if (!start_ms) throw CueError("unparseable timestamp \"" + std::string(start_text) + "\"", index);
    if (!end_ms) throw CueError("unparseable timestamp \"" + std::string(end_text) + "\"", index);
    if (*end_ms <= *start_ms) throw CueError("cue ends before it starts", index);

    CaptionCue cue;
    cue.start_s = static_cast<double>(*start_ms) / 1000.0;
    cue.end_s = static_cast<double>(*end_ms) / 1000.0;
    for (std::size_t l = pos + 1; l < end; ++l) {
      auto text = strip_markup(lines[l], srt);
      if (!text.empty()) cue.lines.push_back(std::move(text));
    }
    if (!cues.empty() && cue.start_s < cues.back().start_s && !options.reorder)
      throw CueError("cue starts before the previous cue", index);
    cues.push_back(std::move(cue));
  }
  if (options.reorder)
    std::stable_sort(cues.begin(), cues.end(),
                     [](const CaptionCue& a, const CaptionCue& b) { return a.start_s < b.start_s; });
  return cues;
}

void write_vtt(std::ostream& out, std::span<const CaptionCue> cues) {
  out << "WEBVTT\n";
  for (const auto& cue : cues) {
    out << '\n' << format_vtt_timestamp(cue.start_s) << " --> " << format_vtt_timestamp(cue.end_s) << '\n';
    for (const auto& line : cue.lines) {
      for (char c : line) {
        switch (c) {
          case '&':
            out << "&amp;";
            break;
          case '<':
            out << "&lt;";
            break;
          case '>':
            out << "&gt;";
            break;
          default:
            out << c;
        }
      }
      out << '\n';
    }
  }
}

}  // namespace chattox
