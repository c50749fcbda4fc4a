#include "sqlqg/text.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace sqlqg {

namespace {

inline bool is_alnum(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

inline bool is_digit(char c) {
  return std::isdigit(static_cast<unsigned char>(c)) != 0;
}

// Split one whitespace-free chunk into tokens, detaching punctuation.
void split_chunk(const std::string& chunk, std::vector<std::string>& out) {
  std::string cur;
  const size_t n = chunk.size();
  for (size_t i = 0; i < n; ++i) {
    const char c = chunk[i];
    bool keep = is_alnum(c);
    if (!keep && i > 0 && i + 1 < n) {
      if (c == '-' && is_alnum(chunk[i - 1]) && is_alnum(chunk[i + 1])) keep = true;
      if (c == '.' && is_digit(chunk[i - 1]) && is_digit(chunk[i + 1])) keep = true;
    }
    if (keep) {
      cur.push_back(c);
    } else {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
      out.push_back(std::string(1, c));
    }
  }
  if (!cur.empty()) out.push_back(cur);
}

}  // namespace

std::string to_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& chunk : split_ws(to_lower(text))) split_chunk(chunk, out);
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) s.push_back(' ');
    s += tokens[i];
  }
  return s;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  size_t i = 0;
  if (s[i] == '+' || s[i] == '-') ++i;
  size_t digits = 0;
  while (i < s.size() && is_digit(s[i])) {
    ++i;
    ++digits;
  }
  if (digits == 0) return std::nullopt;
  if (i < s.size() && s[i] == '.') {
    ++i;
    size_t frac = 0;
    while (i < s.size() && is_digit(s[i])) {
      ++i;
      ++frac;
    }
    if (frac == 0) return std::nullopt;
  }
  if (i != s.size()) return std::nullopt;
  // from_chars rejects a leading '+', which the grammar above allows.
  const char* begin = s.data() + (s[0] == '+' ? 1 : 0);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string format_number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
    return buf;
  }
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace sqlqg
