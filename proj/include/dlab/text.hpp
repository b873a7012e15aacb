#pragma once

#include <algorithm>
#include <cstddef>
#include <string_view>
#include <vector>

namespace dlab {

// Half-open byte range [begin, end) into a UTF-8 string.
struct TextSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool contains(const TextSpan& other) const { return begin <= other.begin && other.end <= end; }
  bool overlaps(const TextSpan& other) const { return begin < other.end && other.begin < end; }
  friend bool operator==(const TextSpan&, const TextSpan&) = default;
};

namespace detail {
inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
}  // namespace detail

// Splits on '.', '!', '?' (runs included) followed by whitespace or end of
// text, and on newline runs. Spans exclude surrounding whitespace, so the
// text is reconstructed by the spans plus the whitespace between them.
inline std::vector<TextSpan> segment_sentences(std::string_view text) {
  std::vector<TextSpan> spans;
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    while (i < n && detail::is_space(text[i])) ++i;
    if (i >= n) break;
    const std::size_t start = i;
    std::size_t end = n;
    while (i < n) {
      const char c = text[i];
      if (c == '\n' || c == '\r') {
        end = i;
        break;
      }
      if (c == '.' || c == '!' || c == '?') {
        std::size_t j = i;
        while (j < n && (text[j] == '.' || text[j] == '!' || text[j] == '?')) ++j;
        if (j == n || detail::is_space(text[j])) {
          end = j;
          i = j;
          break;
        }
        i = j;
        continue;
      }
      ++i;
    }
    std::size_t e = end;
    while (e > start && detail::is_space(text[e - 1])) --e;
    if (e > start) spans.push_back({start, e});
    i = std::max(i, end);
  }
  return spans;
}

}  // namespace dlab
