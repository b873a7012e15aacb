#pragma once

// Theory-based self-disclosure extraction: sentence segmentation, the
// eight-way regex taxonomy and its four-way grouping, the phrase filter used
// before clustering, audit sampling and n-gram context statistics.

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <boost/regex.hpp>
#include <json.hpp>

#include "dlab/common.hpp"
#include "dlab/corpus.hpp"
#include "dlab/default_patterns.hpp"
#include "dlab/parallel.hpp"
#include "dlab/text.hpp"

namespace dlab {

enum class LowLevelCategory : std::uint8_t {
  Identity,
  Gender,
  Age,
  Hobby,
  Possession,
  Work,
  Attitude,
  Relationship,
};
inline constexpr std::size_t kLowLevelCount = 8;

enum class HighLevelCategory : std::uint8_t { Demographics, Experiences, Attitudes, Relationships };
inline constexpr std::size_t kHighLevelCount = 4;

inline constexpr std::array<LowLevelCategory, kLowLevelCount> kLowLevelCategories{
    LowLevelCategory::Identity, LowLevelCategory::Gender,   LowLevelCategory::Age,
    LowLevelCategory::Hobby,    LowLevelCategory::Possession, LowLevelCategory::Work,
    LowLevelCategory::Attitude, LowLevelCategory::Relationship};

inline constexpr std::array<HighLevelCategory, kHighLevelCount> kHighLevelCategories{
    HighLevelCategory::Demographics, HighLevelCategory::Experiences, HighLevelCategory::Attitudes,
    HighLevelCategory::Relationships};

inline constexpr HighLevelCategory high_level(LowLevelCategory c) {
  switch (c) {
    case LowLevelCategory::Identity:
    case LowLevelCategory::Gender:
    case LowLevelCategory::Age: return HighLevelCategory::Demographics;
    case LowLevelCategory::Hobby:
    case LowLevelCategory::Possession:
    case LowLevelCategory::Work: return HighLevelCategory::Experiences;
    case LowLevelCategory::Attitude: return HighLevelCategory::Attitudes;
    case LowLevelCategory::Relationship: return HighLevelCategory::Relationships;
  }
  return HighLevelCategory::Demographics;
}

inline std::string_view to_string(LowLevelCategory c) {
  static constexpr std::array<std::string_view, kLowLevelCount> names{
      "Identity", "Gender", "Age", "Hobby", "Possession", "Work", "Attitude", "Relationship"};
  return names[static_cast<std::size_t>(c)];
}

inline std::string_view to_string(HighLevelCategory c) {
  static constexpr std::array<std::string_view, kHighLevelCount> names{
      "Demographics", "Experiences", "Attitudes", "Relationships"};
  return names[static_cast<std::size_t>(c)];
}

inline std::optional<LowLevelCategory> parse_low_level(std::string_view s) {
  for (auto c : kLowLevelCategories) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

inline std::optional<HighLevelCategory> parse_high_level(std::string_view s) {
  for (auto c : kHighLevelCategories) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

// Set of high-level categories as a 4-bit mask.
class CategorySet {
 public:
  constexpr CategorySet() = default;
  constexpr void insert(HighLevelCategory c) { bits_ |= bit(c); }
  constexpr bool contains(HighLevelCategory c) const { return (bits_ & bit(c)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }
  constexpr std::uint8_t bits() const { return bits_; }
  std::vector<HighLevelCategory> members() const {
    std::vector<HighLevelCategory> out;
    for (auto c : kHighLevelCategories) {
      if (contains(c)) out.push_back(c);
    }
    return out;
  }
  friend constexpr bool operator==(CategorySet, CategorySet) = default;

 private:
  static constexpr std::uint8_t bit(HighLevelCategory c) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(c));
  }
  std::uint8_t bits_ = 0;
};

struct DisclosureSpan {
  std::string comment_id;
  std::size_t sentence_index = 0;
  LowLevelCategory category = LowLevelCategory::Identity;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  // The disclosed content (named capture groups, else the last capture group).
  std::size_t payload_start = 0;
  std::size_t payload_end = 0;
  std::string matched_text;
};

struct CategoryProfile {
  std::string comment_id;
  CategorySet theory_categories;
  std::optional<int> cluster_id;
};

using ProfileIndex = std::map<std::string, CategoryProfile>;

// ---------------------------------------------------------------------------
// Pattern file

struct PatternSource {
  std::array<std::string, kLowLevelCount> regex;
};

namespace detail {

// (?P<name>...) -> (?<name>...), the spelling Boost.Regex accepts.
inline std::string translate_python_groups(std::string_view pattern) {
  std::string out;
  out.reserve(pattern.size());
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '\\' && i + 1 < pattern.size()) {
      out += pattern[i];
      out += pattern[++i];
      continue;
    }
    if (pattern.compare(i, 4, "(?P<") == 0) {
      out += "(?<";
      i += 3;
      continue;
    }
    out += pattern[i];
  }
  return out;
}

// Names of (?<name>...) groups in a translated pattern.
inline std::vector<std::string> named_groups(std::string_view pattern) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i + 3 < pattern.size(); ++i) {
    if (pattern[i] == '\\') {
      ++i;
      continue;
    }
    if (pattern.compare(i, 3, "(?<") == 0 && pattern[i + 3] != '=' && pattern[i + 3] != '!') {
      const auto close = pattern.find('>', i + 3);
      if (close != std::string_view::npos) names.emplace_back(pattern.substr(i + 3, close - i - 3));
    }
  }
  return names;
}

}  // namespace detail

// Parses the sectioned pattern file: "# dlab-disclosure-patterns 1",
// "# checksum <hex fnv1a64 of the body>", then [Category] sections holding one
// regex line each. Lines starting with ';' are notes.
inline PatternSource parse_pattern_file(std::string_view text) {
  auto next_line = [&](std::size_t& pos) -> std::string_view {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? text.size() - pos : end - pos);
    pos = end == std::string_view::npos ? text.size() : end + 1;
    return line;
  };
  std::size_t pos = 0;
  if (next_line(pos) != "# dlab-disclosure-patterns 1") throw DataError("pattern file: bad magic line");
  const std::string_view sum_line = next_line(pos);
  if (sum_line.rfind("# checksum ", 0) != 0) throw DataError("pattern file: missing checksum line");
  const std::string_view body = text.substr(pos);
  if (std::string(sum_line.substr(11)) != hex64(fnv1a64(body))) {
    throw DataError("pattern file: checksum mismatch");
  }
  PatternSource src;
  std::array<bool, kLowLevelCount> have{};
  std::optional<LowLevelCategory> current;
  while (pos < text.size()) {
    std::string_view line = next_line(pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == ';') continue;
    if (line.front() == '[' && line.back() == ']') {
      current = parse_low_level(line.substr(1, line.size() - 2));
      if (!current) throw DataError("pattern file: unknown section " + std::string(line));
      continue;
    }
    if (!current) throw DataError("pattern file: regex outside a section");
    const auto idx = static_cast<std::size_t>(*current);
    if (have[idx]) throw DataError("pattern file: section " + std::string(to_string(*current)) + " has more than one regex");
    src.regex[idx] = std::string(line);
    have[idx] = true;
  }
  for (std::size_t i = 0; i < kLowLevelCount; ++i) {
    if (!have[i]) throw DataError("pattern file: missing section " + std::string(to_string(kLowLevelCategories[i])));
  }
  return src;
}

// Serializes sections (with optional per-section note lines) and stamps the checksum.
inline std::string format_pattern_file(const PatternSource& src) {
  std::string body;
  for (std::size_t i = 0; i < kLowLevelCount; ++i) {
    body += "[" + std::string(to_string(kLowLevelCategories[i])) + "]\n" + src.regex[i] + "\n";
  }
  return "# dlab-disclosure-patterns 1\n# checksum " + hex64(fnv1a64(body)) + "\n" + body;
}

// Compiled, immutable pattern set; safe to share across threads.
class PatternSet {
 public:
  explicit PatternSet(const PatternSource& src) : source_(src) {
    for (std::size_t i = 0; i < kLowLevelCount; ++i) {
      const std::string translated = detail::translate_python_groups(src.regex[i]);
      try {
        regex_[i].assign(translated, boost::regex::perl | boost::regex::icase);
      } catch (const boost::regex_error& e) {
        throw DataError("pattern " + std::string(to_string(kLowLevelCategories[i])) + ": " + e.what());
      }
      names_[i] = detail::named_groups(translated);
    }
  }

  static const PatternSet& default_set() {
    static const PatternSet set(parse_pattern_file(kDefaultPatternFile));
    return set;
  }

  static PatternSet from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open pattern file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return PatternSet(parse_pattern_file(ss.str()));
  }

  const boost::regex& regex(LowLevelCategory c) const { return regex_[static_cast<std::size_t>(c)]; }
  const std::vector<std::string>& group_names(LowLevelCategory c) const {
    return names_[static_cast<std::size_t>(c)];
  }
  const PatternSource& source() const { return source_; }

 private:
  PatternSource source_;
  std::array<boost::regex, kLowLevelCount> regex_;
  std::array<std::vector<std::string>, kLowLevelCount> names_;
};

// ---------------------------------------------------------------------------
// Extraction

namespace detail {

inline TextSpan payload_of(const boost::match_results<std::string_view::const_iterator>& m,
                           const std::vector<std::string>& names, std::string_view::const_iterator base) {
  auto off = [&](auto it) { return static_cast<std::size_t>(it - base); };
  bool found = false;
  TextSpan p{};
  for (const auto& name : names) {
    const auto& sub = m[name];
    if (!sub.matched) continue;
    const TextSpan s{off(sub.first), off(sub.second)};
    if (!found) {
      p = s;
      found = true;
    } else {
      p.begin = std::min(p.begin, s.begin);
      p.end = std::max(p.end, s.end);
    }
  }
  if (found) return p;
  for (std::size_t g = m.size(); g-- > 1;) {
    if (m[g].matched) return {off(m[g].first), off(m[g].second)};
  }
  return {off(m[0].first), off(m[0].second)};
}

}  // namespace detail

// Spans for one text (sentences computed if not provided), in document order.
inline std::vector<DisclosureSpan> extract_disclosures(std::string_view text,
                                                       const std::vector<TextSpan>& sentences,
                                                       const PatternSet& patterns,
                                                       std::string_view comment_id = {}) {
  std::vector<DisclosureSpan> out;
  for (std::size_t si = 0; si < sentences.size(); ++si) {
    const TextSpan sent = sentences[si];
    const std::string_view s = text.substr(sent.begin, sent.size());
    std::array<std::vector<std::pair<TextSpan, TextSpan>>, kLowLevelCount> found;  // (match, payload)
    for (auto cat : kLowLevelCategories) {
      auto& list = found[static_cast<std::size_t>(cat)];
      boost::regex_iterator<std::string_view::const_iterator> it(s.begin(), s.end(), patterns.regex(cat));
      for (decltype(it) end; it != end; ++it) {
        const auto& m = *it;
        if (m.length(0) == 0) continue;
        const TextSpan span{static_cast<std::size_t>(m[0].first - s.begin()),
                            static_cast<std::size_t>(m[0].second - s.begin())};
        const TextSpan payload = detail::payload_of(m, patterns.group_names(cat), s.begin());
        if (!list.empty() && list.back().first.end > span.begin) {
          auto& prev = list.back();
          prev.first.end = std::max(prev.first.end, span.end);
          prev.second.begin = std::min(prev.second.begin, payload.begin);
          prev.second.end = std::max(prev.second.end, payload.end);
        } else {
          list.emplace_back(span, payload);
        }
      }
    }
    // Shorthand precedence: Age yields to an overlapping Gender span.
    auto& ages = found[static_cast<std::size_t>(LowLevelCategory::Age)];
    const auto& genders = found[static_cast<std::size_t>(LowLevelCategory::Gender)];
    std::erase_if(ages, [&](const auto& a) {
      return std::any_of(genders.begin(), genders.end(),
                         [&](const auto& g) { return g.first.overlaps(a.first); });
    });

    const std::size_t first_new = out.size();
    for (auto cat : kLowLevelCategories) {
      for (const auto& [span, payload] : found[static_cast<std::size_t>(cat)]) {
        DisclosureSpan d;
        d.comment_id = std::string(comment_id);
        d.sentence_index = si;
        d.category = cat;
        d.char_start = sent.begin + span.begin;
        d.char_end = sent.begin + span.end;
        d.payload_start = sent.begin + payload.begin;
        d.payload_end = sent.begin + payload.end;
        d.matched_text = std::string(s.substr(span.begin, span.size()));
        out.push_back(std::move(d));
      }
    }
    std::stable_sort(out.begin() + static_cast<std::ptrdiff_t>(first_new), out.end(),
                     [](const DisclosureSpan& a, const DisclosureSpan& b) {
                       if (a.char_start != b.char_start) return a.char_start < b.char_start;
                       return a.category < b.category;
                     });
  }
  return out;
}

inline std::vector<DisclosureSpan> extract_disclosures(const Comment& c,
                                                       const PatternSet& patterns = PatternSet::default_set()) {
  const auto sentences = c.sentences.empty() ? segment_sentences(c.text) : c.sentences;
  return extract_disclosures(c.text, sentences, patterns, c.id);
}

inline CategorySet categories_of(const std::vector<DisclosureSpan>& spans) {
  CategorySet set;
  for (const auto& s : spans) set.insert(high_level(s.category));
  return set;
}

inline CategorySet assign_theory_categories(const Comment& c,
                                            const PatternSet& patterns = PatternSet::default_set()) {
  return categories_of(extract_disclosures(c, patterns));
}

// Spans of every comment, indexed like corpus.comments().
inline std::vector<std::vector<DisclosureSpan>> extract_corpus(const Corpus& corpus,
                                                               const PatternSet& patterns,
                                                               std::size_t workers = worker_count()) {
  std::vector<std::vector<DisclosureSpan>> out(corpus.comments().size());
  parallel_for(out.size(), workers, [&](std::size_t i) {
    out[i] = extract_disclosures(corpus.comments()[i], patterns);
  });
  return out;
}

inline ProfileIndex build_profiles(const Corpus& corpus,
                                   const std::vector<std::vector<DisclosureSpan>>& spans) {
  ProfileIndex profiles;
  for (std::size_t i = 0; i < corpus.comments().size(); ++i) {
    const auto& c = corpus.comments()[i];
    profiles[c.id] = CategoryProfile{c.id, categories_of(spans[i]), std::nullopt};
  }
  return profiles;
}

// ---------------------------------------------------------------------------
// Phrase filter (case-sensitive substring test, as a pre-clustering filter)

inline constexpr std::array<std::string_view, 34> kDisclosurePhrases{
    "I am",           "I'm",
    "Im",             "I have",
    "I like",         "I love",
    "I hate",         "I enjoy",
    "I think",        "I feel",
    "I believe",      "I wish",
    "I need",         "I want",
    "I fear",         "I worry",
    "I tend to",      "I see myself as",
    "I value",        "I strive to",
    "I consider myself", "I would describe myself as",
    "I would define myself as", "I pride myself on",
    "I am good at",   "I struggle with",
    "I find it easy to", "I have a hard time",
    "I excel at",     "I know that I",
    "Ive learned that I", "I've learned that I",
    "I have learned that I", "I realize that"};

inline bool matches_phrase_filter(std::string_view text) {
  for (auto phrase : kDisclosurePhrases) {
    if (text.find(phrase) != std::string_view::npos) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Audit sampling

struct AuditEntry {
  std::string comment_id;
  std::string text;
  std::vector<DisclosureSpan> spans;
};

// Uniform sample (without replacement) of comments whose theory categories
// contain `group`; spans restricted to that group's low-level categories.
inline std::vector<AuditEntry> audit_sample(const Corpus& corpus, const PatternSet& patterns,
                                            HighLevelCategory group, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw UsageError("audit sample size must be >= 1");
  std::vector<std::pair<const Comment*, std::vector<DisclosureSpan>>> pool;
  std::vector<const Comment*> sorted;
  for (const auto& c : corpus.comments()) sorted.push_back(&c);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
  for (const Comment* c : sorted) {
    auto spans = extract_disclosures(*c, patterns);
    std::erase_if(spans, [&](const DisclosureSpan& s) { return high_level(s.category) != group; });
    if (!spans.empty()) pool.emplace_back(c, std::move(spans));
  }
  if (pool.empty()) {
    warn("audit: no comments in group " + std::string(to_string(group)));
    return {};
  }
  Rng rng(derive_seed(seed, to_string(group)));
  std::vector<AuditEntry> out;
  for (std::size_t idx : sample_without_replacement(pool.size(), n, rng)) {
    out.push_back({pool[idx].first->id, pool[idx].first->text, std::move(pool[idx].second)});
  }
  return out;
}

inline void write_audit(const std::vector<AuditEntry>& entries, std::ostream& os) {
  for (const auto& e : entries) {
    nlohmann::json spans = nlohmann::json::array();
    for (const auto& s : e.spans) {
      spans.push_back({{"category", std::string(to_string(s.category))},
                       {"start", s.char_start},
                       {"end", s.char_end}});
    }
    os << nlohmann::json{{"comment_id", e.comment_id}, {"text", e.text}, {"spans", spans}}.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// N-gram context statistics

enum class NgramPosition : std::uint8_t { Before, After };

using FrequencyTable = std::vector<std::pair<std::string, std::size_t>>;

inline FrequencyTable sorted_table(const std::unordered_map<std::string, std::size_t>& counts) {
  FrequencyTable t(counts.begin(), counts.end());
  std::sort(t.begin(), t.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return t;
}

// Counts lowercase word n-grams over the part of the sentence before (or
// after) each disclosure's payload.
inline FrequencyTable ngram_stats(const Corpus& corpus, const std::vector<std::vector<DisclosureSpan>>& spans,
                                  std::size_t n, NgramPosition position) {
  if (n < 1 || n > 3) throw UsageError("n-gram order must be 1, 2 or 3");
  std::unordered_map<std::string, std::size_t> counts;
  for (std::size_t ci = 0; ci < corpus.comments().size(); ++ci) {
    const Comment& c = corpus.comments()[ci];
    for (const auto& s : spans[ci]) {
      const TextSpan sent = c.sentences[s.sentence_index];
      const std::string_view text(c.text);
      const std::string_view window = position == NgramPosition::Before
                                          ? text.substr(sent.begin, s.payload_start - sent.begin)
                                          : text.substr(s.payload_end, sent.end - s.payload_end);
      const auto toks = word_tokens(window);
      for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        std::string gram = toks[i];
        for (std::size_t k = 1; k < n; ++k) gram += ' ' + toks[i + k];
        ++counts[gram];
      }
    }
  }
  return sorted_table(counts);
}

inline void write_frequency_table(const FrequencyTable& t, std::ostream& os) {
  os << "ngram\tcount\n";
  for (const auto& [gram, count] : t) os << gram << '\t' << count << '\n';
}

// ---------------------------------------------------------------------------
// Span and profile files (JSONL)

inline void write_spans(const Corpus& corpus, const std::vector<std::vector<DisclosureSpan>>& spans,
                        std::ostream& os) {
  for (std::size_t ci = 0; ci < spans.size(); ++ci) {
    for (const auto& s : spans[ci]) {
      os << nlohmann::json{{"comment_id", corpus.comments()[ci].id},
                           {"sentence", s.sentence_index},
                           {"category", to_string(s.category)},
                           {"theory", to_string(high_level(s.category))},
                           {"start", s.char_start},
                           {"end", s.char_end},
                           {"payload_start", s.payload_start},
                           {"payload_end", s.payload_end},
                           {"text", s.matched_text}}
                .dump()
         << '\n';
    }
  }
}

inline void write_profiles(const ProfileIndex& profiles, std::ostream& os) {
  for (const auto& [id, p] : profiles) {
    nlohmann::json theory = nlohmann::json::array();
    for (auto c : p.theory_categories.members()) theory.push_back(to_string(c));
    os << nlohmann::json{{"comment_id", id},
                         {"theory", theory},
                         {"cluster", p.cluster_id ? nlohmann::json(*p.cluster_id) : nlohmann::json(nullptr)}}
              .dump()
       << '\n';
  }
}

inline ProfileIndex read_profiles(const std::string& path) {
  ProfileIndex out;
  detail::for_each_jsonl(path, [&](const nlohmann::json& o, std::size_t ln) {
    CategoryProfile p;
    p.comment_id = detail::require_string(o, "comment_id", ln, path);
    if (auto it = o.find("theory"); it != o.end() && it->is_array()) {
      for (const auto& t : *it) {
        const auto c = t.is_string() ? parse_high_level(t.get<std::string>()) : std::nullopt;
        if (!c) throw DataError(path + ":" + std::to_string(ln) + ": unknown theory category " + t.dump());
        p.theory_categories.insert(*c);
      }
    }
    if (auto it = o.find("cluster"); it != o.end() && it->is_number_integer()) p.cluster_id = it->get<int>();
    out[p.comment_id] = std::move(p);
  });
  return out;
}

}  // namespace dlab
