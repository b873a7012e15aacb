#pragma once

// Post / comment / verdict corpus: JSONL ingestion with validation, the
// annotator activity filter and the three train/val/test split regimes.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dlab/common.hpp"
#include "dlab/text.hpp"

namespace dlab {

enum class Label : std::uint8_t { YTA = 0, NTA = 1 };

inline std::string_view to_string(Label l) { return l == Label::YTA ? "YTA" : "NTA"; }

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "YTA") return Label::YTA;
  if (s == "NTA") return Label::NTA;
  return std::nullopt;
}

struct Post {
  std::string id;
  std::string author_id;
  std::string title;
  std::string body;
};

struct Comment {
  std::string id;
  std::string author_id;
  std::string text;
  // Optional link to the post this comment was written under. Comments on a
  // target post never enter that post's context set.
  std::string post_id;
  std::vector<TextSpan> sentences;
};

struct Verdict {
  std::string post_id;
  std::string annotator_id;
  Label label = Label::NTA;
  std::string justification;
};

struct IngestReport {
  std::size_t posts = 0;
  std::size_t comments = 0;
  std::size_t verdicts = 0;
  std::size_t annotators = 0;
  // Verdicts whose annotator authored the post, dropped (line numbers when read from file).
  std::vector<std::size_t> self_edge_lines;
  // Comments left out of their author's context pool because they sit under the author's own post.
  std::size_t self_context_comments = 0;
};

class Corpus {
 public:
  Corpus() = default;

  // Validates and indexes in-memory records. `verdict_lines` (optional) gives
  // the source line per verdict for error messages.
  static Corpus build(std::vector<Post> posts, std::vector<Comment> comments,
                      std::vector<Verdict> verdicts, IngestReport* report = nullptr,
                      const std::vector<std::size_t>* verdict_lines = nullptr) {
    Corpus c;
    IngestReport rep;
    for (std::size_t i = 0; i < posts.size(); ++i) {
      if (posts[i].title.empty()) throw DataError("post '" + posts[i].id + "' has an empty title");
      if (!c.post_index_.emplace(posts[i].id, i).second) {
        throw DataError("duplicate post id '" + posts[i].id + "'");
      }
    }
    c.posts_ = std::move(posts);
    for (std::size_t i = 0; i < comments.size(); ++i) {
      if (!c.comment_index_.emplace(comments[i].id, i).second) {
        throw DataError("duplicate comment id '" + comments[i].id + "'");
      }
      if (comments[i].sentences.empty()) comments[i].sentences = segment_sentences(comments[i].text);
    }
    c.comments_ = std::move(comments);

    for (const auto& cm : c.comments_) {
      if (!cm.post_id.empty()) {
        if (const Post* p = c.find_post(cm.post_id); p && p->author_id == cm.author_id) {
          ++rep.self_context_comments;
          c.annotator_index_[cm.author_id];
          continue;
        }
      }
      c.annotator_index_[cm.author_id].push_back(cm.id);
    }

    std::set<std::pair<std::string, std::string>> seen;
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
      auto& v = verdicts[i];
      const std::size_t line = verdict_lines ? (*verdict_lines)[i] : i + 1;
      const Post* p = c.find_post(v.post_id);
      if (!p) {
        throw DataError("verdict at line " + std::to_string(line) + " references missing post id '" +
                        v.post_id + "'");
      }
      if (!seen.emplace(v.post_id, v.annotator_id).second) {
        throw DataError("duplicate verdict (" + v.post_id + ", " + v.annotator_id + ") at line " +
                        std::to_string(line));
      }
      if (p->author_id == v.annotator_id) {
        rep.self_edge_lines.push_back(line);
        continue;
      }
      c.annotator_index_[v.annotator_id];
      c.verdicts_.push_back(std::move(v));
    }
    c.reindex_verdicts();

    rep.posts = c.posts_.size();
    rep.comments = c.comments_.size();
    rep.verdicts = c.verdicts_.size();
    std::set<std::string> annotators;
    for (const auto& v : c.verdicts_) annotators.insert(v.annotator_id);
    rep.annotators = annotators.size();
    if (report) *report = std::move(rep);
    return c;
  }

  const std::vector<Post>& posts() const { return posts_; }
  const std::vector<Comment>& comments() const { return comments_; }
  const std::vector<Verdict>& verdicts() const { return verdicts_; }
  const std::map<std::string, std::vector<std::string>>& annotator_index() const {
    return annotator_index_;
  }

  const Post* find_post(std::string_view id) const {
    auto it = post_index_.find(std::string(id));
    return it == post_index_.end() ? nullptr : &posts_[it->second];
  }
  const Comment* find_comment(std::string_view id) const {
    auto it = comment_index_.find(std::string(id));
    return it == comment_index_.end() ? nullptr : &comments_[it->second];
  }
  const std::vector<std::string>& comments_of(const std::string& annotator) const {
    static const std::vector<std::string> empty;
    auto it = annotator_index_.find(annotator);
    return it == annotator_index_.end() ? empty : it->second;
  }

  const Verdict* find_verdict(std::string_view post_id, std::string_view annotator_id) const {
    auto it = verdict_index_.find(verdict_key(post_id, annotator_id));
    return it == verdict_index_.end() ? nullptr : &verdicts_[it->second];
  }

  static std::string verdict_key(std::string_view post_id, std::string_view annotator_id) {
    std::string k(post_id);
    k += '\x1f';
    k += annotator_id;
    return k;
  }

  // Same posts/comments/index with a subset of verdicts.
  Corpus with_verdicts(std::vector<Verdict> verdicts) const {
    Corpus c = *this;
    c.verdicts_ = std::move(verdicts);
    c.reindex_verdicts();
    return c;
  }

 private:
  void reindex_verdicts() {
    verdict_index_.clear();
    for (std::size_t i = 0; i < verdicts_.size(); ++i) {
      verdict_index_.emplace(verdict_key(verdicts_[i].post_id, verdicts_[i].annotator_id), i);
    }
  }

  std::vector<Post> posts_;
  std::vector<Comment> comments_;
  std::vector<Verdict> verdicts_;
  std::unordered_map<std::string, std::size_t> post_index_;
  std::unordered_map<std::string, std::size_t> comment_index_;
  std::unordered_map<std::string, std::size_t> verdict_index_;
  std::map<std::string, std::vector<std::string>> annotator_index_;
};

namespace detail {

inline std::string require_string(const nlohmann::json& obj, const char* key, std::size_t line,
                                  const std::string& file) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw DataError(file + ":" + std::to_string(line) + ": missing or non-string key '" + key + "'");
  }
  return it->get<std::string>();
}

// Calls fn(json, line_number) for every non-blank line.
template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
    }
    if (!obj.is_object()) throw DataError(path + ":" + std::to_string(lineno) + ": expected a JSON object");
    fn(obj, lineno);
  }
}

}  // namespace detail

inline Corpus ingest_corpus(const std::string& posts_path, const std::string& comments_path,
                            const std::string& verdicts_path, IngestReport* report = nullptr) {
  std::vector<Post> posts;
  detail::for_each_jsonl(posts_path, [&](const nlohmann::json& o, std::size_t ln) {
    posts.push_back({detail::require_string(o, "id", ln, posts_path),
                     detail::require_string(o, "author_id", ln, posts_path),
                     detail::require_string(o, "title", ln, posts_path),
                     detail::require_string(o, "body", ln, posts_path)});
    if (posts.back().title.empty()) {
      throw DataError(posts_path + ":" + std::to_string(ln) + ": empty title");
    }
  });
  std::vector<Comment> comments;
  detail::for_each_jsonl(comments_path, [&](const nlohmann::json& o, std::size_t ln) {
    Comment c;
    c.id = detail::require_string(o, "id", ln, comments_path);
    c.author_id = detail::require_string(o, "author_id", ln, comments_path);
    c.text = detail::require_string(o, "text", ln, comments_path);
    if (auto it = o.find("post_id"); it != o.end() && it->is_string()) c.post_id = it->get<std::string>();
    comments.push_back(std::move(c));
  });
  std::vector<Verdict> verdicts;
  std::vector<std::size_t> lines;
  detail::for_each_jsonl(verdicts_path, [&](const nlohmann::json& o, std::size_t ln) {
    Verdict v;
    v.post_id = detail::require_string(o, "post_id", ln, verdicts_path);
    v.annotator_id = detail::require_string(o, "annotator_id", ln, verdicts_path);
    const auto label = detail::require_string(o, "label", ln, verdicts_path);
    auto parsed = parse_label(label);
    if (!parsed) {
      throw DataError(verdicts_path + ":" + std::to_string(ln) + ": unknown label '" + label + "'");
    }
    v.label = *parsed;
    v.justification = detail::require_string(o, "justification", ln, verdicts_path);
    verdicts.push_back(std::move(v));
    lines.push_back(ln);
  });
  return Corpus::build(std::move(posts), std::move(comments), std::move(verdicts), report, &lines);
}

inline void write_corpus(const Corpus& c, const std::string& posts_path,
                         const std::string& comments_path, const std::string& verdicts_path) {
  std::ofstream p(posts_path, std::ios::binary), cm(comments_path, std::ios::binary),
      v(verdicts_path, std::ios::binary);
  if (!p || !cm || !v) throw DataError("cannot write corpus files");
  for (const auto& post : c.posts()) {
    p << nlohmann::json{{"id", post.id}, {"author_id", post.author_id}, {"title", post.title},
                        {"body", post.body}}
             .dump()
      << '\n';
  }
  for (const auto& comment : c.comments()) {
    nlohmann::json o{{"id", comment.id}, {"author_id", comment.author_id}, {"text", comment.text}};
    if (!comment.post_id.empty()) o["post_id"] = comment.post_id;
    cm << o.dump() << '\n';
  }
  for (const auto& verdict : c.verdicts()) {
    v << nlohmann::json{{"post_id", verdict.post_id}, {"annotator_id", verdict.annotator_id},
                        {"label", std::string(to_string(verdict.label))},
                        {"justification", verdict.justification}}
             .dump()
      << '\n';
  }
}

struct FilterReport {
  std::size_t annotators_before = 0;
  std::size_t annotators_retained = 0;
  std::size_t verdicts_dropped = 0;
  std::vector<std::string> dropped_annotators;
};

// Keeps verdicts whose annotator has between min and max background comments (inclusive).
inline Corpus filter_annotators(const Corpus& c, std::size_t min_comments, std::size_t max_comments,
                                FilterReport* report = nullptr) {
  if (min_comments > max_comments) throw UsageError("filter bounds: min_comments > max_comments");
  FilterReport rep;
  std::set<std::string> kept, dropped;
  std::vector<Verdict> out;
  for (const auto& v : c.verdicts()) {
    const std::size_t n = c.comments_of(v.annotator_id).size();
    if (n >= min_comments && n <= max_comments) {
      kept.insert(v.annotator_id);
      out.push_back(v);
    } else {
      dropped.insert(v.annotator_id);
      ++rep.verdicts_dropped;
    }
  }
  rep.annotators_before = kept.size() + dropped.size();
  rep.annotators_retained = kept.size();
  rep.dropped_annotators.assign(dropped.begin(), dropped.end());
  if (report) *report = std::move(rep);
  return c.with_verdicts(std::move(out));
}

// ---------------------------------------------------------------------------
// Splits

enum class SplitKind : std::uint8_t { Verdict, Situation, Author };
enum class Partition : std::uint8_t { Train = 0, Val = 1, Test = 2 };

inline std::string_view to_string(SplitKind k) {
  switch (k) {
    case SplitKind::Verdict: return "verdict";
    case SplitKind::Situation: return "situation";
    case SplitKind::Author: return "author";
  }
  return "?";
}

inline SplitKind parse_split_kind(std::string_view s) {
  if (s == "verdict") return SplitKind::Verdict;
  if (s == "situation") return SplitKind::Situation;
  if (s == "author") return SplitKind::Author;
  throw UsageError("unknown split kind '" + std::string(s) + "'");
}

inline std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::Train: return "train";
    case Partition::Val: return "val";
    case Partition::Test: return "test";
  }
  return "?";
}

inline Partition parse_partition(std::string_view s) {
  if (s == "train") return Partition::Train;
  if (s == "val") return Partition::Val;
  if (s == "test") return Partition::Test;
  throw DataError("unknown partition '" + std::string(s) + "'");
}

struct SplitSpec {
  SplitKind kind = SplitKind::Verdict;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
  std::vector<Partition> assignment;  // indexed by verdict index

  std::vector<std::size_t> indices(Partition p) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      if (assignment[i] == p) out.push_back(i);
    }
    return out;
  }
};

inline const std::string& group_key(const Verdict& v, SplitKind kind) {
  return kind == SplitKind::Author ? v.annotator_id : v.post_id;
}

inline SplitSpec make_split(const Corpus& c, SplitKind kind, std::array<double, 3> ratios,
                            std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw UsageError("split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw UsageError("split ratios must sum to 1");

  SplitSpec s;
  s.kind = kind;
  s.ratios = ratios;
  s.seed = seed;
  const std::size_t n = c.verdicts().size();
  s.assignment.assign(n, Partition::Train);
  Rng rng(seed);

  if (kind == SplitKind::Verdict) {
    if (n < 3) throw DataError("split needs at least 3 verdicts");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle(order, rng);
    const auto cut1 = static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n)));
    const auto cut2 = static_cast<std::size_t>(std::llround((ratios[0] + ratios[1]) * static_cast<double>(n)));
    for (std::size_t r = 0; r < n; ++r) {
      s.assignment[order[r]] = r < cut1 ? Partition::Train : (r < cut2 ? Partition::Val : Partition::Test);
    }
    return s;
  }

  // Group verdicts by key (std::map gives a content-determined order), shuffle
  // the groups, seed each partition with one group, then hand each remaining
  // group to the partition furthest below its verdict-count target.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[group_key(c.verdicts()[i], kind)].push_back(i);
  if (groups.size() < 3) {
    throw DataError("split: " + std::to_string(groups.size()) + " groups cannot fill 3 partitions");
  }
  std::vector<const std::vector<std::size_t>*> order;
  order.reserve(groups.size());
  for (const auto& [key, members] : groups) order.push_back(&members);
  shuffle(order, rng);

  std::array<double, 3> filled{0, 0, 0};
  for (std::size_t g = 0; g < order.size(); ++g) {
    std::size_t target = 0;
    if (g < 3) {
      target = g;
    } else {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t p = 0; p < 3; ++p) {
        const double deficit = ratios[p] * static_cast<double>(n) - filled[p];
        if (deficit > best) {
          best = deficit;
          target = p;
        }
      }
    }
    for (std::size_t idx : *order[g]) s.assignment[idx] = static_cast<Partition>(target);
    filled[target] += static_cast<double>(order[g]->size());
  }
  return s;
}

struct SplitViolations {
  std::vector<std::string> shared_ids;  // post ids (situation) or annotator ids (author)
  std::vector<std::string> problems;    // structural problems (size mismatch, ...)
  bool ok() const { return shared_ids.empty() && problems.empty(); }
};

inline SplitViolations verify_split(const SplitSpec& s, const Corpus& c) {
  SplitViolations out;
  if (s.assignment.size() != c.verdicts().size()) {
    out.problems.push_back("assignment covers " + std::to_string(s.assignment.size()) +
                           " verdicts, corpus has " + std::to_string(c.verdicts().size()));
    return out;
  }
  if (s.kind == SplitKind::Verdict) return out;
  std::map<std::string, std::uint8_t> seen;  // bitmask of partitions per group key
  for (std::size_t i = 0; i < s.assignment.size(); ++i) {
    seen[group_key(c.verdicts()[i], s.kind)] |= static_cast<std::uint8_t>(1u << static_cast<unsigned>(s.assignment[i]));
  }
  for (const auto& [key, mask] : seen) {
    if (mask & (mask - 1)) out.shared_ids.push_back(key);
  }
  return out;
}

inline void write_split(const SplitSpec& s, std::ostream& os, const nlohmann::json& meta = {}) {
  nlohmann::json header{{"kind", std::string(to_string(s.kind))},
                        {"ratios", {s.ratios[0], s.ratios[1], s.ratios[2]}},
                        {"seed", s.seed}};
  for (auto it = meta.begin(); it != meta.end(); ++it) header[it.key()] = it.value();
  os << header.dump() << '\n';
  for (std::size_t i = 0; i < s.assignment.size(); ++i) {
    os << nlohmann::json{{"verdict_index", i}, {"partition", std::string(to_string(s.assignment[i]))}}.dump()
       << '\n';
  }
}

inline SplitSpec read_split(const std::string& path) {
  SplitSpec s;
  bool header = true;
  std::vector<std::pair<std::size_t, Partition>> rows;
  detail::for_each_jsonl(path, [&](const nlohmann::json& o, std::size_t ln) {
    if (header) {
      header = false;
      try {
        s.kind = parse_split_kind(o.at("kind").get<std::string>());
        const auto& r = o.at("ratios");
        for (std::size_t i = 0; i < 3; ++i) s.ratios[i] = r.at(i).get<double>();
        s.seed = o.at("seed").get<std::uint64_t>();
      } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ":" + std::to_string(ln) + ": bad split header: " + e.what());
      }
      return;
    }
    try {
      rows.emplace_back(o.at("verdict_index").get<std::size_t>(),
                        parse_partition(o.at("partition").get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(ln) + ": bad split row: " + e.what());
    }
  });
  s.assignment.assign(rows.size(), Partition::Train);
  std::vector<bool> filled(rows.size(), false);
  for (const auto& [idx, part] : rows) {
    if (idx >= rows.size() || filled[idx]) {
      throw DataError(path + ": verdict_index " + std::to_string(idx) + " out of range or repeated");
    }
    filled[idx] = true;
    s.assignment[idx] = part;
  }
  return s;
}

}  // namespace dlab
