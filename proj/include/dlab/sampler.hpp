#pragma once

// Per-(annotator, post) context sets under the random/similar x
// comments/sentences strategies, optional category filtering, and the
// coverage / diversity analytics computed over sampled contexts.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlab/common.hpp"
#include "dlab/corpus.hpp"
#include "dlab/disclosure.hpp"
#include "dlab/embed.hpp"

namespace dlab {

// Embedding row ids for posts (title + body), comments and single sentences.
inline std::string post_key(std::string_view post_id) { return "p:" + std::string(post_id); }
inline std::string comment_key(std::string_view comment_id) { return "c:" + std::string(comment_id); }
inline std::string sentence_key(std::string_view comment_id, std::size_t index) {
  return "s:" + std::string(comment_id) + "#" + std::to_string(index);
}

enum class Strategy : std::uint8_t { RandomComments, RandomSentences, SimilarComments, SimilarSentences };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::RandomComments: return "random_comments";
    case Strategy::RandomSentences: return "random_sentences";
    case Strategy::SimilarComments: return "similar_comments";
    case Strategy::SimilarSentences: return "similar_sentences";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view s) {
  for (auto st : {Strategy::RandomComments, Strategy::RandomSentences, Strategy::SimilarComments,
                  Strategy::SimilarSentences}) {
    if (to_string(st) == s) return st;
  }
  throw UsageError("unknown sampling strategy '" + std::string(s) + "'");
}

inline bool is_sentence_strategy(Strategy s) {
  return s == Strategy::RandomSentences || s == Strategy::SimilarSentences;
}
inline bool is_similar_strategy(Strategy s) {
  return s == Strategy::SimilarComments || s == Strategy::SimilarSentences;
}

struct CategoryFilter {
  enum class Kind : std::uint8_t { Theory, Cluster };
  Kind kind = Kind::Theory;
  HighLevelCategory theory = HighLevelCategory::Demographics;
  int cluster = 0;

  bool accepts(const CategoryProfile* profile) const {
    if (!profile) return false;
    if (kind == Kind::Theory) return profile->theory_categories.contains(theory);
    return profile->cluster_id && *profile->cluster_id == cluster;
  }

  std::string name() const {
    return kind == Kind::Theory ? "theory:" + std::string(to_string(theory)) : "cluster:" + std::to_string(cluster);
  }

  static CategoryFilter parse(std::string_view s) {
    CategoryFilter f;
    if (s.rfind("theory:", 0) == 0) {
      auto c = parse_high_level(s.substr(7));
      if (!c) throw UsageError("unknown theory category '" + std::string(s.substr(7)) + "'");
      f.kind = Kind::Theory;
      f.theory = *c;
      return f;
    }
    if (s.rfind("cluster:", 0) == 0) {
      f.kind = Kind::Cluster;
      try {
        f.cluster = std::stoi(std::string(s.substr(8)));
      } catch (...) {
        throw UsageError("bad cluster filter '" + std::string(s) + "'");
      }
      if (f.cluster < 0) throw UsageError("cluster filter must be >= 0");
      return f;
    }
    throw UsageError("category filter must look like theory:<Name> or cluster:<index>, got '" + std::string(s) + "'");
  }
};

struct SamplerConfig {
  Strategy strategy = Strategy::SimilarComments;
  std::size_t max_samples = 5;
  std::optional<CategoryFilter> category_filter;
  std::uint64_t seed = 0;
  // Category-filtered sampling is restricted to similar_comments with at
  // most five samples unless this is switched off.
  bool replication_mode = true;

  void validate() const {
    if (max_samples < 1) throw UsageError("max_samples must be >= 1");
    if (category_filter && (strategy != Strategy::SimilarComments || max_samples > 5)) {
      const std::string msg = "category filter with " + std::string(to_string(strategy)) + " and max_samples " +
                              std::to_string(max_samples) + " departs from the similar_comments/<=5 setup";
      if (replication_mode) throw UsageError(msg + " (disable replication mode to allow)");
      warn(msg);
    }
  }
};

struct ContextItem {
  std::string comment_id;
  std::optional<std::size_t> sentence_index;
  std::string text;
  std::optional<double> similarity;

  std::string embedding_key() const {
    return sentence_index ? sentence_key(comment_id, *sentence_index) : comment_key(comment_id);
  }
};

struct ContextSet {
  std::string annotator_id;
  std::string post_id;
  std::vector<ContextItem> items;
};

// The annotator's comments eligible as context for `post_id`, sorted by id:
// excludes comments written under the target post and any comment whose text
// is the justification being predicted.
inline std::vector<const Comment*> candidate_comments(const Corpus& corpus, const std::string& annotator,
                                                      const std::string& post_id,
                                                      const ProfileIndex* profiles = nullptr,
                                                      const std::optional<CategoryFilter>& filter = std::nullopt) {
  const Verdict* target = corpus.find_verdict(post_id, annotator);
  std::vector<const Comment*> out;
  for (const auto& cid : corpus.comments_of(annotator)) {
    const Comment* c = corpus.find_comment(cid);
    if (!c || c->post_id == post_id) continue;
    if (target && !target->justification.empty() && c->text == target->justification) continue;
    if (filter) {
      const CategoryProfile* prof = nullptr;
      if (profiles) {
        auto it = profiles->find(cid);
        if (it != profiles->end()) prof = &it->second;
      }
      if (!filter->accepts(prof)) continue;
    }
    out.push_back(c);
  }
  std::sort(out.begin(), out.end(), [](const Comment* a, const Comment* b) { return a->id < b->id; });
  return out;
}

inline ContextSet sample_context(const std::string& annotator, const std::string& post_id, const Corpus& corpus,
                                 const EmbeddingMatrix* embeddings, const ProfileIndex& profiles,
                                 const SamplerConfig& cfg) {
  cfg.validate();
  if (!corpus.find_post(post_id)) throw DataError("sample_context: unknown post '" + post_id + "'");
  if (!corpus.annotator_index().contains(annotator)) {
    throw DataError("sample_context: unknown annotator '" + annotator + "'");
  }
  ContextSet out{annotator, post_id, {}};
  const auto comments = candidate_comments(corpus, annotator, post_id, &profiles, cfg.category_filter);

  std::vector<ContextItem> pool;
  for (const Comment* c : comments) {
    if (is_sentence_strategy(cfg.strategy)) {
      for (std::size_t i = 0; i < c->sentences.size(); ++i) {
        const TextSpan s = c->sentences[i];
        pool.push_back({c->id, i, c->text.substr(s.begin, s.size()), std::nullopt});
      }
    } else {
      pool.push_back({c->id, std::nullopt, c->text, std::nullopt});
    }
  }
  if (pool.empty()) return out;

  if (!is_similar_strategy(cfg.strategy)) {
    Rng rng(derive_seed(cfg.seed, Corpus::verdict_key(post_id, annotator)));
    for (std::size_t idx : sample_without_replacement(pool.size(), cfg.max_samples, rng)) {
      out.items.push_back(std::move(pool[idx]));
    }
    return out;
  }

  if (!embeddings) throw UsageError("similar strategies need embeddings");
  const auto query = embeddings->at(post_key(post_id));
  std::vector<std::size_t> rows;
  std::map<std::string, std::size_t> by_key;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const std::string key = pool[i].embedding_key();
    auto r = embeddings->find(key);
    if (!r) throw DataError("sample_context: no embedding for '" + key + "'");
    rows.push_back(*r);
    by_key[key] = i;
  }
  for (const auto& hit : top_k_similar(query, *embeddings, cfg.max_samples, rows)) {
    ContextItem item = pool[by_key.at(hit.id)];
    item.similarity = hit.score;
    out.items.push_back(std::move(item));
  }
  return out;
}

// Every eligible comment (the "all comments" baseline), in id order.
inline ContextSet all_comments_context(const std::string& annotator, const std::string& post_id,
                                       const Corpus& corpus) {
  ContextSet out{annotator, post_id, {}};
  for (const Comment* c : candidate_comments(corpus, annotator, post_id)) {
    out.items.push_back({c->id, std::nullopt, c->text, std::nullopt});
  }
  return out;
}

// Share of annotators with at least `threshold` comments passing the filter.
inline double five_plus_percent(const Corpus& corpus, const std::set<std::string>& annotators,
                                const ProfileIndex& profiles, const CategoryFilter& filter,
                                std::size_t threshold = 5) {
  if (annotators.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& a : annotators) {
    std::size_t n = 0;
    for (const auto& cid : corpus.comments_of(a)) {
      auto it = profiles.find(cid);
      if (filter.accepts(it == profiles.end() ? nullptr : &it->second)) ++n;
    }
    if (n >= threshold) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(annotators.size());
}

// ---------------------------------------------------------------------------
// Context dump (JSONL)

inline void write_contexts(const std::vector<ContextSet>& contexts, std::ostream& os,
                           const nlohmann::json& meta = {}) {
  if (!meta.is_null()) os << nlohmann::json{{"meta", meta}}.dump() << '\n';
  for (const auto& c : contexts) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& it : c.items) {
      nlohmann::json j{{"comment_id", it.comment_id}};
      if (it.sentence_index) j["sentence"] = *it.sentence_index;
      j["similarity"] = it.similarity ? nlohmann::json(*it.similarity) : nlohmann::json(nullptr);
      items.push_back(std::move(j));
    }
    os << nlohmann::json{{"annotator_id", c.annotator_id}, {"post_id", c.post_id}, {"items", items}}.dump() << '\n';
  }
}

inline std::vector<ContextSet> read_contexts(const std::string& path, const Corpus* corpus = nullptr) {
  std::vector<ContextSet> out;
  detail::for_each_jsonl(path, [&](const nlohmann::json& o, std::size_t ln) {
    if (o.contains("meta")) return;
    try {
      ContextSet c{o.at("annotator_id").get<std::string>(), o.at("post_id").get<std::string>(), {}};
      for (const auto& it : o.at("items")) {
        ContextItem item;
        item.comment_id = it.at("comment_id").get<std::string>();
        if (it.contains("sentence")) item.sentence_index = it.at("sentence").get<std::size_t>();
        if (it.contains("similarity") && !it.at("similarity").is_null()) item.similarity = it.at("similarity").get<double>();
        if (corpus) {
          if (const Comment* cm = corpus->find_comment(item.comment_id)) {
            if (item.sentence_index && *item.sentence_index < cm->sentences.size()) {
              const TextSpan s = cm->sentences[*item.sentence_index];
              item.text = cm->text.substr(s.begin, s.size());
            } else {
              item.text = cm->text;
            }
          }
        }
        c.items.push_back(std::move(item));
      }
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(ln) + ": bad context row: " + e.what());
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Analytics

struct CoverageTable {
  std::size_t items = 0;
  std::array<double, kHighLevelCount> theory_pct{};
  double theory_none_pct = 0;
  std::vector<double> cluster_pct;  // index = cluster id
  double cluster_none_pct = 0;
};

// Percent of sampled items whose source comment carries each tag. Theory
// percentages can sum past 100 (multi-membership); cluster + none sum to 100.
inline CoverageTable category_coverage(const std::vector<ContextSet>& contexts, const ProfileIndex& profiles,
                                       std::size_t n_clusters) {
  CoverageTable t;
  t.cluster_pct.assign(n_clusters, 0.0);
  std::array<std::size_t, kHighLevelCount> theory{};
  std::vector<std::size_t> cluster(n_clusters, 0);
  std::size_t theory_none = 0, cluster_none = 0;
  for (const auto& ctx : contexts) {
    for (const auto& item : ctx.items) {
      ++t.items;
      auto it = profiles.find(item.comment_id);
      const CategoryProfile* p = it == profiles.end() ? nullptr : &it->second;
      if (!p || p->theory_categories.empty()) ++theory_none;
      if (p) {
        for (auto c : p->theory_categories.members()) ++theory[static_cast<std::size_t>(c)];
      }
      if (p && p->cluster_id && static_cast<std::size_t>(*p->cluster_id) < n_clusters) {
        ++cluster[static_cast<std::size_t>(*p->cluster_id)];
      } else {
        ++cluster_none;
      }
    }
  }
  if (t.items == 0) return t;
  const double denom = static_cast<double>(t.items) / 100.0;
  for (std::size_t i = 0; i < kHighLevelCount; ++i) t.theory_pct[i] = static_cast<double>(theory[i]) / denom;
  for (std::size_t i = 0; i < n_clusters; ++i) t.cluster_pct[i] = static_cast<double>(cluster[i]) / denom;
  t.theory_none_pct = static_cast<double>(theory_none) / denom;
  t.cluster_none_pct = static_cast<double>(cluster_none) / denom;
  return t;
}

inline void write_coverage(const CoverageTable& t, std::ostream& os) {
  os << "group\tcategory\tpercent\n";
  for (std::size_t i = 0; i < kHighLevelCount; ++i) {
    os << "theory\t" << to_string(kHighLevelCategories[i]) << '\t' << t.theory_pct[i] << '\n';
  }
  os << "theory\tnone\t" << t.theory_none_pct << '\n';
  for (std::size_t i = 0; i < t.cluster_pct.size(); ++i) os << "cluster\t" << i << '\t' << t.cluster_pct[i] << '\n';
  os << "cluster\tnone\t" << t.cluster_none_pct << '\n';
}

// Five-number box summary with linear-interpolated quartiles and Tukey
// (1.5 IQR) whiskers clamped to observed values.
struct BoxSummary {
  std::size_t n = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  double lower_whisker = 0, upper_whisker = 0;
};

inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return 0.0;
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline BoxSummary box_summary(std::vector<double> v) {
  BoxSummary b;
  b.n = v.size();
  if (v.empty()) return b;
  std::sort(v.begin(), v.end());
  b.min = v.front();
  b.max = v.back();
  b.q1 = quantile_sorted(v, 0.25);
  b.median = quantile_sorted(v, 0.5);
  b.q3 = quantile_sorted(v, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr, hi_fence = b.q3 + 1.5 * iqr;
  b.lower_whisker = *std::find_if(v.begin(), v.end(), [&](double x) { return x >= lo_fence; });
  b.upper_whisker = *std::find_if(v.rbegin(), v.rend(), [&](double x) { return x <= hi_fence; });
  return b;
}

struct DiversityReport {
  std::map<std::string, double> coverage_pct;  // per annotator
  std::map<std::string, double> rank_ratio;    // per annotator with >= 2 distinct sampled comments
  BoxSummary coverage;
  BoxSummary ratio;
};

// Per annotator: share of the comment pool ever sampled, and the count ratio
// between the most and second-most frequently sampled comment.
inline DiversityReport similar_post_diversity(const std::vector<ContextSet>& contexts,
                                              const std::map<std::string, std::size_t>& pool_sizes) {
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (const auto& ctx : contexts) {
    auto& per = counts[ctx.annotator_id];
    for (const auto& item : ctx.items) ++per[item.comment_id];
  }
  DiversityReport rep;
  std::vector<double> cov, ratio;
  for (const auto& [annotator, per] : counts) {
    auto ps = pool_sizes.find(annotator);
    if (ps != pool_sizes.end() && ps->second > 0) {
      const double c = 100.0 * static_cast<double>(per.size()) / static_cast<double>(ps->second);
      rep.coverage_pct[annotator] = c;
      cov.push_back(c);
    }
    if (per.size() >= 2) {
      std::vector<std::size_t> freq;
      for (const auto& [cid, n] : per) freq.push_back(n);
      std::partial_sort(freq.begin(), freq.begin() + 2, freq.end(), std::greater<>());
      const double r = static_cast<double>(freq[0]) / static_cast<double>(freq[1]);
      rep.rank_ratio[annotator] = r;
      ratio.push_back(r);
    }
  }
  rep.coverage = box_summary(std::move(cov));
  rep.ratio = box_summary(std::move(ratio));
  return rep;
}

inline void write_box(const std::string& name, const BoxSummary& b, std::ostream& os) {
  os << name << '\t' << b.n << '\t' << b.lower_whisker << '\t' << b.q1 << '\t' << b.median << '\t' << b.q3 << '\t'
     << b.upper_whisker << '\n';
}

inline void write_diversity(const DiversityReport& r, std::ostream& os) {
  os << "quantity\tn\tlower_whisker\tq1\tmedian\tq3\tupper_whisker\n";
  write_box("coverage_pct", r.coverage, os);
  write_box("rank_ratio", r.ratio, os);
}

}  // namespace dlab
