#pragma once

// Config-driven experiment runner: ingest -> filter -> extract -> (cluster)
// -> split -> per-condition sample/train/evaluate -> Welch test -> results.tsv.
//
// Seed derivations (top-level seed S):
//   split     derive_seed(S, "split")            unless [split] seed is set
//   embed     derive_seed(S, "embed")            salt of the hashed embedder
//   cluster   derive_seed(S, "cluster")
//   sampling  derive_seed(S, "sample:" + condition), then per (annotator, post)
//   training  derive_seed(S, "train:" + condition) + run index

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "dlab/cluster.hpp"
#include "dlab/common.hpp"
#include "dlab/corpus.hpp"
#include "dlab/disclosure.hpp"
#include "dlab/embed.hpp"
#include "dlab/model.hpp"
#include "dlab/parallel.hpp"
#include "dlab/sampler.hpp"

namespace dlab {

using ConfigTree = boost::property_tree::ptree;

inline std::vector<double> parse_doubles(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& part : split_list(s, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw UsageError("bad number '" + part + "' in " + what);
    }
  }
  return out;
}

inline std::string join(const std::vector<std::string>& xs, std::string_view sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? std::string(sep) : "") + xs[i];
  return out;
}

inline std::string format_fixed(double x, int digits = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << x;
  return os.str();
}

struct ExperimentConfig {
  std::uint64_t seed = 1;
  // [corpus]
  std::string posts, comments, verdicts;
  std::size_t min_comments = 0, max_comments = 0;  // max 0 = unbounded
  // [embed]
  EmbedderKind embed_kind = EmbedderKind::HashedNgram;
  std::size_t embed_dim = 4096;
  std::size_t ngram_lo = 1, ngram_hi = 2;
  std::string embx_path;
  // [cluster]
  bool cluster = false;
  std::size_t cluster_k = 10;
  std::size_t svd_dim = 5;
  // [split]
  SplitKind split_kind = SplitKind::Situation;
  std::array<double, 3> split_ratios{0.7, 0.15, 0.15};
  std::optional<std::uint64_t> split_seed;
  // [grid]
  std::vector<std::string> baselines;
  std::vector<Strategy> strategies{Strategy::SimilarComments};
  std::vector<std::size_t> max_samples{5};
  std::vector<std::string> categories;
  Strategy category_strategy = Strategy::SimilarComments;
  std::size_t category_max_samples = 5;
  std::string significance_baseline = "no_comments";
  bool replication_mode = true;
  // [train]
  TrainConfig train;
  // [output]
  std::string out_dir = "dlab_out";
  bool dump_contexts = false;

  static ExperimentConfig from_tree(const ConfigTree& t) {
    ExperimentConfig c;
    auto str = [&](const char* key, const std::string& def) { return t.get<std::string>(key, def); };
    auto num = [&](const char* key, std::size_t def) {
      const std::string v = t.get<std::string>(key, std::to_string(def));
      try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size() || x < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(x);
      } catch (const std::exception&) {
        throw UsageError(std::string("config ") + key + ": expected a non-negative integer, got '" + v + "'");
      }
    };
    auto real = [&](const char* key, double def) {
      const auto v = parse_doubles(t.get<std::string>(key, format_fixed(def, 12)), key);
      if (v.size() != 1) throw UsageError(std::string("config ") + key + ": expected one number");
      return v[0];
    };
    auto flag = [&](const char* key, bool def) {
      const std::string v = ascii_lower(t.get<std::string>(key, def ? "true" : "false"));
      if (v == "true" || v == "1" || v == "yes") return true;
      if (v == "false" || v == "0" || v == "no") return false;
      throw UsageError(std::string("config ") + key + ": expected true/false, got '" + v + "'");
    };

    c.seed = num("run.seed", c.seed);
    c.posts = str("corpus.posts", "");
    c.comments = str("corpus.comments", "");
    c.verdicts = str("corpus.verdicts", "");
    c.min_comments = num("corpus.min_comments", 0);
    c.max_comments = num("corpus.max_comments", 0);

    const std::string kind = str("embed.kind", "hashed");
    if (kind == "hashed") {
      c.embed_kind = EmbedderKind::HashedNgram;
    } else if (kind == "external") {
      c.embed_kind = EmbedderKind::External;
    } else {
      throw UsageError("config embed.kind must be hashed or external, got '" + kind + "'");
    }
    c.embed_dim = num("embed.dim", c.embed_dim);
    c.ngram_lo = num("embed.ngram_lo", c.ngram_lo);
    c.ngram_hi = num("embed.ngram_hi", c.ngram_hi);
    c.embx_path = str("embed.path", "");

    c.cluster = flag("cluster.enabled", c.cluster);
    c.cluster_k = num("cluster.k", c.cluster_k);
    c.svd_dim = num("cluster.svd_dim", c.svd_dim);

    c.split_kind = parse_split_kind(str("split.kind", std::string(to_string(c.split_kind))));
    const auto ratios = parse_doubles(str("split.ratios", "0.7,0.15,0.15"), "split.ratios");
    if (ratios.size() != 3) throw UsageError("config split.ratios needs three values");
    c.split_ratios = {ratios[0], ratios[1], ratios[2]};
    if (t.get_optional<std::string>("split.seed")) c.split_seed = num("split.seed", 0);

    c.baselines = split_list(str("grid.baselines", ""), ',');
    c.strategies.clear();
    for (const auto& s : split_list(str("grid.strategies", "similar_comments"), ',')) {
      c.strategies.push_back(parse_strategy(s));
    }
    c.max_samples.clear();
    for (double x : parse_doubles(str("grid.max_samples", "5"), "grid.max_samples")) {
      if (x < 1 || x != std::floor(x)) throw UsageError("grid.max_samples entries must be positive integers");
      c.max_samples.push_back(static_cast<std::size_t>(x));
    }
    c.categories = split_list(str("grid.categories", ""), ',');
    c.category_strategy = parse_strategy(str("grid.category_strategy", "similar_comments"));
    c.category_max_samples = num("grid.category_max_samples", c.category_max_samples);
    c.significance_baseline = str("grid.significance_baseline", c.significance_baseline);
    c.replication_mode = flag("grid.replication_mode", c.replication_mode);

    c.train.epochs = num("train.epochs", c.train.epochs);
    c.train.learning_rate = real("train.lr", c.train.learning_rate);
    c.train.gamma = real("train.gamma", c.train.gamma);
    const std::string alpha = str("train.alpha", "auto");
    if (alpha != "auto") {
      const auto a = parse_doubles(alpha, "train.alpha");
      if (a.size() != 2) throw UsageError("config train.alpha needs two values (YTA,NTA) or 'auto'");
      c.train.alpha = std::array<double, kClasses>{a[0], a[1]};
    }
    c.train.batch_size = num("train.batch_size", c.train.batch_size);
    c.train.runs = num("train.runs", c.train.runs);

    c.out_dir = str("output.dir", c.out_dir);
    c.dump_contexts = flag("output.dump_contexts", c.dump_contexts);
    c.validate();
    return c;
  }

  void validate() const {
    if (baselines.empty() && strategies.empty() && categories.empty()) throw UsageError("experiment grid is empty");
    for (const auto& b : baselines) {
      if (b != "no_comments" && b != "all_comments") throw UsageError("unknown baseline '" + b + "'");
    }
    if (!strategies.empty() && max_samples.empty()) throw UsageError("grid.max_samples is empty");
    if (embed_kind == EmbedderKind::External && embx_path.empty()) throw UsageError("embed.kind=external needs embed.path");
    if (embed_kind == EmbedderKind::HashedNgram) {
      EmbedderConfig{EmbedderKind::HashedNgram, embed_dim, ngram_lo, ngram_hi, 0}.validate();
    }
    if (cluster && (cluster_k < 2 || svd_dim < 1)) throw UsageError("cluster needs k >= 2 and svd_dim >= 1");
    train.validate();
  }

  ConfigTree to_tree() const {
    ConfigTree t;
    t.put("run.seed", seed);
    t.put("corpus.posts", posts);
    t.put("corpus.comments", comments);
    t.put("corpus.verdicts", verdicts);
    t.put("corpus.min_comments", min_comments);
    t.put("corpus.max_comments", max_comments);
    t.put("embed.kind", embed_kind == EmbedderKind::HashedNgram ? "hashed" : "external");
    t.put("embed.dim", embed_dim);
    t.put("embed.ngram_lo", ngram_lo);
    t.put("embed.ngram_hi", ngram_hi);
    t.put("embed.path", embx_path);
    t.put("cluster.enabled", cluster ? "true" : "false");
    t.put("cluster.k", cluster_k);
    t.put("cluster.svd_dim", svd_dim);
    t.put("split.kind", std::string(to_string(split_kind)));
    t.put("split.ratios", format_fixed(split_ratios[0], 4) + "," + format_fixed(split_ratios[1], 4) + "," +
                              format_fixed(split_ratios[2], 4));
    if (split_seed) t.put("split.seed", *split_seed);
    t.put("grid.baselines", join(baselines));
    std::vector<std::string> st, ms;
    for (auto s : strategies) st.emplace_back(to_string(s));
    for (auto m : max_samples) ms.push_back(std::to_string(m));
    t.put("grid.strategies", join(st));
    t.put("grid.max_samples", join(ms));
    t.put("grid.categories", join(categories));
    t.put("grid.category_strategy", std::string(to_string(category_strategy)));
    t.put("grid.category_max_samples", category_max_samples);
    t.put("grid.significance_baseline", significance_baseline);
    t.put("grid.replication_mode", replication_mode ? "true" : "false");
    t.put("train.epochs", train.epochs);
    t.put("train.lr", format_fixed(train.learning_rate, 8));
    t.put("train.gamma", format_fixed(train.gamma, 4));
    t.put("train.alpha", train.alpha ? format_fixed((*train.alpha)[0], 6) + "," + format_fixed((*train.alpha)[1], 6)
                                     : std::string("auto"));
    t.put("train.batch_size", train.batch_size);
    t.put("train.runs", train.runs);
    t.put("output.dir", out_dir);
    t.put("output.dump_contexts", dump_contexts ? "true" : "false");
    return t;
  }

  std::string to_ini() const {
    std::ostringstream os;
    boost::property_tree::write_ini(os, to_tree());
    return os.str();
  }

  std::uint64_t stage_seed(std::string_view tag) const { return derive_seed(seed, tag); }
};

inline ConfigTree read_config_file(const std::string& path) {
  ConfigTree t;
  try {
    boost::property_tree::read_ini(path, t);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return t;
}

// "section.key=value"
inline void apply_override(ConfigTree& t, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0 || assignment.find('.') > eq) {
    throw UsageError("override must look like section.key=value, got '" + assignment + "'");
  }
  t.put(assignment.substr(0, eq), assignment.substr(eq + 1));
}

// ---------------------------------------------------------------------------
// Grid

struct Condition {
  enum class Kind : std::uint8_t { NoComments, AllComments, Sampled };
  Kind kind = Kind::Sampled;
  std::string name;
  SamplerConfig sampler;
};

inline std::vector<Condition> expand_grid(const ExperimentConfig& cfg) {
  std::vector<Condition> out;
  for (const auto& b : cfg.baselines) {
    out.push_back({b == "no_comments" ? Condition::Kind::NoComments : Condition::Kind::AllComments, b, {}});
  }
  for (auto s : cfg.strategies) {
    for (auto m : cfg.max_samples) {
      Condition c;
      c.name = std::string(to_string(s)) + "@" + std::to_string(m);
      c.sampler.strategy = s;
      c.sampler.max_samples = m;
      c.sampler.replication_mode = cfg.replication_mode;
      out.push_back(std::move(c));
    }
  }
  std::vector<std::string> cats;
  for (const auto& c : cfg.categories) {
    if (c == "theory:all") {
      for (auto h : kHighLevelCategories) cats.push_back("theory:" + std::string(to_string(h)));
    } else if (c == "cluster:all") {
      if (!cfg.cluster) throw UsageError("cluster:all needs [cluster] enabled = true");
      for (std::size_t k = 0; k < cfg.cluster_k; ++k) cats.push_back("cluster:" + std::to_string(k));
    } else {
      cats.push_back(c);
    }
  }
  for (const auto& name : cats) {
    Condition c;
    c.sampler.category_filter = CategoryFilter::parse(name);
    if (c.sampler.category_filter->kind == CategoryFilter::Kind::Cluster) {
      if (!cfg.cluster) throw UsageError("category '" + name + "' needs [cluster] enabled = true");
      if (static_cast<std::size_t>(c.sampler.category_filter->cluster) >= cfg.cluster_k) {
        throw UsageError("category '" + name + "' exceeds cluster.k");
      }
    }
    c.sampler.strategy = cfg.category_strategy;
    c.sampler.max_samples = cfg.category_max_samples;
    c.sampler.replication_mode = cfg.replication_mode;
    c.sampler.validate();
    c.name = std::string(to_string(c.sampler.strategy)) + "@" + std::to_string(c.sampler.max_samples) + "+" +
             c.sampler.category_filter->name();
    out.push_back(std::move(c));
  }
  std::set<std::string> seen;
  for (const auto& c : out) {
    if (!seen.insert(c.name).second) throw UsageError("duplicate grid condition '" + c.name + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared state and per-condition execution

struct PipelineState {
  Corpus corpus;
  std::vector<std::vector<DisclosureSpan>> spans;
  ProfileIndex profiles;
  EmbeddingMatrix embeddings;
  SplitSpec split;
  std::optional<ClusterModel> clusters;
};

inline ContextSet context_for(const Condition& cond, const Verdict& v, const PipelineState& st,
                              std::uint64_t sample_seed) {
  switch (cond.kind) {
    case Condition::Kind::NoComments: return ContextSet{v.annotator_id, v.post_id, {}};
    case Condition::Kind::AllComments: return all_comments_context(v.annotator_id, v.post_id, st.corpus);
    case Condition::Kind::Sampled: {
      SamplerConfig sc = cond.sampler;
      sc.seed = sample_seed;
      return sample_context(v.annotator_id, v.post_id, st.corpus, &st.embeddings, st.profiles, sc);
    }
  }
  return {};
}

struct ConditionResult {
  Condition condition;
  MultiRunReport report;
  std::optional<double> five_plus;
  std::optional<TTest> test;
  std::vector<ContextSet> contexts;  // filled only when dumping
};

inline ConditionResult run_condition(const Condition& cond, const PipelineState& st, const ExperimentConfig& cfg,
                                     bool keep_contexts = false) {
  ConditionResult res{cond, {}, std::nullopt, std::nullopt, {}};
  const std::uint64_t sample_seed = cfg.stage_seed("sample:" + cond.name);
  std::vector<Example> train_set, test_set;
  const auto& verdicts = st.corpus.verdicts();
  for (auto part : {Partition::Train, Partition::Test}) {
    for (std::size_t i : st.split.indices(part)) {
      const Verdict& v = verdicts[i];
      ContextSet ctx = context_for(cond, v, st, sample_seed);
      Example ex{build_features(st.embeddings.at(post_key(v.post_id)), ctx, st.embeddings), v.label};
      (part == Partition::Train ? train_set : test_set).push_back(std::move(ex));
      if (keep_contexts) res.contexts.push_back(std::move(ctx));
    }
  }
  if (train_set.empty() || test_set.empty()) throw DataError("condition " + cond.name + ": empty train or test partition");
  TrainConfig tc = cfg.train;
  tc.seed = cfg.stage_seed("train:" + cond.name);
  res.report = train_and_evaluate(train_set, test_set, tc);
  if (cond.sampler.category_filter) {
    std::set<std::string> annotators;
    for (const auto& v : verdicts) annotators.insert(v.annotator_id);
    res.five_plus = five_plus_percent(st.corpus, annotators, st.profiles, *cond.sampler.category_filter);
  }
  return res;
}

template <typename F>
auto run_stage(std::string_view name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const UsageError& e) {
    throw UsageError("stage " + std::string(name) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("stage " + std::string(name) + ": " + e.what());
  } catch (const InvariantError& e) {
    throw InvariantError("stage " + std::string(name) + ": " + e.what());
  } catch (const std::exception& e) {
    throw InvariantError("stage " + std::string(name) + ": " + e.what());
  }
}

// Embedding rows needed by the grid: posts, comments, and sentences when a
// sentence strategy appears.
inline EmbeddingMatrix build_embeddings(const Corpus& corpus, const ExperimentConfig& cfg, bool sentences) {
  if (cfg.embed_kind == EmbedderKind::External) {
    EmbeddingMatrix m = import_embeddings(cfg.embx_path);
    for (const auto& p : corpus.posts()) {
      if (!m.find(post_key(p.id))) throw DataError("embeddings lack row '" + post_key(p.id) + "'");
    }
    return m;
  }
  std::vector<std::pair<std::string, std::string>> items;
  for (const auto& p : corpus.posts()) items.emplace_back(post_key(p.id), p.title + "\n" + p.body);
  for (const auto& c : corpus.comments()) {
    items.emplace_back(comment_key(c.id), c.text);
    if (sentences) {
      for (std::size_t i = 0; i < c.sentences.size(); ++i) {
        items.emplace_back(sentence_key(c.id, i), c.text.substr(c.sentences[i].begin, c.sentences[i].size()));
      }
    }
  }
  EmbedderConfig ec{EmbedderKind::HashedNgram, cfg.embed_dim, cfg.ngram_lo, cfg.ngram_hi, cfg.stage_seed("embed")};
  return embed_batch(items, ec);
}

inline EmbeddingMatrix select_rows(const EmbeddingMatrix& m, const std::vector<std::string>& ids) {
  std::vector<float> data;
  data.reserve(ids.size() * m.dim());
  for (const auto& id : ids) {
    const auto row = m.at(id);
    data.insert(data.end(), row.begin(), row.end());
  }
  return EmbeddingMatrix(ids, m.dim(), std::move(data), m.normalized());
}

// Clusters phrase-filtered comments and writes cluster ids into the profiles.
inline ClusterModel cluster_comments(PipelineState& st, const ExperimentConfig& cfg) {
  std::vector<std::string> keys;
  for (const auto& c : st.corpus.comments()) {
    if (matches_phrase_filter(c.text)) keys.push_back(comment_key(c.id));
  }
  if (keys.size() < cfg.cluster_k) {
    throw DataError("only " + std::to_string(keys.size()) + " phrase-filtered comments for k=" +
                    std::to_string(cfg.cluster_k));
  }
  const std::uint64_t seed = cfg.stage_seed("cluster");
  const EmbeddingMatrix reduced = truncated_svd(select_rows(st.embeddings, keys), cfg.svd_dim, seed);
  ClusterModel model = kmeans(reduced, cfg.cluster_k, seed);
  for (std::size_t i = 0; i < model.ids.size(); ++i) {
    st.profiles.at(model.ids[i].substr(2)).cluster_id = model.labels[i];
  }
  return model;
}

struct PipelineResult {
  std::vector<ConditionResult> conditions;
  IngestReport ingest;
  std::string results_path;
};

inline std::string results_header(const ExperimentConfig& cfg) {
  std::string h = "# " + std::string(kVersion) + "\n";
  std::istringstream ini(cfg.to_ini());
  for (std::string line; std::getline(ini, line);) h += "# config " + line + "\n";
  h += "# significance: Welch t-test over pooled per-example correctness of all runs vs " +
       cfg.significance_baseline + "\n";
  return h;
}

inline void write_results(const std::vector<ConditionResult>& rows, const ExperimentConfig& cfg, std::ostream& os) {
  os << results_header(cfg);
  os << "condition\tfive_plus_pct\taccuracy\tmacro_f1\trun_accuracy\trun_macro_f1\tt_vs_baseline\tp_vs_baseline\n";
  for (const auto& r : rows) {
    std::vector<std::string> acc, f1;
    for (const auto& run : r.report.runs) {
      acc.push_back(format_fixed(run.accuracy));
      f1.push_back(format_fixed(run.macro_f1));
    }
    os << r.condition.name << '\t' << (r.five_plus ? format_fixed(*r.five_plus, 2) : "NA") << '\t'
       << format_fixed(r.report.mean_accuracy) << '\t' << format_fixed(r.report.mean_macro_f1) << '\t' << join(acc)
       << '\t' << join(f1) << '\t' << (r.test ? format_fixed(r.test->t, 4) : "NA") << '\t'
       << (r.test ? (r.test->p < 1e-12 ? std::string("<1e-12") : format_fixed(r.test->p, 12)) : "NA") << '\n';
  }
}

inline PipelineResult run_pipeline(const ExperimentConfig& cfg, std::size_t workers = worker_count()) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  const std::string stale = cfg.out_dir + "/STALE";
  {
    std::ofstream mark(stale);
    mark << "run in progress or failed; outputs in this directory are incomplete\n";
  }
  PipelineResult out;
  PipelineState st;
  const auto grid = run_stage("grid", [&] { return expand_grid(cfg); });
  const bool need_sentences = std::any_of(grid.begin(), grid.end(), [](const Condition& c) {
    return c.kind == Condition::Kind::Sampled && is_sentence_strategy(c.sampler.strategy);
  });

  run_stage("ingest", [&] {
    for (const auto* p : {&cfg.posts, &cfg.comments, &cfg.verdicts}) {
      if (p->empty() || !fs::exists(*p)) throw UsageError("corpus file '" + *p + "' does not exist");
    }
    st.corpus = ingest_corpus(cfg.posts, cfg.comments, cfg.verdicts, &out.ingest);
  });
  run_stage("filter", [&] {
    if (cfg.min_comments > 0 || cfg.max_comments > 0) {
      st.corpus = filter_annotators(st.corpus, cfg.min_comments,
                                    cfg.max_comments ? cfg.max_comments : std::numeric_limits<std::size_t>::max());
    }
  });
  run_stage("extract", [&] {
    st.spans = extract_corpus(st.corpus, PatternSet::default_set(), workers);
    st.profiles = build_profiles(st.corpus, st.spans);
  });
  run_stage("embed", [&] { st.embeddings = build_embeddings(st.corpus, cfg, need_sentences); });
  if (cfg.cluster) {
    run_stage("cluster", [&] {
      st.clusters = cluster_comments(st, cfg);
      write_cluster_model(*st.clusters, cfg.out_dir + "/clusters", {{"version", kVersion}});
    });
  }
  run_stage("split", [&] {
    st.split = make_split(st.corpus, cfg.split_kind, cfg.split_ratios,
                          cfg.split_seed ? *cfg.split_seed : cfg.stage_seed("split"));
    const auto v = verify_split(st.split, st.corpus);
    if (!v.ok()) throw InvariantError("split verification failed");
  });

  out.conditions.resize(grid.size());
  run_stage("train", [&] {
    parallel_for(grid.size(), workers, [&](std::size_t i) {
      out.conditions[i] = run_condition(grid[i], st, cfg, cfg.dump_contexts);
    });
  });

  run_stage("significance", [&] {
    const ConditionResult* base = nullptr;
    for (const auto& r : out.conditions) {
      if (r.condition.name == cfg.significance_baseline) base = &r;
    }
    if (!base) {
      warn("significance baseline '" + cfg.significance_baseline + "' is not in the grid; p-values omitted");
      return;
    }
    const auto base_correct = base->report.pooled_correct();
    for (auto& r : out.conditions) {
      if (&r == base) continue;
      r.test = significance_test(r.report.pooled_correct(), base_correct);
    }
  });

  run_stage("report", [&] {
    if (cfg.dump_contexts) {
      fs::create_directories(cfg.out_dir + "/contexts");
      for (const auto& r : out.conditions) {
        std::ofstream os(cfg.out_dir + "/contexts/" + r.condition.name + ".jsonl", std::ios::binary);
        write_contexts(r.contexts, os, {{"condition", r.condition.name}, {"version", kVersion}});
      }
    }
    out.results_path = cfg.out_dir + "/results.tsv";
    std::ofstream os(out.results_path, std::ios::binary);
    if (!os) throw DataError("cannot write " + out.results_path);
    write_results(out.conditions, cfg, os);
  });
  fs::remove(stale);
  return out;
}

}  // namespace dlab
