// dlab command-line front end. Every subcommand crosses one module boundary
// with explicit input and output paths; `run` drives the whole pipeline.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dlab/cluster.hpp"
#include "dlab/corpus.hpp"
#include "dlab/disclosure.hpp"
#include "dlab/embed.hpp"
#include "dlab/model.hpp"
#include "dlab/pipeline.hpp"
#include "dlab/sampler.hpp"
#include "dlab/synthgen.hpp"

namespace fs = std::filesystem;
using namespace dlab;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool print_config = false;

  ExperimentConfig load() const {
    ConfigTree t;
    if (!config_path.empty()) t = read_config_file(config_path);
    for (const auto& o : overrides) apply_override(t, o);
    if (seed) t.put("run.seed", *seed);
    return ExperimentConfig::from_tree(t);
  }
};

void add_common(CLI::App* app, Common& c, bool out_required = true) {
  app->add_option("--config", c.config_path, "INI configuration file")->check(CLI::ExistingFile);
  app->add_option("--set", c.overrides, "Override a config value: section.key=value");
  app->add_option("--seed", c.seed, "Top-level seed");
  auto* out = app->add_option("--out", c.out, "Output path");
  if (out_required) out->required();
  app->add_flag("--print-effective-config", c.print_config, "Print the merged configuration and exit");
}

std::ofstream open_out(const std::string& path) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  return os;
}

Corpus load_corpus(const std::string& dir, IngestReport* rep = nullptr) {
  return ingest_corpus(dir + "/posts.jsonl", dir + "/comments.jsonl", dir + "/verdicts.jsonl", rep);
}

std::uint64_t split_seed_of(const ExperimentConfig& cfg) {
  return cfg.split_seed ? *cfg.split_seed : cfg.stage_seed("split");
}

nlohmann::json meta_of(const ExperimentConfig& cfg, nlohmann::json extra = nlohmann::json::object()) {
  extra["version"] = kVersion;
  extra["seed"] = cfg.seed;
  return extra;
}

// Examples for a partition: features from a context dump, or empty contexts
// (the no-comments condition) when no dump is given.
std::vector<Example> load_examples(const Corpus& corpus, const EmbeddingMatrix& emb, const SplitSpec& split,
                                   Partition part, const std::string& contexts_path) {
  std::map<std::string, ContextSet> by_key;
  if (!contexts_path.empty()) {
    for (auto& c : read_contexts(contexts_path, &corpus)) {
      by_key[Corpus::verdict_key(c.post_id, c.annotator_id)] = std::move(c);
    }
  }
  std::vector<Example> out;
  for (std::size_t i : split.indices(part)) {
    const Verdict& v = corpus.verdicts()[i];
    ContextSet ctx{v.annotator_id, v.post_id, {}};
    if (!contexts_path.empty()) {
      auto it = by_key.find(Corpus::verdict_key(v.post_id, v.annotator_id));
      if (it == by_key.end()) {
        throw DataError("context dump has no entry for (" + v.post_id + ", " + v.annotator_id + ")");
      }
      ctx = it->second;
    }
    out.push_back({build_features(emb.at(post_key(v.post_id)), ctx, emb), v.label});
  }
  return out;
}

nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t c = 0; c < kClasses; ++c) {
    const auto& m = r.per_class[c];
    per[std::string(to_string(static_cast<Label>(c)))] = {
        {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
  }
  return {{"accuracy", r.accuracy}, {"macro_f1", r.macro_f1}, {"n", r.n}, {"per_class", per}};
}

// ---------------------------------------------------------------------------
// report: merge results.tsv files into the table layouts

struct ResultRow {
  std::string condition, five_plus, accuracy, macro_f1, p;
};

std::vector<ResultRow> read_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<ResultRow> rows;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_list(line, '\t');
    if (!header) {
      if (f.empty() || f[0] != "condition") throw DataError(path + ": not a results table");
      header = true;
      continue;
    }
    if (f.size() < 8) throw DataError(path + ": short row '" + line + "'");
    rows.push_back({f[0], f[1], f[2], f[3], f[7]});
  }
  return rows;
}

void write_table2(const std::vector<ResultRow>& rows, std::ostream& os) {
  // rows: strategy, columns: max_samples -> "acc/f1"
  std::map<std::string, std::map<std::size_t, std::string>> cells;
  std::set<std::size_t> ks;
  for (const auto& r : rows) {
    const auto at = r.condition.find('@');
    if (at == std::string::npos || r.condition.find('+') != std::string::npos) continue;
    const std::size_t k = std::stoul(r.condition.substr(at + 1));
    ks.insert(k);
    cells[r.condition.substr(0, at)][k] = r.accuracy + "/" + r.macro_f1;
  }
  os << "strategy";
  for (auto k : ks) os << "\tk=" << k << " acc/f1";
  os << '\n';
  for (const auto& [strategy, row] : cells) {
    os << strategy;
    for (auto k : ks) os << '\t' << (row.contains(k) ? row.at(k) : "NA");
    os << '\n';
  }
}

void write_table3(const std::vector<ResultRow>& rows, std::ostream& os) {
  os << "condition\tfive_plus_pct\taccuracy\tmacro_f1\tp_vs_baseline\n";
  auto emit = [&](const ResultRow& r, const std::string& name) {
    os << name << '\t' << r.five_plus << '\t' << r.accuracy << '\t' << r.macro_f1 << '\t' << r.p << '\n';
  };
  for (const auto& r : rows) {
    if (r.condition == "no_comments" || r.condition == "all_comments") emit(r, r.condition);
  }
  for (const auto& r : rows) {
    const auto plus = r.condition.find('+');
    if (plus != std::string::npos) emit(r, r.condition.substr(plus + 1));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dlab: annotator modeling from self-disclosure statements"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common common;
  std::string corpus_dir, posts, comments, verdicts, embeddings_path, split_path, contexts_path, profiles_path,
      model_path, patterns_path, text;
  std::size_t min_comments = 0, max_comments = 0;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and write it normalized to --out DIR");
  add_common(ingest, common);
  ingest->add_option("--posts", posts)->required()->check(CLI::ExistingFile);
  ingest->add_option("--comments", comments)->required()->check(CLI::ExistingFile);
  ingest->add_option("--verdicts", verdicts)->required()->check(CLI::ExistingFile);
  ingest->add_option("--min-comments", min_comments);
  ingest->add_option("--max-comments", max_comments, "0 = unbounded");

  // extract
  auto* extract = app.add_subcommand("extract", "Extract disclosure spans and theory categories");
  add_common(extract, common, false);
  extract->add_option("--corpus", corpus_dir, "Corpus directory");
  extract->add_option("--text", text, "Extract from one text and print spans");
  extract->add_option("--patterns", patterns_path, "Pattern file (default: built-in)")->check(CLI::ExistingFile);

  // embed
  std::size_t dim = 0;
  bool with_sentences = false;
  auto* embed = app.add_subcommand("embed", "Embed posts and comments into an EMBX file");
  add_common(embed, common);
  embed->add_option("--corpus", corpus_dir)->required();
  embed->add_option("--dim", dim, "Embedding dimension (default from config)");
  embed->add_flag("--sentences", with_sentences, "Also embed every sentence");

  // cluster
  auto* cluster = app.add_subcommand("cluster", "Cluster phrase-filtered comments (SVD + k-means)");
  add_common(cluster, common);
  std::size_t k = 0, svd_dim = 0;
  cluster->add_option("--corpus", corpus_dir)->required();
  cluster->add_option("--embeddings", embeddings_path)->required()->check(CLI::ExistingFile);
  cluster->add_option("--profiles", profiles_path, "Profiles to annotate with cluster ids")->check(CLI::ExistingFile);
  cluster->add_option("--k", k);
  cluster->add_option("--svd-dim", svd_dim);

  // split
  auto* split = app.add_subcommand("split", "Partition verdicts into train/val/test");
  add_common(split, common);
  std::string split_kind, ratios;
  split->add_option("--corpus", corpus_dir)->required();
  split->add_option("--kind", split_kind, "verdict | situation | author");
  split->add_option("--ratios", ratios, "train,val,test");

  // sample
  auto* sample = app.add_subcommand("sample", "Build context sets for every verdict");
  add_common(sample, common);
  std::string strategy = "similar_comments", category;
  std::size_t max_samples = 5;
  bool allow_departure = false;
  sample->add_option("--corpus", corpus_dir)->required();
  sample->add_option("--embeddings", embeddings_path)->check(CLI::ExistingFile);
  sample->add_option("--profiles", profiles_path)->check(CLI::ExistingFile);
  sample->add_option("--strategy", strategy, "random_comments | random_sentences | similar_comments | similar_sentences | all_comments");
  sample->add_option("--max-samples", max_samples);
  sample->add_option("--category", category, "theory:<Name> or cluster:<index>");
  sample->add_flag("--no-replication-mode", allow_departure, "Allow category filters with other strategies or k > 5");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one classifier on the train partition");
  add_common(train_cmd, common);
  std::size_t run_index = 0;
  std::string condition = "cli";
  train_cmd->add_option("--corpus", corpus_dir)->required();
  train_cmd->add_option("--embeddings", embeddings_path)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--split", split_path)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--contexts", contexts_path, "Context dump (omit for no-comments)")->check(CLI::ExistingFile);
  train_cmd->add_option("--condition", condition, "Condition name used in the seed derivation");
  train_cmd->add_option("--run", run_index, "Run index added to the derived seed");

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate a trained model on a partition");
  add_common(evaluate_cmd, common);
  std::string partition = "test";
  evaluate_cmd->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--corpus", corpus_dir)->required();
  evaluate_cmd->add_option("--embeddings", embeddings_path)->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--split", split_path)->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--contexts", contexts_path)->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--partition", partition);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Coverage, diversity, n-gram, PCA and audit tables");
  analyze->require_subcommand(1);
  std::size_t n_clusters = 0, ngram = 1, audit_n = 50;
  std::string position = "before", group;
  auto* coverage = analyze->add_subcommand("coverage", "Category coverage of sampled items");
  add_common(coverage, common);
  coverage->add_option("--contexts", contexts_path)->required()->check(CLI::ExistingFile);
  coverage->add_option("--profiles", profiles_path)->required()->check(CLI::ExistingFile);
  coverage->add_option("--clusters", n_clusters, "Number of clusters (default: inferred from profiles)");
  auto* diversity = analyze->add_subcommand("diversity", "Per-annotator coverage and rank ratio");
  add_common(diversity, common);
  diversity->add_option("--contexts", contexts_path)->required()->check(CLI::ExistingFile);
  diversity->add_option("--corpus", corpus_dir)->required();
  auto* ngrams = analyze->add_subcommand("ngrams", "N-grams before/after disclosure payloads");
  add_common(ngrams, common);
  ngrams->add_option("--corpus", corpus_dir)->required();
  ngrams->add_option("--n", ngram);
  ngrams->add_option("--position", position, "before | after");
  auto* pca = analyze->add_subcommand("pca", "2-D projection of embeddings with cluster labels");
  add_common(pca, common);
  std::string cluster_prefix;
  pca->add_option("--embeddings", embeddings_path)->required()->check(CLI::ExistingFile);
  pca->add_option("--clusters", cluster_prefix, "Cluster model prefix");
  auto* audit = analyze->add_subcommand("audit", "Random sample of comments with spans for manual audit");
  add_common(audit, common);
  audit->add_option("--corpus", corpus_dir)->required();
  audit->add_option("--group", group, "Demographics | Experiences | Attitudes | Relationships")->required();
  audit->add_option("--n", audit_n);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic population");
  add_common(synth, common);
  PopulationSpec spec;
  std::string rule = "demographic_keyed";
  synth->add_option("--annotators", spec.n_annotators);
  synth->add_option("--posts", spec.n_posts);
  synth->add_option("--comments-min", spec.comments_min);
  synth->add_option("--comments-max", spec.comments_max);
  synth->add_option("--rule", rule, "demographic_keyed | attitude_keyed | random");
  synth->add_option("--nta-rate", spec.nta_base_rate);
  synth->add_option("--key-fraction", spec.key_fraction);
  synth->add_option("--trait-fraction", spec.trait_fraction);
  synth->add_option("--verdicts-per-annotator", spec.verdicts_per_annotator);

  // report
  auto* report = app.add_subcommand("report", "Merge results tables into a table layout");
  add_common(report, common);
  std::vector<std::string> result_files;
  std::string layout = "table3";
  report->add_option("--results", result_files)->required()->check(CLI::ExistingFile);
  report->add_option("--layout", layout, "table2 | table3");

  // run
  auto* run = app.add_subcommand("run", "Run the full configured pipeline");
  add_common(run, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    ExperimentConfig cfg = common.load();
    if (!common.out.empty() && run->parsed()) cfg.out_dir = common.out;
    if (common.print_config) {
      std::cout << cfg.to_ini();
      return 0;
    }

    if (ingest->parsed()) {
      IngestReport rep;
      Corpus c = ingest_corpus(posts, comments, verdicts, &rep);
      FilterReport frep;
      if (min_comments > 0 || max_comments > 0) {
        c = filter_annotators(c, min_comments, max_comments ? max_comments : std::numeric_limits<std::size_t>::max(),
                              &frep);
      }
      fs::create_directories(common.out);
      write_corpus(c, common.out + "/posts.jsonl", common.out + "/comments.jsonl", common.out + "/verdicts.jsonl");
      auto os = open_out(common.out + "/ingest_report.json");
      os << nlohmann::json{{"posts", rep.posts},
                           {"comments", rep.comments},
                           {"verdicts", rep.verdicts},
                           {"annotators", rep.annotators},
                           {"self_edge_lines", rep.self_edge_lines},
                           {"self_context_comments", rep.self_context_comments},
                           {"filtered_out_annotators", frep.dropped_annotators},
                           {"filtered_verdicts_dropped", frep.verdicts_dropped},
                           {"version", kVersion}}
                .dump(2)
         << '\n';
      if (!rep.self_edge_lines.empty()) warn(std::to_string(rep.self_edge_lines.size()) + " self-edge verdicts dropped");
    } else if (extract->parsed()) {
      const PatternSet patterns = patterns_path.empty() ? PatternSet::default_set() : PatternSet::from_file(patterns_path);
      if (!text.empty()) {
        for (const auto& s : extract_disclosures(text, segment_sentences(text), patterns)) {
          std::cout << nlohmann::json{{"category", to_string(s.category)},
                                      {"theory", to_string(high_level(s.category))},
                                      {"start", s.char_start},
                                      {"end", s.char_end},
                                      {"text", s.matched_text}}
                           .dump()
                    << '\n';
        }
        return 0;
      }
      if (corpus_dir.empty() || common.out.empty()) throw UsageError("extract needs --text, or --corpus and --out");
      const Corpus c = load_corpus(corpus_dir);
      std::vector<std::vector<DisclosureSpan>> spans(c.comments().size());
      parallel_for(spans.size(), worker_count(),
                   [&](std::size_t i) { spans[i] = extract_disclosures(c.comments()[i], patterns); });
      fs::create_directories(common.out);
      auto sp = open_out(common.out + "/spans.jsonl");
      write_spans(c, spans, sp);
      auto pr = open_out(common.out + "/profiles.jsonl");
      write_profiles(build_profiles(c, spans), pr);
    } else if (embed->parsed()) {
      if (dim) cfg.embed_dim = dim;
      cfg.embed_kind = EmbedderKind::HashedNgram;
      export_embeddings(build_embeddings(load_corpus(corpus_dir), cfg, with_sentences), common.out);
    } else if (cluster->parsed()) {
      if (k) cfg.cluster_k = k;
      if (svd_dim) cfg.svd_dim = svd_dim;
      cfg.cluster = true;
      PipelineState st;
      st.corpus = load_corpus(corpus_dir);
      st.embeddings = import_embeddings(embeddings_path);
      st.profiles = profiles_path.empty() ? build_profiles(st.corpus, extract_corpus(st.corpus, PatternSet::default_set()))
                                          : read_profiles(profiles_path);
      const ClusterModel model = cluster_comments(st, cfg);
      std::vector<std::string> keys = model.ids;
      const EmbeddingMatrix reduced = truncated_svd(select_rows(st.embeddings, keys), cfg.svd_dim, cfg.stage_seed("cluster"));
      const double sil = silhouette(reduced, model).mean;
      write_cluster_model(model, common.out, meta_of(cfg, {{"silhouette", sil}, {"svd_dim", cfg.svd_dim}}));
      auto pr = open_out(common.out + ".profiles.jsonl");
      write_profiles(st.profiles, pr);
      auto insp = open_out(common.out + ".inspect.jsonl");
      write_inspection(model, reduced, st.corpus, 5, cfg.stage_seed("inspect"), insp,
                       [](const std::string& id) { return id.substr(2); });
      std::cout << "silhouette\t" << format_fixed(sil) << '\n';
    } else if (split->parsed()) {
      if (!split_kind.empty()) cfg.split_kind = parse_split_kind(split_kind);
      if (!ratios.empty()) {
        const auto r = parse_doubles(ratios, "--ratios");
        if (r.size() != 3) throw UsageError("--ratios needs three values");
        cfg.split_ratios = {r[0], r[1], r[2]};
      }
      const Corpus c = load_corpus(corpus_dir);
      const SplitSpec s = make_split(c, cfg.split_kind, cfg.split_ratios, split_seed_of(cfg));
      const auto v = verify_split(s, c);
      if (!v.ok()) throw InvariantError("split verification failed");
      auto os = open_out(common.out);
      write_split(s, os, meta_of(cfg));
    } else if (sample->parsed()) {
      const Corpus c = load_corpus(corpus_dir);
      Condition cond;
      if (strategy == "all_comments") {
        cond.kind = Condition::Kind::AllComments;
        cond.name = "all_comments";
      } else {
        cond.sampler.strategy = parse_strategy(strategy);
        cond.sampler.max_samples = max_samples;
        cond.sampler.replication_mode = !allow_departure;
        if (!category.empty()) cond.sampler.category_filter = CategoryFilter::parse(category);
        cond.sampler.validate();
        cond.name = strategy + "@" + std::to_string(max_samples) + (category.empty() ? "" : "+" + category);
      }
      PipelineState st;
      st.corpus = c;
      if (!embeddings_path.empty()) st.embeddings = import_embeddings(embeddings_path);
      if (cond.kind == Condition::Kind::Sampled && is_similar_strategy(cond.sampler.strategy) && embeddings_path.empty()) {
        throw UsageError("similar strategies need --embeddings");
      }
      st.profiles = profiles_path.empty() ? build_profiles(c, extract_corpus(c, PatternSet::default_set()))
                                          : read_profiles(profiles_path);
      const std::uint64_t seed = cfg.stage_seed("sample:" + cond.name);
      std::vector<ContextSet> out(c.verdicts().size());
      parallel_for(out.size(), worker_count(),
                   [&](std::size_t i) { out[i] = context_for(cond, c.verdicts()[i], st, seed); });
      auto os = open_out(common.out);
      write_contexts(out, os, meta_of(cfg, {{"condition", cond.name}}));
    } else if (train_cmd->parsed()) {
      const Corpus c = load_corpus(corpus_dir);
      const EmbeddingMatrix emb = import_embeddings(embeddings_path);
      const SplitSpec s = read_split(split_path);
      const auto data = load_examples(c, emb, s, Partition::Train, contexts_path);
      TrainConfig tc = cfg.train;
      tc.seed = cfg.stage_seed("train:" + condition) + run_index;
      const ModelParams m = train(data, tc);
      write_model(m, common.out);
      for (std::size_t e = 0; e < m.loss_history.size(); ++e) {
        std::cout << "epoch " << e + 1 << "\tloss " << format_fixed(m.loss_history[e], 8) << '\n';
      }
    } else if (evaluate_cmd->parsed()) {
      const Corpus c = load_corpus(corpus_dir);
      const EmbeddingMatrix emb = import_embeddings(embeddings_path);
      const SplitSpec s = read_split(split_path);
      const ModelParams m = read_model(model_path);
      const auto rep = evaluate(m, load_examples(c, emb, s, parse_partition(partition), contexts_path));
      auto os = open_out(common.out);
      auto j = report_json(rep);
      j["partition"] = partition;
      j["version"] = kVersion;
      os << j.dump(2) << '\n';
      std::cout << "accuracy\t" << format_fixed(rep.accuracy) << "\nmacro_f1\t" << format_fixed(rep.macro_f1) << '\n';
    } else if (coverage->parsed()) {
      const ProfileIndex profiles = read_profiles(profiles_path);
      if (n_clusters == 0) {
        for (const auto& [id, p] : profiles) {
          if (p.cluster_id) n_clusters = std::max<std::size_t>(n_clusters, static_cast<std::size_t>(*p.cluster_id) + 1);
        }
      }
      auto os = open_out(common.out);
      write_coverage(category_coverage(read_contexts(contexts_path), profiles, n_clusters), os);
    } else if (diversity->parsed()) {
      const Corpus c = load_corpus(corpus_dir);
      std::map<std::string, std::size_t> pools;
      for (const auto& [a, ids] : c.annotator_index()) pools[a] = ids.size();
      auto os = open_out(common.out);
      write_diversity(similar_post_diversity(read_contexts(contexts_path), pools), os);
    } else if (ngrams->parsed()) {
      const Corpus c = load_corpus(corpus_dir);
      NgramPosition pos;
      if (position == "before") {
        pos = NgramPosition::Before;
      } else if (position == "after") {
        pos = NgramPosition::After;
      } else {
        throw UsageError("--position must be before or after");
      }
      auto os = open_out(common.out);
      write_frequency_table(ngram_stats(c, extract_corpus(c, PatternSet::default_set()), ngram, pos), os);
    } else if (pca->parsed()) {
      const EmbeddingMatrix emb = import_embeddings(embeddings_path);
      std::map<std::string, int> labels;
      EmbeddingMatrix rows = emb;
      if (!cluster_prefix.empty()) {
        const ClusterModel model = read_cluster_model(cluster_prefix);
        labels = model.assignment();
        rows = select_rows(emb, model.ids);
      }
      const Pca2d p = pca_2d(rows, cfg.stage_seed("pca"));
      auto os = open_out(common.out);
      os << "# variance_ratio\t" << format_fixed(p.variance_ratios[0]) << '\t' << format_fixed(p.variance_ratios[1])
         << "\nid\tx\ty\tcluster\n";
      for (std::size_t i = 0; i < rows.rows(); ++i) {
        const auto& id = rows.ids()[i];
        os << id << '\t' << format_fixed(p.coords[i][0]) << '\t' << format_fixed(p.coords[i][1]) << '\t'
           << (labels.contains(id) ? std::to_string(labels.at(id)) : "NA") << '\n';
      }
    } else if (audit->parsed()) {
      const Corpus c = load_corpus(corpus_dir);
      auto os = open_out(common.out);
      const auto g = parse_high_level(group);
      if (!g) throw UsageError("unknown category group '" + group + "'");
      write_audit(audit_sample(c, PatternSet::default_set(), *g, audit_n, cfg.stage_seed("audit:" + group)), os);
    } else if (synth->parsed()) {
      spec.judgment_rule = parse_judgment_rule(rule);
      spec.seed = cfg.seed;
      write_population(generate_population(spec), common.out);
      auto os = open_out(common.out + "/population.json");
      os << nlohmann::json{{"spec", spec.to_json()}, {"version", kVersion}}.dump(2) << '\n';
    } else if (report->parsed()) {
      std::vector<ResultRow> rows;
      for (const auto& f : result_files) {
        auto r = read_results(f);
        rows.insert(rows.end(), r.begin(), r.end());
      }
      auto os = open_out(common.out);
      os << "# " << kVersion << '\n';
      if (layout == "table2") {
        write_table2(rows, os);
      } else if (layout == "table3") {
        write_table3(rows, os);
      } else {
        throw UsageError("--layout must be table2 or table3");
      }
    } else if (run->parsed()) {
      const auto result = run_pipeline(cfg);
      std::cout << result.results_path << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "dlab: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "dlab: internal error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
