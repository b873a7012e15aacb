#pragma once

// Synthetic populations with a known judgment rule. Half the annotators
// carry a trait that only their "key" comments reveal; key comments share
// vocabulary with a marked subset of posts. Under the keyed rules an
// annotator votes YTA exactly when they carry the trait and the post is
// marked, so a model can only beat the majority rate by finding the key
// comments.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlab/common.hpp"
#include "dlab/corpus.hpp"
#include "dlab/disclosure.hpp"
#include "dlab/parallel.hpp"

namespace dlab {

enum class JudgmentRule : std::uint8_t { DemographicKeyed, AttitudeKeyed, Random };

inline std::string_view to_string(JudgmentRule r) {
  switch (r) {
    case JudgmentRule::DemographicKeyed: return "demographic_keyed";
    case JudgmentRule::AttitudeKeyed: return "attitude_keyed";
    case JudgmentRule::Random: return "random";
  }
  return "?";
}

inline JudgmentRule parse_judgment_rule(std::string_view s) {
  for (auto r : {JudgmentRule::DemographicKeyed, JudgmentRule::AttitudeKeyed, JudgmentRule::Random}) {
    if (to_string(r) == s) return r;
  }
  throw UsageError("unknown judgment rule '" + std::string(s) + "'");
}

struct PopulationSpec {
  std::size_t n_annotators = 200;
  std::size_t n_posts = 300;
  std::size_t comments_min = 20;
  std::size_t comments_max = 40;
  // Chance that a non-key comment carries one planted sentence of each
  // theory category (indexed by HighLevelCategory).
  std::array<double, kHighLevelCount> disclosure_mix{0.0, 0.15, 0.15, 0.15};
  JudgmentRule judgment_rule = JudgmentRule::DemographicKeyed;
  double nta_base_rate = 0.7;
  double trait_fraction = 0.5;
  double key_fraction = 0.3;  // share of each annotator's comments that reveal the trait
  std::size_t verdicts_per_annotator = 30;
  std::uint64_t seed = 0;

  // Share of posts that must be marked for the keyed rules to hit the base rate.
  double marked_fraction() const { return (1.0 - nta_base_rate) / trait_fraction; }

  void validate() const {
    if (n_annotators < 2) throw UsageError("n_annotators must be >= 2");
    if (n_posts < 3) throw UsageError("n_posts must be >= 3");
    if (comments_min < 1 || comments_min > comments_max) throw UsageError("bad comments_per_annotator range");
    for (double p : disclosure_mix) {
      if (!(p >= 0 && p <= 1)) throw UsageError("disclosure_mix entries must lie in [0,1]");
    }
    if (!(nta_base_rate > 0 && nta_base_rate < 1)) throw UsageError("nta_base_rate must lie in (0,1)");
    if (!(trait_fraction > 0 && trait_fraction <= 1)) throw UsageError("trait_fraction must lie in (0,1]");
    if (!(key_fraction > 0 && key_fraction <= 1)) throw UsageError("key_fraction must lie in (0,1]");
    if (verdicts_per_annotator < 1 || verdicts_per_annotator > n_posts) {
      throw UsageError("verdicts_per_annotator must lie in [1, n_posts]");
    }
    if (judgment_rule != JudgmentRule::Random) {
      if (marked_fraction() > 1.0) {
        throw DataError("infeasible population: YTA rate " + std::to_string(1 - nta_base_rate) +
                        " needs more than every post marked at trait_fraction " + std::to_string(trait_fraction));
      }
      const auto marked = static_cast<std::size_t>(std::llround(marked_fraction() * static_cast<double>(n_posts)));
      const auto per = static_cast<std::size_t>(
          std::llround(marked_fraction() * static_cast<double>(verdicts_per_annotator)));
      if (per > marked || verdicts_per_annotator - per > n_posts - marked) {
        throw DataError("infeasible population: not enough marked/unmarked posts for verdicts_per_annotator");
      }
    }
  }

  nlohmann::json to_json() const {
    return {{"n_annotators", n_annotators},     {"n_posts", n_posts},
            {"comments_min", comments_min},     {"comments_max", comments_max},
            {"disclosure_mix", disclosure_mix}, {"judgment_rule", to_string(judgment_rule)},
            {"nta_base_rate", nta_base_rate},   {"trait_fraction", trait_fraction},
            {"key_fraction", key_fraction},     {"verdicts_per_annotator", verdicts_per_annotator},
            {"seed", seed}};
  }
};

struct PlantedSentence {
  std::string comment_id;
  std::string sentence;
  HighLevelCategory category;
  bool key = false;
};

struct GroundTruthEntry {
  std::string verdict_key;
  std::string trigger;  // "trait+marked", "trait", "marked", "none", or "draw"
  Label label;
};

struct GroundTruth {
  JudgmentRule rule = JudgmentRule::DemographicKeyed;
  std::map<std::string, bool> trait;   // annotator -> carries trait
  std::set<std::string> marked_posts;
  std::vector<GroundTruthEntry> entries;  // parallel to the corpus verdicts
  std::vector<PlantedSentence> plants;

  // Label implied by the rule for a keyed population.
  Label rule_label(const std::string& annotator, const std::string& post) const {
    return trait.at(annotator) && marked_posts.contains(post) ? Label::YTA : Label::NTA;
  }
};

struct Population {
  Corpus corpus;
  GroundTruth truth;
};

namespace synth {

struct Topic {
  std::string_view name;
  std::vector<std::string_view> nouns;
};

// Vocabulary avoids first-person openers, "my/our + relation", words
// starting with "im", and digits next to letters, so distractors trigger no
// disclosure pattern.
inline const std::vector<Topic>& topics() {
  static const std::vector<Topic> t{
      {"wedding", {"wedding", "bride", "groom", "venue", "reception", "ceremony", "bouquet", "vows", "caterer",
                   "bridesmaids", "toast", "guest list"}},
      {"work", {"office", "manager", "shift", "deadline", "coworker", "meeting", "paycheck", "schedule"}},
      {"pets", {"dog", "cat", "leash", "vet", "kibble", "puppy", "litter box", "kennel"}},
      {"car", {"car", "garage", "mechanic", "tires", "parking spot", "engine", "road trip", "carpool"}},
      {"cooking", {"dinner", "recipe", "oven", "groceries", "kitchen", "dishes", "leftovers", "potluck"}},
      {"neighbors", {"neighbor", "fence", "yard", "driveway", "hedge", "mailbox", "lawn", "porch"}},
      {"housing", {"apartment", "rent", "lease", "chores", "couch", "bathroom", "landlord", "thermostat"}},
      {"money", {"loan", "debt", "budget", "savings", "bill", "refund", "tip", "deposit"}},
  };
  return t;
}

inline constexpr std::array<std::string_view, 8> kAdjectives{"loud",  "messy",  "expensive", "late",
                                                             "awkward", "tense", "rushed",   "chaotic"};

// Sentences are dense in topic nouns and light on function words so that
// bag-of-n-gram similarity follows the topic rather than the phrasing.
inline constexpr std::array<std::string_view, 8> kSentenceTemplates{
    "That {a} and {b} fight sounds exhausting.",
    "{A} problems plus {b} problems, classic.",
    "Fix the {a} before the {b} blows up.",
    "So much {a} and {b} nonsense.",
    "That {a} versus {b} standoff was {adj}.",
    "Sorting out {a}, {b} and {c} early would have helped.",
    "Honestly {a} drama beats {b} drama.",
    "Sounds {adj}, {a} and {b} both.",
};

// Posts narrate; they share topic nouns with comments but not phrasing.
inline constexpr std::array<std::string_view, 6> kPostTemplates{
    "Last week {a} and {b} turned into a fight.",
    "Background first, {a} has been a sore spot for months, mostly over {b}.",
    "Then {b} and {c} came up in front of everyone.",
    "So there was a blowup about {a}, {b} and who pays.",
    "Afterwards nobody would discuss {a} or {c} anymore.",
    "Now half the group says {b} was handled badly.",
};

inline constexpr std::array<std::string_view, 5> kTitleActions{"skipping", "complaining about", "refusing to pay for",
                                                               "changing plans for", "leaving early from"};

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& xs, Rng& rng) {
  return xs[uniform_index(rng, N)];
}
inline std::string_view pick(const std::vector<std::string_view>& xs, Rng& rng) {
  return xs[uniform_index(rng, xs.size())];
}

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

template <std::size_t N>
std::string topic_sentence(const Topic& topic, Rng& rng, const std::array<std::string_view, N>& templates) {
  std::string s(pick(templates, rng));
  s = replace_all(std::move(s), "{a}", pick(topic.nouns, rng));
  s = replace_all(std::move(s), "{b}", pick(topic.nouns, rng));
  s = replace_all(std::move(s), "{c}", pick(topic.nouns, rng));
  std::string first(pick(topic.nouns, rng));
  first[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(first[0])));
  s = replace_all(std::move(s), "{A}", first);
  return replace_all(std::move(s), "{adj}", pick(kAdjectives, rng));
}

inline std::string topic_sentence(const Topic& topic, Rng& rng) { return topic_sentence(topic, rng, kSentenceTemplates); }

// Neutral disclosures that reveal nothing about the trait.
inline std::string neutral_plant(HighLevelCategory c, Rng& rng) {
  static const std::array<std::vector<std::string_view>, kHighLevelCount> plants{{
      {"I'm a night owl.", "I'm a big fan of board games.", "I am a light sleeper."},
      {"I enjoy hiking on weekends.", "I work in logistics.", "I own a small garden.", "I usually cook on Sundays."},
      {"I think honesty matters most.", "I believe people should talk things out.", "I value clear communication.",
       "I feel like nobody listens anymore."},
      {"My cousin dealt with this once.", "My brother would agree.", "My best friend had the same problem.",
       "My roommate says the same thing."},
  }};
  return std::string(pick(plants[static_cast<std::size_t>(c)], rng));
}

// The sentence that reveals whether an annotator carries the trait.
inline std::string key_sentence(JudgmentRule rule, bool trait, Rng& rng) {
  if (rule == JudgmentRule::AttitudeKeyed) {
    static const std::vector<std::string_view> yes{"I think big weddings are a waste of money.",
                                                   "I believe lavish ceremonies are pure vanity.",
                                                   "I feel that fancy receptions are a scam."};
    static const std::vector<std::string_view> no{"I think big weddings are worth every penny.",
                                                  "I believe a lavish ceremony is a lovely tradition.",
                                                  "I feel that fancy receptions bring families together."};
    return std::string(pick(trait ? yes : no, rng));
  }
  // Age band: young annotators carry the trait.
  const auto age = trait ? 18 + uniform_index(rng, 9) : 62 + uniform_index(rng, 17);
  static const std::vector<std::string_view> young{"I'm {n} and still a college student.",
                                                   "I'm {n}, a student living in a dorm.",
                                                   "I am {n} and just started college."};
  static const std::vector<std::string_view> old{"I'm {n} and retired now.", "I'm {n}, a retired grandparent.",
                                                 "I am {n} and have been retired for years."};
  return replace_all(std::string(pick(trait ? young : old, rng)), "{n}", std::to_string(age));
}

inline std::string justification(Label l, Rng& rng) {
  static const std::vector<std::string_view> yta{"YTA, that was unfair to everyone involved.",
                                                 "YTA, this should have been handled better."};
  static const std::vector<std::string_view> nta{"NTA, that request was unreasonable.",
                                                 "NTA, setting that boundary was fine."};
  return std::string(pick(l == Label::YTA ? yta : nta, rng));
}

inline std::string pad_id(char prefix, std::size_t i, int width = 4) {
  std::string n = std::to_string(i);
  return std::string(1, prefix) + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(n.size()))), '0') + n;
}

struct AnnotatorOutput {
  std::vector<Comment> comments;
  std::vector<PlantedSentence> plants;
  std::vector<std::string> voted_posts;
};

}  // namespace synth

inline Population generate_population(const PopulationSpec& spec) {
  spec.validate();
  using namespace synth;
  const auto& all_topics = topics();
  const Topic& marked_topic = all_topics.front();

  Population pop;
  GroundTruth& gt = pop.truth;
  gt.rule = spec.judgment_rule;

  // Posts: the first n_marked of a shuffled order are marked.
  const bool keyed = spec.judgment_rule != JudgmentRule::Random;
  const std::size_t n_marked =
      keyed ? static_cast<std::size_t>(std::llround(spec.marked_fraction() * static_cast<double>(spec.n_posts))) : 0;
  Rng post_rng(derive_seed(spec.seed, "posts"));
  std::vector<std::size_t> post_order(spec.n_posts);
  for (std::size_t i = 0; i < spec.n_posts; ++i) post_order[i] = i;
  shuffle(post_order, post_rng);
  std::vector<bool> is_marked(spec.n_posts, false);
  for (std::size_t i = 0; i < n_marked; ++i) is_marked[post_order[i]] = true;

  std::vector<Post> posts;
  std::vector<std::string> marked_ids, unmarked_ids;
  for (std::size_t i = 0; i < spec.n_posts; ++i) {
    Post p;
    p.id = pad_id('p', i + 1);
    p.author_id = "op" + p.id.substr(1);
    const Topic& topic = is_marked[i] ? marked_topic : all_topics[1 + uniform_index(post_rng, all_topics.size() - 1)];
    p.title = "AITA for " + std::string(pick(kTitleActions, post_rng)) + " the " +
              std::string(pick(topic.nouns, post_rng)) + "?";
    for (int s = 0; s < 5; ++s) p.body += (s ? " " : "") + topic_sentence(topic, post_rng, kPostTemplates);
    (is_marked[i] ? marked_ids : unmarked_ids).push_back(p.id);
    if (is_marked[i]) gt.marked_posts.insert(p.id);
    posts.push_back(std::move(p));
  }

  // Exactly round(trait_fraction * n) annotators carry the trait.
  Rng trait_rng(derive_seed(spec.seed, "traits"));
  std::vector<std::size_t> ann_order(spec.n_annotators);
  for (std::size_t i = 0; i < spec.n_annotators; ++i) ann_order[i] = i;
  shuffle(ann_order, trait_rng);
  const auto n_trait =
      static_cast<std::size_t>(std::llround(spec.trait_fraction * static_cast<double>(spec.n_annotators)));
  std::vector<bool> trait(spec.n_annotators, false);
  for (std::size_t i = 0; i < n_trait; ++i) trait[ann_order[i]] = true;

  const std::size_t per_marked =
      keyed ? static_cast<std::size_t>(
                  std::llround(spec.marked_fraction() * static_cast<double>(spec.verdicts_per_annotator)))
            : 0;

  std::vector<AnnotatorOutput> outputs(spec.n_annotators);
  parallel_for(spec.n_annotators, worker_count(), [&](std::size_t a) {
    Rng rng(derive_seed(spec.seed, std::uint64_t{a}));
    const std::string aid = pad_id('a', a + 1);
    AnnotatorOutput& out = outputs[a];

    const std::size_t n_c = spec.comments_min + uniform_index(rng, spec.comments_max - spec.comments_min + 1);
    const std::size_t n_key =
        keyed ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(spec.key_fraction * static_cast<double>(n_c))))
              : 0;
    std::vector<bool> key_slot(n_c, false);
    for (std::size_t i : sample_without_replacement(n_c, n_key, rng)) key_slot[i] = true;

    for (std::size_t c = 0; c < n_c; ++c) {
      Comment cm;
      cm.id = aid + "_c" + (c < 9 ? "0" : "") + std::to_string(c + 1);
      cm.author_id = aid;
      std::vector<std::pair<std::string, std::optional<PlantedSentence>>> sentences;
      if (key_slot[c]) {
        const auto cat = spec.judgment_rule == JudgmentRule::AttitudeKeyed ? HighLevelCategory::Attitudes
                                                                           : HighLevelCategory::Demographics;
        std::string ks = key_sentence(spec.judgment_rule, trait[a], rng);
        sentences.push_back({ks, PlantedSentence{cm.id, ks, cat, true}});
        const std::size_t extra = 2 + uniform_index(rng, 2);
        for (std::size_t s = 0; s < extra; ++s) sentences.push_back({topic_sentence(marked_topic, rng), std::nullopt});
      } else {
        const Topic& topic = all_topics[1 + uniform_index(rng, all_topics.size() - 1)];
        const std::size_t n_s = 1 + uniform_index(rng, 3);
        for (std::size_t s = 0; s < n_s; ++s) sentences.push_back({topic_sentence(topic, rng), std::nullopt});
        for (auto cat : kHighLevelCategories) {
          if (uniform01(rng) < spec.disclosure_mix[static_cast<std::size_t>(cat)]) {
            std::string ps = neutral_plant(cat, rng);
            const std::size_t at = uniform_index(rng, sentences.size() + 1);
            sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(at),
                             {ps, PlantedSentence{cm.id, ps, cat, false}});
          }
        }
      }
      for (std::size_t s = 0; s < sentences.size(); ++s) {
        cm.text += (s ? " " : "") + sentences[s].first;
        if (sentences[s].second) out.plants.push_back(*sentences[s].second);
      }
      out.comments.push_back(std::move(cm));
    }

    if (keyed) {
      for (std::size_t i : sample_without_replacement(marked_ids.size(), per_marked, rng)) {
        out.voted_posts.push_back(marked_ids[i]);
      }
      for (std::size_t i :
           sample_without_replacement(unmarked_ids.size(), spec.verdicts_per_annotator - per_marked, rng)) {
        out.voted_posts.push_back(unmarked_ids[i]);
      }
    } else {
      for (std::size_t i : sample_without_replacement(spec.n_posts, spec.verdicts_per_annotator, rng)) {
        out.voted_posts.push_back(posts[i].id);
      }
    }
    std::sort(out.voted_posts.begin(), out.voted_posts.end());
  });

  std::vector<Comment> comments;
  std::vector<Verdict> verdicts;
  for (std::size_t a = 0; a < spec.n_annotators; ++a) {
    const std::string aid = pad_id('a', a + 1);
    gt.trait[aid] = keyed && trait[a];
    for (auto& c : outputs[a].comments) comments.push_back(std::move(c));
    gt.plants.insert(gt.plants.end(), outputs[a].plants.begin(), outputs[a].plants.end());
    for (const auto& pid : outputs[a].voted_posts) {
      Verdict v{pid, aid, Label::NTA, {}};
      if (keyed) {
        const bool m = gt.marked_posts.contains(pid);
        v.label = gt.rule_label(aid, pid);
        gt.entries.push_back({Corpus::verdict_key(pid, aid),
                              trait[a] && m ? "trait+marked" : trait[a] ? "trait" : m ? "marked" : "none", v.label});
      }
      verdicts.push_back(std::move(v));
    }
  }
  if (!keyed) {
    // Exactly round((1 - nta) * N) YTA verdicts, chosen uniformly.
    Rng rng(derive_seed(spec.seed, "random-labels"));
    const auto n_yta = static_cast<std::size_t>(std::llround((1.0 - spec.nta_base_rate) * static_cast<double>(verdicts.size())));
    for (std::size_t i : sample_without_replacement(verdicts.size(), n_yta, rng)) verdicts[i].label = Label::YTA;
    for (const auto& v : verdicts) {
      gt.entries.push_back({Corpus::verdict_key(v.post_id, v.annotator_id), "draw", v.label});
    }
  }
  Rng jrng(derive_seed(spec.seed, "justifications"));
  for (auto& v : verdicts) v.justification = justification(v.label, jrng);

  pop.corpus = Corpus::build(std::move(posts), std::move(comments), std::move(verdicts));
  return pop;
}

inline void write_ground_truth(const GroundTruth& gt, std::ostream& os) {
  for (const auto& e : gt.entries) {
    os << nlohmann::json{{"verdict_key", e.verdict_key}, {"rule", to_string(gt.rule)}, {"trigger", e.trigger},
                         {"label", to_string(e.label)}}
              .dump()
       << '\n';
  }
}

// Writes posts.jsonl, comments.jsonl, verdicts.jsonl and ground_truth.jsonl into `dir`.
inline void write_population(const Population& pop, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_corpus(pop.corpus, dir + "/posts.jsonl", dir + "/comments.jsonl", dir + "/verdicts.jsonl");
  std::ofstream gt(dir + "/ground_truth.jsonl");
  if (!gt) throw DataError("cannot write " + dir + "/ground_truth.jsonl");
  write_ground_truth(pop.truth, gt);
}

}  // namespace dlab
