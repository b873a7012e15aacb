#include <gtest/gtest.h>

#include <filesystem>
#include <regex>
#include <sstream>

#include "dlab/synthgen.hpp"

using namespace dlab;

namespace {

PopulationSpec small_spec(JudgmentRule rule, std::uint64_t seed) {
  PopulationSpec s;
  s.n_annotators = 40;
  s.n_posts = 80;
  s.verdicts_per_annotator = 20;
  s.judgment_rule = rule;
  s.seed = seed;
  return s;
}

// Reads the trait back from the text of an annotator's key sentences alone.
bool trait_from_text(const std::string& key_text, JudgmentRule rule) {
  if (rule == JudgmentRule::AttitudeKeyed) {
    return key_text.find("waste") != std::string::npos || key_text.find("vanity") != std::string::npos ||
           key_text.find("scam") != std::string::npos;
  }
  std::smatch m;
  EXPECT_TRUE(std::regex_search(key_text, m, std::regex("(\\d+)"))) << key_text;
  return std::stoi(m[1]) < 40;
}

}  // namespace

TEST(Synth, SpecValidation) {
  PopulationSpec s;
  s.nta_base_rate = 0.3;  // needs 140% of posts marked at trait_fraction 0.5
  EXPECT_THROW(s.validate(), DataError);
  s.judgment_rule = JudgmentRule::Random;
  EXPECT_NO_THROW(s.validate());
  PopulationSpec bad;
  bad.disclosure_mix[1] = 1.5;
  EXPECT_THROW(bad.validate(), UsageError);
  bad = PopulationSpec{};
  bad.comments_min = 10;
  bad.comments_max = 5;
  EXPECT_THROW(bad.validate(), UsageError);
  bad = PopulationSpec{};
  bad.verdicts_per_annotator = bad.n_posts + 1;
  EXPECT_THROW(bad.validate(), UsageError);
  EXPECT_THROW(generate_population(s.judgment_rule == JudgmentRule::Random ? bad : s), Error);
  EXPECT_THROW(parse_judgment_rule("vibes"), UsageError);
}

TEST(Synth, HygieneAndDeterminism) {
  auto spec = small_spec(JudgmentRule::DemographicKeyed, 3);
  auto a = generate_population(spec);
  auto b = generate_population(spec);
  std::ostringstream sa, sb;
  write_ground_truth(a.truth, sa);
  write_ground_truth(b.truth, sb);
  EXPECT_EQ(sa.str(), sb.str());
  ASSERT_EQ(a.corpus.comments().size(), b.corpus.comments().size());
  for (std::size_t i = 0; i < a.corpus.comments().size(); ++i) {
    EXPECT_EQ(a.corpus.comments()[i].text, b.corpus.comments()[i].text);
  }

  EXPECT_EQ(a.corpus.posts().size(), spec.n_posts);
  EXPECT_EQ(a.corpus.verdicts().size(), spec.n_annotators * spec.verdicts_per_annotator);
  for (const auto& [ann, comments] : a.corpus.annotator_index()) {
    EXPECT_GE(comments.size(), spec.comments_min) << ann;
    EXPECT_LE(comments.size(), spec.comments_max) << ann;
  }
  for (const auto& v : a.corpus.verdicts()) EXPECT_NE(a.corpus.find_post(v.post_id)->author_id, v.annotator_id);
  EXPECT_EQ(a.truth.entries.size(), a.corpus.verdicts().size());

  auto other = generate_population(small_spec(JudgmentRule::DemographicKeyed, 4));
  EXPECT_NE(other.corpus.comments()[0].text + other.corpus.comments()[1].text,
            a.corpus.comments()[0].text + a.corpus.comments()[1].text);
}

TEST(Synth, PlantsAreRecoverable) {
  for (auto rule : {JudgmentRule::DemographicKeyed, JudgmentRule::AttitudeKeyed, JudgmentRule::Random}) {
    auto spec = small_spec(rule, 5);
    spec.disclosure_mix = {0.3, 0.3, 0.3, 0.3};
    auto pop = generate_population(spec);
    ASSERT_FALSE(pop.truth.plants.empty());
    std::array<int, kHighLevelCount> seen{};
    for (const auto& p : pop.truth.plants) {
      Comment c{p.comment_id, "x", p.sentence, "", {}};
      EXPECT_TRUE(assign_theory_categories(c).contains(p.category)) << p.sentence;
      // And within the full comment text.
      EXPECT_TRUE(assign_theory_categories(*pop.corpus.find_comment(p.comment_id)).contains(p.category));
      ++seen[static_cast<std::size_t>(p.category)];
    }
    for (int n : seen) EXPECT_GT(n, 0);
  }
}

TEST(Synth, DistractorsCarryNoDisclosure) {
  Rng rng(1);
  for (int i = 0; i < 300; ++i) {
    const auto& topic = synth::topics()[uniform_index(rng, synth::topics().size())];
    Comment c{"c", "a", synth::topic_sentence(topic, rng), "", {}};
    EXPECT_TRUE(assign_theory_categories(c).empty()) << c.text;
  }
}

TEST(Synth, KeyedLabelsFollowRule) {
  for (auto rule : {JudgmentRule::DemographicKeyed, JudgmentRule::AttitudeKeyed}) {
    auto pop = generate_population(small_spec(rule, 7));
    // Independent re-derivation: the trait from the annotator's key sentences,
    // the marked set from the ground truth.
    std::map<std::string, std::string> key_text;
    for (const auto& p : pop.truth.plants) {
      if (p.key) key_text[pop.corpus.find_comment(p.comment_id)->author_id] += p.sentence + " ";
    }
    std::size_t trait_count = 0;
    for (const auto& [ann, flag] : pop.truth.trait) {
      ASSERT_TRUE(key_text.contains(ann)) << ann;
      EXPECT_EQ(trait_from_text(key_text[ann], rule), flag) << key_text[ann];
      trait_count += flag;
    }
    EXPECT_EQ(trait_count, 20u);
    for (std::size_t i = 0; i < pop.corpus.verdicts().size(); ++i) {
      const auto& v = pop.corpus.verdicts()[i];
      const bool yta = trait_from_text(key_text[v.annotator_id], rule) && pop.truth.marked_posts.contains(v.post_id);
      EXPECT_EQ(v.label, yta ? Label::YTA : Label::NTA);
      EXPECT_EQ(pop.truth.entries[i].verdict_key, Corpus::verdict_key(v.post_id, v.annotator_id));
      EXPECT_EQ(pop.truth.entries[i].label, v.label);
    }
  }
}

TEST(Synth, BaseRateAtTenThousandVerdicts) {
  for (auto rule : {JudgmentRule::DemographicKeyed, JudgmentRule::Random}) {
    PopulationSpec spec;
    spec.n_annotators = 334;
    spec.n_posts = 300;
    spec.comments_min = 3;
    spec.comments_max = 5;
    spec.verdicts_per_annotator = 30;
    spec.judgment_rule = rule;
    spec.seed = 21;
    auto pop = generate_population(spec);
    const auto& v = pop.corpus.verdicts();
    ASSERT_GE(v.size(), 10000u);
    const double nta = static_cast<double>(std::count_if(v.begin(), v.end(), [](const Verdict& x) {
                         return x.label == Label::NTA;
                       })) /
                       static_cast<double>(v.size());
    EXPECT_GE(nta, 0.68) << to_string(rule);
    EXPECT_LE(nta, 0.72) << to_string(rule);
  }
}

TEST(Synth, RandomRuleIsIndependentOfTraits) {
  auto pop = generate_population(small_spec(JudgmentRule::Random, 9));
  for (const auto& [ann, flag] : pop.truth.trait) EXPECT_FALSE(flag);
  EXPECT_TRUE(pop.truth.marked_posts.empty());
  for (const auto& e : pop.truth.entries) EXPECT_EQ(e.trigger, "draw");
}

TEST(Synth, WritesLoadableCorpus) {
  const auto dir = (std::filesystem::temp_directory_path() / "dlab_synth_write").string();
  std::filesystem::remove_all(dir);
  auto pop = generate_population(small_spec(JudgmentRule::AttitudeKeyed, 2));
  write_population(pop, dir);
  auto back = ingest_corpus(dir + "/posts.jsonl", dir + "/comments.jsonl", dir + "/verdicts.jsonl");
  EXPECT_EQ(back.verdicts().size(), pop.corpus.verdicts().size());
  EXPECT_EQ(back.comments().size(), pop.corpus.comments().size());
  EXPECT_TRUE(std::filesystem::exists(dir + "/ground_truth.jsonl"));
  std::filesystem::remove_all(dir);
}
