#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kBin = DLAB_BIN;
const std::string kTmp = (fs::temp_directory_path() / "dlab_cli_test").string();

int run(const std::string& args, std::string* out = nullptr) {
  fs::create_directories(kTmp);
  const std::string log = kTmp + "/stdout.txt";
  const int status = std::system((kBin + " " + args + " > " + log + " 2> " + kTmp + "/stderr.txt").c_str());
  if (out) {
    std::ifstream in(log);
    *out = {std::istreambuf_iterator<char>(in), {}};
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("--version"), 0);
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("synth --annotators 1 --out " + kTmp + "/bad"), 1);

  const std::string dir = kTmp + "/broken";
  fs::create_directories(dir);
  std::ofstream(dir + "/posts.jsonl") << "{\"id\": \"p1\", \"title\": \"t\"\n";
  std::ofstream(dir + "/comments.jsonl") << "";
  std::ofstream(dir + "/verdicts.jsonl") << "";
  EXPECT_EQ(run("ingest --posts " + dir + "/posts.jsonl --comments " + dir + "/comments.jsonl --verdicts " + dir +
                "/verdicts.jsonl --out " + kTmp + "/ingested"),
            2);
}

TEST(Cli, ExtractText) {
  std::string out;
  ASSERT_EQ(run("extract --text \"As a 24F, I work as a civil engineer.\"", &out), 0);
  std::vector<nlohmann::json> spans;
  std::istringstream in(out);
  for (std::string line; std::getline(in, line);) spans.push_back(nlohmann::json::parse(line));
  ASSERT_FALSE(spans.empty());
  bool gender = false, work = false;
  for (const auto& s : spans) {
    if (s["category"] == "Gender") {
      gender = true;
      EXPECT_EQ(s["text"], "24F");
      EXPECT_EQ(s["theory"], "Demographics");
    }
    if (s["category"] == "Work") {
      work = true;
      EXPECT_EQ(s["theory"], "Experiences");
    }
  }
  EXPECT_TRUE(gender);
  EXPECT_TRUE(work);
}

TEST(Cli, SynthThenRun) {
  const std::string corpus = kTmp + "/synth";
  fs::remove_all(corpus);
  ASSERT_EQ(run("synth --annotators 20 --posts 40 --comments-min 4 --comments-max 6 --verdicts-per-annotator 10 "
                "--seed 3 --out " + corpus),
            0);
  EXPECT_TRUE(fs::exists(corpus + "/population.json"));
  std::string out;
  ASSERT_EQ(run("run --set corpus.posts=" + corpus + "/posts.jsonl --set corpus.comments=" + corpus +
                    "/comments.jsonl --set corpus.verdicts=" + corpus +
                    "/verdicts.jsonl --set grid.baselines=no_comments --set grid.strategies=similar_comments "
                    "--set grid.max_samples=2 --set embed.dim=128 --set train.epochs=2 --set train.runs=1 --out " +
                    kTmp + "/runout",
                &out),
            0);
  EXPECT_TRUE(fs::exists(kTmp + "/runout/results.tsv"));
  ASSERT_EQ(run("report --results " + kTmp + "/runout/results.tsv --layout table2 --out " + kTmp + "/t2.tsv"), 0);
  EXPECT_EQ(run("report --results " + kTmp + "/runout/results.tsv --layout table9 --out " + kTmp + "/t9.tsv"), 1);
}
