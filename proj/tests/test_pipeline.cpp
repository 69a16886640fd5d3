#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "adaptometer/pipeline.hpp"

using namespace adaptometer;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("adaptometer_") + info->name() + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Writes a small synthetic rules-level corpus and returns its path.
  fs::path synth_corpus(double lambda, bool fixed_pair = false) {
    RunConfig cfg;
    cfg.out_dir = dir_ / "synth";
    cfg.seed = 7;
    cfg.synth.conversations = fixed_pair ? 40 : 60;
    cfg.synth.lambda = lambda;
    cfg.synth.fixed_pair = fixed_pair;
    cfg.synth.persona_spread = fixed_pair ? 1.0 : 0.0;
    cmd_synth(cfg);
    return cfg.out_dir / "synth_corpus.jsonl";
  }

  fs::path dir_;
};

}  // namespace

TEST_F(PipelineTest, SynthWritesCorpusConfigAndProvenance) {
  const auto corpus = synth_corpus(0.5);
  EXPECT_TRUE(fs::exists(corpus));
  EXPECT_TRUE(fs::exists(corpus.parent_path() / "synth_config.json"));
  const auto prov = nlohmann::json::parse(slurp(corpus.parent_path() / "provenance.json"));
  EXPECT_EQ(prov["command"], "synth");
  EXPECT_EQ(prov["seed"], 7);
  EXPECT_EQ(load_corpus(corpus, CorpusFormat::kRules).size(), 60u);
}

TEST_F(PipelineTest, StatsWritesHistograms) {
  RunConfig cfg;
  cfg.corpus = synth_corpus(0.0);
  cfg.format = CorpusFormat::kRules;
  cfg.out_dir = dir_ / "stats";
  const auto written = cmd_stats(cfg);
  for (const char* name : {"conversation_lengths.csv", "utterance_lengths.csv", "speaker_turns.csv", "summary.csv"})
    EXPECT_TRUE(fs::exists(cfg.out_dir / name)) << name;
  EXPECT_EQ(written.size(), 5u);
  EXPECT_NE(slurp(cfg.out_dir / "summary.csv").find("conversations,60\n"), std::string::npos);
  // 800 words per conversation, all 60 in one bin.
  EXPECT_NE(slurp(cfg.out_dir / "conversation_lengths.csv").find("800,60"), std::string::npos);
}

TEST_F(PipelineTest, MissingCorpusNamesThePath) {
  RunConfig cfg;
  cfg.corpus = dir_ / "nope.jsonl";
  cfg.out_dir = dir_ / "x";
  try {
    cmd_stats(cfg);
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("nope.jsonl"), std::string::npos);
  }
  cfg.corpus.clear();
  EXPECT_THROW(cmd_analyze(cfg), UsageError);
  EXPECT_THROW(cmd_jsd(cfg), UsageError);
}

TEST_F(PipelineTest, AnalyzeIsByteIdenticalAcrossRuns) {
  RunConfig cfg;
  cfg.corpus = synth_corpus(0.5);
  cfg.format = CorpusFormat::kRules;
  cfg.formula = "prime ~ ln_freq + same_conv + ln_size + (1 | conv_id)";
  cfg.out_dir = dir_ / "a1";
  cmd_analyze(cfg);
  cfg.out_dir = dir_ / "a2";
  cmd_analyze(cfg);
  for (const char* name : {"samples.csv", "fit_report.json", "fit_report.txt", "rule_frequencies.csv",
                           "split_report.json", "provenance.json"}) {
    const auto a = slurp(dir_ / "a1" / name);
    EXPECT_FALSE(a.empty()) << name;
    EXPECT_EQ(a, slurp(dir_ / "a2" / name)) << name;
  }
  const auto report = nlohmann::json::parse(slurp(dir_ / "a1" / "fit_report.json"));
  EXPECT_TRUE(report.contains("formula"));
  EXPECT_GT(report["units"].get<std::size_t>(), 0u);
}

TEST_F(PipelineTest, JsdMatrixAndTrajectory) {
  RunConfig cfg;
  cfg.corpus = synth_corpus(0.5, true);
  cfg.format = CorpusFormat::kRules;
  cfg.out_dir = dir_ / "m";
  cmd_jsd(cfg);
  EXPECT_TRUE(fs::exists(cfg.out_dir / "jsd_matrix.csv"));

  cfg.jsd_mode = JsdMode::kTrajectory;
  EXPECT_THROW(cmd_jsd(cfg), UsageError);
  cfg.pair = {"A", "B"};
  cfg.bootstrap = 1;
  cfg.out_dir = dir_ / "t";
  cmd_jsd(cfg);
  std::istringstream csv(slurp(cfg.out_dir / "trajectory.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "split_index,mean_jsd,std_jsd,n_conversations");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    // B=1 leaves no spread.
    EXPECT_EQ(line.substr(line.find(',', line.find(',') + 1) + 1, 2), "0,") << line;
  }
  EXPECT_GT(rows, 0u);
}

TEST_F(PipelineTest, DryRunGenerateWithThreePersonas) {
  RunConfig cfg;
  cfg.dry_run = true;
  cfg.personas = {1, 2, 3};
  cfg.out_dir = dir_ / "g";
  const auto written = cmd_generate(cfg);
  EXPECT_EQ(written.size(), 4u);
  const auto raw = load_corpus(cfg.out_dir / "raw_transcripts.jsonl", CorpusFormat::kTranscript);
  EXPECT_EQ(raw.size(), 3u);
  EXPECT_TRUE(fs::exists(cfg.out_dir / "transcripts.jsonl"));
  EXPECT_TRUE(fs::exists(cfg.out_dir / "exclusion_report.json"));
}

TEST_F(PipelineTest, MissingApiKeyIsAUsageError) {
  RunConfig cfg;
  cfg.generation.api_key_env = "ADAPTOMETER_TEST_UNSET_KEY";
  ::unsetenv("ADAPTOMETER_TEST_UNSET_KEY");
  cfg.out_dir = dir_ / "k";
  try {
    cmd_generate(cfg);
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("ADAPTOMETER_TEST_UNSET_KEY"), std::string::npos);
  }
  EXPECT_FALSE(fs::exists(cfg.out_dir / "raw_transcripts.jsonl"));
}

#ifdef ADAPTOMETER_CLI
TEST_F(PipelineTest, CliExitCodes) {
  const std::string cli = ADAPTOMETER_CLI;
  const std::string out = " --out-dir " + (dir_ / "cli").string() + " >/dev/null 2>&1";
  auto run = [](const std::string& cmd) { return WEXITSTATUS(std::system(cmd.c_str())); };
  EXPECT_EQ(run("env -u ADAPTOMETER_API_KEY " + cli + out + " generate --personas 1,2"), 1);
  EXPECT_EQ(run(cli + out + " stats --corpus " + (dir_ / "missing.jsonl").string()), 1);
  EXPECT_EQ(run(cli + out + " bogus"), 1);
  EXPECT_EQ(run(cli + out + " generate --dry-run --personas 1,2"), 0);
  EXPECT_TRUE(fs::exists(dir_ / "cli" / "transcripts.jsonl"));
}
#endif
