#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

#include "fixtures.hpp"

using namespace semid;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SEMID_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::ostringstream sink;

}  // namespace

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fixtures::scratch("pipeline");
    config_ = fixtures::mini_setup(dir_, 5);
    Pipeline p(PipelineConfig::load(config_), sink);
    report_ = p.all();
    p.write_manifest("all");
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static inline fs::path dir_;
  static inline fs::path config_;
  static inline MetricsReport report_;
};

TEST_F(PipelineTest, AllProducesMetrics) {
  const auto work = dir_ / "work";
  for (const char* f : {"sequences.tsv", "catalog.tsv", "reviews.tsv", "prepare.json", "embeddings.tsv", "model.ckpt",
                        "loss_trace.tsv", "fused.tsv", "assignment_P-ID.tsv", "assignment_N-ID.tsv",
                        "assignment_O-ID.tsv", "summaries.jsonl", "prompts.jsonl", "prompts_stats.json",
                        "candidates.tsv", "rankings.jsonl", "metrics.txt", "metrics.jsonl", "manifest.json"})
    EXPECT_TRUE(fs::exists(work / f)) << f;
  EXPECT_EQ(report_.n_users_total, 200u);
  EXPECT_NE(fixtures::slurp(work / "metrics.txt").find("Overall"), std::string::npos);
}

TEST_F(PipelineTest, PrepareStatsMatchConstruction) {
  const auto j = nlohmann::json::parse(fixtures::slurp(dir_ / "work" / "prepare.json"));
  EXPECT_EQ(j["after_kcore"]["users"], 200);
  EXPECT_EQ(j["after_kcore"]["items"], 150);
  EXPECT_EQ(j["split"]["users"], 200);
  EXPECT_EQ(j["ingest"]["malformed_reviews"], 1);
  EXPECT_EQ(j["ingest"]["dropped_untitled"], 3);
}

TEST_F(PipelineTest, AssignmentsAreInjective) {
  for (auto mode : {IndexMode::PID, IndexMode::NID, IndexMode::OID}) {
    std::ifstream in(dir_ / "work" / ("assignment_" + to_string(mode) + ".tsv"));
    const auto a = read_assignment(in);
    EXPECT_EQ(a.mode, mode);
    EXPECT_EQ(a.rendered.size(), 200u);
    EXPECT_TRUE(a.injective());
  }
}

TEST_F(PipelineTest, SameConfigSameManifest) {
  const auto first = nlohmann::json::parse(fixtures::slurp(dir_ / "work" / "manifest.json"));
  Pipeline p(PipelineConfig::load(config_), sink);
  p.all();
  p.write_manifest("all");
  const auto second = nlohmann::json::parse(fixtures::slurp(dir_ / "work" / "manifest.json"));
  EXPECT_EQ(first["config_hash"], second["config_hash"]);
  EXPECT_EQ(first["seeds"], second["seeds"]);
  ASSERT_EQ(first["artifacts"].size(), 18u);
  for (const auto& [name, sum] : first["artifacts"].items()) EXPECT_EQ(second["artifacts"][name], sum) << name;
}

TEST_F(PipelineTest, AblationHasThreeRows) {
  Pipeline p(PipelineConfig::load(config_), sink);
  const auto rows = p.ablate_index();
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2].mode, IndexMode::PID);
  const auto table = Pipeline::format_ablation(rows);
  for (const char* m : {"P-ID", "N-ID", "O-ID"}) EXPECT_NE(table.find(m), std::string::npos);

  // the P-ID prompts carry the injective assignment
  std::ifstream in(dir_ / "work" / "assignment_P-ID.tsv");
  const auto a = read_assignment(in);
  std::ifstream prompts(dir_ / "work" / "prompts.jsonl");
  std::size_t checked = 0;
  for (const auto& inst : read_corpus(prompts))
    if (inst.task == TaskKind::PrefToIndex) {
      EXPECT_EQ(inst.target, a.id_of(inst.user_id));
      ++checked;
    }
  EXPECT_EQ(checked, 100u);
}

TEST_F(PipelineTest, AblationNeedsEveryMode) {
  const auto copy = dir_ / "partial";
  fs::copy(dir_ / "work", copy);
  fs::remove(copy / "assignment_O-ID.tsv");
  auto cfg = PipelineConfig::load(config_);
  cfg.paths.workdir = copy;
  Pipeline p(cfg, sink);
  try {
    p.ablate_index();
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("assignment_O-ID.tsv"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("train-index"), std::string::npos);
  }
}

TEST(Pipeline, EvalBeforeRankNamesProducer) {
  const auto dir = fixtures::scratch("eval_first");
  auto cfg = PipelineConfig::load(fixtures::mini_setup(dir, 1));
  Pipeline p(cfg, sink);
  try {
    p.eval();
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("semid rank"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Config, FieldLevelValidation) {
  auto base = nlohmann::json::parse(R"({"paths": {"reviews": "r", "metadata": "m"}})");
  auto bad = [&](const char* section, const char* key, nlohmann::json v) {
    auto j = base;
    j[section][key] = v;
    try {
      PipelineConfig::from_json(j).validate();
      return std::string("no error");
    } catch (const UsageError& e) {
      return std::string(e.what());
    }
  };
  EXPECT_NE(bad("rqvae", "beta", 0.0).find("rqvae.beta"), std::string::npos);
  EXPECT_NE(bad("rqvae", "p", 0).find("rqvae.p"), std::string::npos);
  EXPECT_NE(bad("rank", "scorer", "gpt").find("rank.scorer"), std::string::npos);
  EXPECT_NE(bad("eval", "ks", nlohmann::json::array({0})).find("eval.ks"), std::string::npos);
  EXPECT_NE(bad("corpus", "kcore", 0).find("corpus.kcore"), std::string::npos);
  EXPECT_NE(bad("embed", "provider", "bert").find("embed.provider"), std::string::npos);
  EXPECT_EQ(bad("rqvae", "beta", 0.5), "no error");
  EXPECT_NE(bad("index", "mode", "Q-ID").find("index.mode"), std::string::npos);
}

TEST(Config, EnvironmentInterpolationAndRelativePaths) {
  ::setenv("SEMID_TEST_ROOT", "/data/beauty", 1);
  auto j = nlohmann::json::parse(R"({"paths": {"reviews": "${SEMID_TEST_ROOT}/reviews.json", "metadata": "meta.json"}})");
  const auto c = PipelineConfig::from_json(j, "/cfg");
  EXPECT_EQ(c.paths.reviews, fs::path("/data/beauty/reviews.json"));
  EXPECT_EQ(c.paths.metadata, fs::path("/cfg/meta.json"));

  auto missing = nlohmann::json::parse(R"({"prompts": {"chat": {"token_env": "${SEMID_SURELY_UNSET_VAR}"}}})");
  EXPECT_THROW(PipelineConfig::from_json(missing), UsageError);
}

TEST(Config, SeedOverrideReachesEveryStage) {
  PipelineConfig c;
  c.override_seed(77);
  EXPECT_EQ(c.embed.seed, 77u);
  EXPECT_EQ(c.rqvae.seed, 77u);
  EXPECT_EQ(c.prompts.seed, 77u);
  EXPECT_EQ(c.rank.seed, 77u);
}

TEST(Cli, ExitCodes) {
  const auto dir = fixtures::scratch("cli");
  const auto cfg = fixtures::mini_setup(dir, 2);
  const std::string base = "--config " + cfg.string() + " --workdir " + (dir / "w").string();

  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("prepare"), 1);  // no --config
  EXPECT_EQ(run_cli(base + " frobnicate"), 1);
  EXPECT_EQ(run_cli(base + " eval"), 2);  // upstream artifact missing
  EXPECT_EQ(run_cli(base + " prepare"), 0);
  EXPECT_EQ(run_cli(base + " embed"), 0);

  auto j = nlohmann::json::parse(fixtures::slurp(cfg));
  j["rqvae"]["lr"] = 1e12;
  std::ofstream(dir / "diverge.json") << j.dump();
  EXPECT_EQ(run_cli("--config " + (dir / "diverge.json").string() + " --workdir " + (dir / "w").string() +
                    " train-index"),
            3);

  j["rqvae"]["lr"] = -1;
  std::ofstream(dir / "bad.json") << j.dump();
  EXPECT_EQ(run_cli("--config " + (dir / "bad.json").string() + " prepare"), 1);
  fs::remove_all(dir);
}
