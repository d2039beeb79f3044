#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cli.hpp"
#include "cpe/data.hpp"

namespace {

namespace fs = std::filesystem;
using cpe::cli::run_cli;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  fs::path dir;
  fs::path dataset;

  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("cpe_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    dataset = dir / "data.jsonl";
    const Outcome o = run({"synth", "--out", dataset.string(), "--seed", "3", "--features", "6", "--train-per-class",
                           "30", "--val-per-class", "15", "--test-per-class", "15"});
    ASSERT_EQ(o.code, 0) << o.err;
  }
  void TearDown() override { fs::remove_all(dir); }

  std::vector<std::string> quick(std::vector<std::string> args) const {
    for (const char* a : {"--dataset", "", "--epochs", "2", "--hidden-dim", "8", "--latent-dim", "3"}) args.push_back(a);
    args[args.size() - 7] = dataset.string();
    return args;
  }
};

TEST_F(CliTest, MissingDatasetNamesFlag) {
  const Outcome o = run({"train", "--out", (dir / "run").string()});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("--dataset"), std::string::npos);
}

TEST_F(CliTest, UnknownFlagIsUsageError) {
  EXPECT_EQ(run({"train", "--bogus"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
}

TEST_F(CliTest, ContradictoryFlagsAreUsageErrors) {
  EXPECT_EQ(run(quick({"train", "--out", (dir / "a").string(), "--norm-variant", "none", "--lambda1", "0.5"})).code, 2);
  EXPECT_EQ(run(quick({"train", "--out", (dir / "b").string(), "--no-conf", "--lambda2", "0.3"})).code, 2);
  EXPECT_EQ(run(quick({"train", "--out", (dir / "c").string(), "--norm-variant", "gauss"})).code, 2);
}

TEST_F(CliTest, ZeroLambda1WithL2IsAccepted) {
  const fs::path out = dir / "run";
  const Outcome o = run(quick({"train", "--out", out.string(), "--lambda1", "0", "--norm-variant", "l2"}));
  ASSERT_EQ(o.code, 0) << o.err;
  std::ifstream in(out / "metrics.jsonl");
  std::string line;
  std::getline(in, line);
  const auto rec = nlohmann::json::parse(line);
  EXPECT_EQ(rec["lambda1"], 0.0);
  EXPECT_EQ(rec["norm_variant"], "l2");
  EXPECT_LT(rec["l_norm"].get<double>(), 0.0);
}

TEST_F(CliTest, TrainWritesArtifactsAndIsReproducible) {
  const fs::path a = dir / "a", b = dir / "b";
  ASSERT_EQ(run(quick({"train", "--out", a.string(), "--seed", "7"})).code, 0);
  ASSERT_EQ(run(quick({"train", "--out", b.string(), "--seed", "7"})).code, 0);
  for (const char* f : {"checkpoint.json", "metrics.jsonl", "report.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(a / f)) << f;
  }
  EXPECT_EQ(slurp(a / "metrics.jsonl"), slurp(b / "metrics.jsonl"));
  EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
  EXPECT_EQ(slurp(a / "checkpoint.json"), slurp(b / "checkpoint.json"));

  auto ma = nlohmann::json::parse(slurp(a / "manifest.json"));
  auto mb = nlohmann::json::parse(slurp(b / "manifest.json"));
  for (auto* m : {&ma, &mb}) {
    m->erase("started_at");
    m->erase("finished_at");
  }
  EXPECT_EQ(ma, mb);
  EXPECT_EQ(ma["seeds"], nlohmann::json::array({7}));
  EXPECT_EQ(ma["config"]["epochs"], 2);
  EXPECT_EQ(ma["config"]["t1"], nullptr);
  EXPECT_EQ(ma["dataset"]["git_blob_sha1"], cpe::cli::git_blob_sha1(dataset));
}

TEST_F(CliTest, ManifestReproducesRun) {
  const fs::path a = dir / "a", b = dir / "b";
  ASSERT_EQ(run(quick({"train", "--out", a.string(), "--seed", "11", "--lambda2", "0.3"})).code, 0);
  const Outcome o = run({"train", "--config", (a / "manifest.json").string(), "--out", b.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(slurp(a / "metrics.jsonl"), slurp(b / "metrics.jsonl"));
  EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
}

TEST_F(CliTest, FlagsOverrideConfigFile) {
  const fs::path cfg = dir / "cfg.json";
  std::ofstream(cfg) << R"({"epochs": 1, "lambda1": 0.9, "seed": 5})";
  const fs::path out = dir / "run";
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--dataset", dataset.string(), "--out", out.string(),
                 "--lambda1", "0.2", "--hidden-dim", "4", "--latent-dim", "2"})
                .code,
            0);
  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(m["config"]["epochs"], 1);
  EXPECT_EQ(m["config"]["lambda1"], 0.2);
  EXPECT_EQ(m["config"]["seed"], 5);
  EXPECT_EQ(m["config"]["batch_size"], 32);
}

TEST_F(CliTest, EvalScoresCheckpoint) {
  const fs::path a = dir / "a";
  ASSERT_EQ(run(quick({"train", "--out", a.string(), "--metric", "accuracy"})).code, 0);
  const Outcome o = run({"eval", "--checkpoint", (a / "checkpoint.json").string(), "--dataset", dataset.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto report = nlohmann::json::parse(slurp(a / "report.json"));
  EXPECT_EQ(nlohmann::json::parse(o.out)["accuracy"], report["test"]["accuracy"]);
}

TEST_F(CliTest, AblateAggregatesEverySeed) {
  const fs::path out = dir / "abl";
  const Outcome o = run(quick({"ablate", "--out", out.string(), "--seeds", "1,2,3"}));
  ASSERT_EQ(o.code, 0) << o.err;
  const auto j = nlohmann::json::parse(slurp(out / "ablation.json"));
  std::vector<std::string> labels;
  for (const auto& row : j["rows"]) {
    labels.push_back(row["variant"]);
    EXPECT_EQ(row["runs"], 3);
    EXPECT_EQ(row["per_seed"].size(), 3u);
  }
  EXPECT_EQ(labels, (std::vector<std::string>{"CPE", "CPE_KL", "w/o Norm", "w/o Conf", "CE"}));

  // The header of the text table lists the JSON columns in order.
  const std::string text = slurp(out / "ablation.txt");
  std::size_t pos = 0;
  for (const auto& col : j["columns"]) {
    const std::size_t at = text.find(col.get<std::string>(), pos);
    ASSERT_NE(at, std::string::npos) << col;
    pos = at;
  }
  EXPECT_EQ(text, o.out);
}

TEST_F(CliTest, GridsearchSinglePoint) {
  const fs::path out = dir / "gs";
  const Outcome o = run(quick({"gridsearch", "--out", out.string(), "--grid", "0.3"}));
  ASSERT_EQ(o.code, 0) << o.err;
  const auto j = nlohmann::json::parse(slurp(out / "gridsearch.json"));
  EXPECT_EQ(j["rows"].size(), 1u);
  EXPECT_EQ(j["best"]["lambda1"], 0.3);
  EXPECT_EQ(j["best"]["lambda2"], 0.3);
  EXPECT_NE(slurp(out / "gridsearch.txt").find("best: lambda1=0.3 lambda2=0.3"), std::string::npos);
}

TEST_F(CliTest, GridsearchDefaultGridHasTwentyFiveRows) {
  const fs::path out = dir / "gs";
  std::vector<std::string> args = quick({"gridsearch", "--out", out.string()});
  args[args.size() - 5] = "1";  // one epoch keeps this quick
  const Outcome o = run(args);
  ASSERT_EQ(o.code, 0) << o.err;
  const auto j = nlohmann::json::parse(slurp(out / "gridsearch.json"));
  EXPECT_EQ(j["rows"].size(), 25u);
  const std::string best = "best: lambda1=" + nlohmann::json(j["best"]["lambda1"]).dump() +
                           " lambda2=" + nlohmann::json(j["best"]["lambda2"]).dump();
  EXPECT_NE(slurp(out / "gridsearch.txt").find(best), std::string::npos) << best;
}

TEST_F(CliTest, GradcheckPassesAndFaultFails) {
  const fs::path report = dir / "gc.json";
  const Outcome ok = run({"gradcheck", "--cases", "20", "--out", report.string()});
  EXPECT_EQ(ok.code, 0) << ok.out;
  const auto j = nlohmann::json::parse(slurp(report));
  EXPECT_TRUE(j["passed"]);
  for (const auto& op : j["ops"]) EXPECT_TRUE(op.contains("max_rel_error"));
  EXPECT_NE(ok.out.find("max rel err"), std::string::npos);

  const Outcome bad = run({"gradcheck", "--cases", "5", "--inject-fault"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("worst:"), std::string::npos);
}

TEST_F(CliTest, SynthRoundTripAndDeterminism) {
  const fs::path a = dir / "a.tsv", b = dir / "b.tsv";
  for (const auto& p : {a, b}) {
    ASSERT_EQ(run({"synth", "--out", p.string(), "--seed", "9", "--classes", "3", "--train-per-class", "100",
                   "--val-per-class", "100", "--test-per-class", "100"})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(a), slurp(b));
  cpe::MixtureSpec spec;
  spec.train_per_class = spec.val_per_class = spec.test_per_class = 100;
  const cpe::LabeledDataset loaded = cpe::load_tabular(a, cpe::TabularFormat::tsv);
  EXPECT_EQ(loaded.size(), 900u);
  EXPECT_EQ(loaded, cpe::synth_mixture(spec, 9));
}

TEST_F(CliTest, SynthInvalidSpecIsUsageError) {
  EXPECT_EQ(run({"synth", "--out", (dir / "x.jsonl").string(), "--classes", "1"}).code, 2);
  EXPECT_EQ(run({"synth", "--out", (dir / "x.csv").string()}).code, 2);
}

TEST(GitBlob, MatchesGitHashObject) {
  const fs::path p = fs::temp_directory_path() / "cpe_blob.txt";
  std::ofstream(p, std::ios::binary) << "hello\n";
  EXPECT_EQ(cpe::cli::git_blob_sha1(p), "ce013625030ba8dba906f756967f9e9ca394464a");
  fs::remove(p);
}

}  // namespace
