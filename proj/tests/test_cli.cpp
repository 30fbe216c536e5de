#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dcn/cli.hpp"
#include "dcn/config.hpp"
#include "dcn/errors.hpp"

namespace dcn {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "dcn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliWorkspace : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "dcn_cli_tests";
    fs::remove_all(root_);
    fs::create_directories(root_);
    const auto synth = run({"synth", "--users", "30", "--items", "40", "--interactions", "1200", "--seed", "3",
                            "--out", (root_ / "synth").string()});
    ASSERT_EQ(synth.code, 0) << synth.err;
    const auto prep = run({"prepare", "--input", (root_ / "synth" / "interactions.csv").string(), "--n-core", "2",
                           "--out", (root_ / "prep").string()});
    ASSERT_EQ(prep.code, 0) << prep.err;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::vector<std::string> small_train_flags() {
    return {"--data", (root_ / "prep").string(), "--embed-dim", "8", "--max-seq-len", "5", "--epochs-max", "2",
            "--batch-size", "64", "--k-neg-eval", "9", "--seed", "11"};
  }

  static CliRun train_into(const std::string& name, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"train", "--out", (root_ / name).string()};
    const auto flags = small_train_flags();
    args.insert(args.end(), flags.begin(), flags.end());
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  }

  static fs::path root_;
};

fs::path CliWorkspace::root_;

TEST_F(CliWorkspace, PrepareWritesSplitsAndIsDeterministic) {
  const auto again = run({"prepare", "--input", (root_ / "synth" / "interactions.csv").string(), "--n-core", "2",
                          "--out", (root_ / "prep2").string()});
  ASSERT_EQ(again.code, 0) << again.err;
  for (const char* name : {"train.csv", "valid.csv", "test.csv", "metadata.json", "config.txt"}) {
    ASSERT_TRUE(fs::exists(root_ / "prep" / name)) << name;
    if (std::string(name) != "config.txt")
      EXPECT_EQ(file_bytes(root_ / "prep" / name), file_bytes(root_ / "prep2" / name)) << name;
  }
}

TEST_F(CliWorkspace, PrepareThatEmptiesTheLogWarns) {
  const auto r = run({"prepare", "--input", (root_ / "synth" / "interactions.csv").string(), "--n-core", "100000",
                      "--out", (root_ / "empty").string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_TRUE(fs::exists(root_ / "empty" / "train.csv"));
}

TEST_F(CliWorkspace, MalformedInputExitsTwo) {
  std::ofstream(root_ / "bad.csv") << "user_id,item_id,timestamp,label\nx,y,notatime,1\n";
  const auto r = run({"prepare", "--input", (root_ / "bad.csv").string(), "--out", (root_ / "bad").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("row 1"), std::string::npos) << r.err;
  EXPECT_EQ(run({"prepare", "--out", (root_ / "bad").string()}).code, 2);
  EXPECT_EQ(run({"train", "--out", (root_ / "bad").string()}).code, 2);
}

TEST_F(CliWorkspace, TrainRerunAndEchoedConfigReproduceOutputs) {
  const auto a = train_into("run_a");
  ASSERT_EQ(a.code, 0) << a.err;
  for (const char* name : {"model.ckpt", "history.csv", "report_user.json", "report_item.json", "config.txt"})
    EXPECT_TRUE(fs::exists(root_ / "run_a" / name)) << name;
  const auto b = train_into("run_b");
  ASSERT_EQ(b.code, 0) << b.err;
  const auto c = run({"train", "--config", (root_ / "run_a" / "config.txt").string(), "--out",
                      (root_ / "run_c").string(), "--checkpoint", (root_ / "run_c" / "model.ckpt").string()});
  ASSERT_EQ(c.code, 0) << c.err;
  for (const char* name : {"history.csv", "report_user.json", "report_item.json", "model.ckpt"}) {
    EXPECT_EQ(file_bytes(root_ / "run_a" / name), file_bytes(root_ / "run_b" / name)) << name;
    EXPECT_EQ(file_bytes(root_ / "run_a" / name), file_bytes(root_ / "run_c" / name)) << name;
  }
}

TEST_F(CliWorkspace, EvaluateReproducesTrainReports) {
  ASSERT_EQ(train_into("run_e").code, 0);
  const auto r = run({"evaluate", "--config", (root_ / "run_e" / "config.txt").string(), "--out",
                      (root_ / "eval_e").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(file_bytes(root_ / "eval_e" / "report_user.json"), file_bytes(root_ / "run_e" / "report_user.json"));
  EXPECT_EQ(file_bytes(root_ / "eval_e" / "report_item.json"), file_bytes(root_ / "run_e" / "report_item.json"));
  EXPECT_NE(r.out.find("\"centricity\": \"item\""), std::string::npos);

  const auto one = run({"evaluate", "--config", (root_ / "run_e" / "config.txt").string(), "--out",
                        (root_ / "eval_u").string(), "--centricity", "user"});
  ASSERT_EQ(one.code, 0) << one.err;
  EXPECT_TRUE(fs::exists(root_ / "eval_u" / "report_user.json"));
  EXPECT_FALSE(fs::exists(root_ / "eval_u" / "report_item.json"));
}

TEST_F(CliWorkspace, EvaluateArtifactErrorsExitFour) {
  ASSERT_EQ(train_into("run_f").code, 0);
  const std::string missing = (root_ / "nowhere.ckpt").string();
  const auto r = run({"evaluate", "--data", (root_ / "prep").string(), "--checkpoint", missing, "--out",
                      (root_ / "ev_missing").string()});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;

  const auto shape = run({"evaluate", "--config", (root_ / "run_f" / "config.txt").string(), "--embed-dim", "4",
                          "--out", (root_ / "ev_shape").string()});
  EXPECT_EQ(shape.code, 4);
  EXPECT_NE(shape.err.find("user_embedding"), std::string::npos) << shape.err;

  const auto hash = run({"evaluate", "--config", (root_ / "run_f" / "config.txt").string(), "--static-tower-input",
                         "hidden", "--out", (root_ / "ev_hash").string()});
  EXPECT_EQ(hash.code, 4);
  EXPECT_NE(hash.err.find("hash"), std::string::npos) << hash.err;
}

TEST_F(CliWorkspace, AblateAndSweepWriteTables) {
  std::vector<std::string> args{"sweep", "--out", (root_ / "sweep").string(), "--grid", "0,1e-3"};
  const auto flags = small_train_flags();
  args.insert(args.end(), flags.begin(), flags.end());
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(root_ / "sweep" / "sweep.json"));
  std::ifstream csv(root_ / "sweep" / "sweep.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 3u);
}

TEST(Cli, ParseErrorsAndHelp) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"train", "--no-such-flag", "1"}).code, 2);
  EXPECT_EQ(run({"train", "--embed-dim", "abc"}).code, 2);
}

TEST(Cli, UnknownConfigKeyExitsTwo) {
  const auto path = fs::temp_directory_path() / "dcn_bad_config.txt";
  std::ofstream(path) << "seed = 1\nlearning_rate = 0.1\n";
  const auto r = run({"train", "--config", path.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos) << r.err;
  fs::remove(path);
}

TEST(Cli, SelftestCleanAndWithInjectedFault) {
  const auto clean = run({"selftest"});
  EXPECT_EQ(clean.code, 0) << clean.out;
  EXPECT_NE(clean.out.find("gradients:"), std::string::npos) << clean.out;
  EXPECT_NE(clean.out.find("metrics:"), std::string::npos);
  EXPECT_NE(clean.out.find("invariants:"), std::string::npos);
  const auto faulty = run({"selftest", "--inject-fault", "matmul"});
  EXPECT_EQ(faulty.code, 1);
  EXPECT_NE(faulty.out.find("FAIL gradients / op matmul"), std::string::npos) << faulty.out;
  EXPECT_EQ(run({"selftest", "--inject-fault", "no_such_op"}).code, 2);
}

TEST(RunConfig, DefaultsMatchTrainerDefaults) {
  const RunConfig c;
  EXPECT_EQ(c.train.embed_dim, 32u);
  EXPECT_EQ(c.train.batch_size, 200u);
  EXPECT_EQ(c.train.lr, 1e-3);
  EXPECT_EQ(c.n_core, 10u);
  EXPECT_EQ(c.grid, kDefaultSweepGrid);
  EXPECT_EQ(c.checkpoint_path(), fs::path("out") / "model.ckpt");
  EXPECT_EQ(c.centricities().size(), 2u);
}

TEST(RunConfig, TextRoundTrip) {
  RunConfig c;
  c.set("lambda_e", "3e-5");
  c.set("backbone", "attention");
  c.set("grid", "0,1e-6,0.5");
  c.set("train_end", "100");
  c.set("aux_on_negatives", "false");
  c.set("seed", "123");
  RunConfig back;
  std::istringstream in(c.to_text());
  apply_config_text(back, in, "echo");
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.train.lambda_repr, 3e-5);
  EXPECT_EQ(back.train.backbone, Backbone::kAttention);
  EXPECT_EQ(back.grid, (std::vector<double>{0, 1e-6, 0.5}));
  EXPECT_EQ(back.train_end, 100);
  EXPECT_FALSE(back.valid_end.has_value());
  EXPECT_FALSE(back.train.aux_on_negatives);
  std::size_t lines = 0;
  for (char ch : c.to_text()) lines += ch == '\n';
  EXPECT_EQ(lines, RunConfig::keys().size());
}

TEST(RunConfig, RejectsUnknownRepeatedAndMalformed) {
  RunConfig c;
  std::istringstream unknown("# comment\n\nseed = 1\nbogus = 2\n");
  try {
    apply_config_text(c, unknown, "cfg");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
  std::istringstream repeated("seed = 1\nseed = 2\n");
  EXPECT_THROW(apply_config_text(c, repeated, "cfg"), InputError);
  std::istringstream no_equals("seed 1\n");
  EXPECT_THROW(apply_config_text(c, no_equals, "cfg"), InputError);
  EXPECT_THROW(c.set("batch_size", "-3"), InputError);
  EXPECT_THROW(c.set("centricity", "both-ish"), InputError);
  EXPECT_THROW(c.set("lr", "fast"), InputError);
}

TEST(RunConfig, AutoSplitUsesTimestampQuantiles) {
  std::vector<Interaction> events;
  for (std::int64_t t = 1; t <= 100; ++t) events.push_back({1, 1, t, 1});
  RunConfig c;
  const auto spec = resolve_split(c, events);
  EXPECT_EQ(spec.train_end, 81);
  EXPECT_EQ(spec.valid_end, 91);
  c.set("valid_end", "95");
  EXPECT_EQ(resolve_split(c, events).valid_end, 95);
}

}  // namespace
}  // namespace dcn
