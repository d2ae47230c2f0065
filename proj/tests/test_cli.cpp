#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "cli.hpp"
#include "dense/model.hpp"
#include "dense/training.hpp"

namespace fs = std::filesystem;
using namespace dense;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "dense");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> v;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("dense_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    ASSERT_EQ(run({"generate", "--sim", "spectral", "--n", "300", "--seed", "4", "--out", p("ds")}).code, 0);
    ASSERT_EQ(run({"train", "--dataset", p("ds"), "--epochs", "1", "--channels", "8", "--out", p("m")}).code, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }
  static std::string p(const std::string& name) { return (dir_ / name).string(); }

  static fs::path dir_;
};
fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, GenerateRecordsSplit) {
  const auto r = run({"generate", "--sim", "spectral", "--n", "14000", "--seed", "1", "--out", p("big")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "sim,n,seed,train,val,test\nspectral,14000,1,7000,2940,4060\n");
  const auto ds = load_dataset(p("big"));
  EXPECT_EQ(ds.split.train.size(), 7000u);
  EXPECT_EQ(ds.split.val.size(), 2940u);
  EXPECT_EQ(ds.split.test.size(), 4060u);
  EXPECT_EQ(ds.seed, 1u);
}

TEST_F(Cli, GenerateIsByteIdentical) {
  ASSERT_EQ(run({"generate", "--sim", "scalars", "--n", "50", "--seed", "3", "--out", p("a")}).code, 0);
  ASSERT_EQ(run({"generate", "--sim", "scalars", "--n", "50", "--seed", "3", "--out", p("b")}).code, 0);
  EXPECT_EQ(slurp(p("a")), slurp(p("b")));
}

TEST_F(Cli, UnknownSimulationIsUsageError) {
  const auto r = run({"generate", "--sim", "nope", "--out", p("x")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("spectral, image, scalars"), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"train", "--dataset", p("missing"), "--out", p("x")}).code, cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"train", "--dataset", p("ds"), "--mode", "other", "--out", p("x")}).code, cli::kExitUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
  {
    std::ofstream f(p("garbage"));
    f << "not a model\n";
  }
  const auto r = run({"evaluate", "--model", p("garbage"), "--dataset", p("ds")});
  EXPECT_EQ(r.code, cli::kExitRuntime);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST_F(Cli, TrainZeroEpochsPersistsInitialModel) {
  const auto r = run({"train", "--dataset", p("ds"), "--epochs", "0", "--channels", "8", "--seed", "5",
                      "--out", p("m0")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = load_model(p("m0"));
  EXPECT_EQ(m.seed, 5u);
  SuperArchConfig sc;
  sc.channels = 8;
  sc.init_seed = 5;
  const auto ref = default_superarch(3, {{1, {250}}}, sc);
  const auto a = m.arch.snapshot();
  const auto b = ref.snapshot();
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.logits, b.logits);
  EXPECT_EQ(slurp(p("m0") + ".report.csv"), "epoch,train_loss,val_loss,lr1,lr2\n");
}

TEST_F(Cli, TrainDefaultsAreTheDenseColumn) {
  const auto rows = lines(slurp(p("m") + ".report.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], "epoch,train_loss,val_loss,lr1,lr2");
  EXPECT_NE(rows[1].find(",0.000306,0.00488"), std::string::npos) << rows[1];
}

TEST_F(Cli, ConfigFileOverridesFlags) {
  {
    std::ofstream f(p("cfg.json"));
    f << R"({"epochs": 2, "alpha1": 0.001, "channels": 8})";
  }
  const auto r = run({"train", "--dataset", p("ds"), "--epochs", "5", "--channels", "4", "--config",
                      p("cfg.json"), "--out", p("mc"), "--report", p("mc.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(slurp(p("mc.csv")));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_NE(rows[1].find(",0.001,"), std::string::npos) << rows[1];
  EXPECT_EQ(load_model(p("mc")).arch.config.channels, 8u);

  {
    std::ofstream f(p("bad.json"));
    f << R"({"no_such_key": 1})";
  }
  EXPECT_EQ(run({"train", "--dataset", p("ds"), "--config", p("bad.json"), "--out", p("x")}).code,
            cli::kExitUsage);
  EXPECT_EQ(run({"retrieve", "--sim", "spectral", "--config", p("bad.json")}).code, cli::kExitUsage);
}

TEST_F(Cli, Evaluate) {
  const auto r = run({"evaluate", "--model", p("m"), "--dataset", p("ds"), "--split", "val", "--baselines"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "method,split,loss");
  EXPECT_EQ(rows[1].rfind("dense_mode,val,", 0), 0u);
  EXPECT_EQ(rows[3].rfind("knn,val,", 0), 0u);
  EXPECT_EQ(rows[4].rfind("ridge,val,", 0), 0u);
}

TEST_F(Cli, PredictWithUncertainty) {
  const auto r = run({"predict", "--model", p("m"), "--params", "1,0.5,0.06", "--uncertainty", "--samples", "64"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 251u);
  EXPECT_EQ(rows[0], "index,mean,std,simulator");
  const auto plain = run({"predict", "--model", p("m"), "--dataset", p("ds"), "--row", "3"});
  ASSERT_EQ(plain.code, 0) << plain.err;
  EXPECT_EQ(lines(plain.out)[0], "index,value,simulator");
  EXPECT_EQ(run({"predict", "--model", p("m"), "--params", "1,0.5"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"predict", "--model", p("m")}).code, cli::kExitUsage);
}

TEST_F(Cli, RetrieveRowsPerTrialAndReproducible) {
  const std::vector<std::string> args{"retrieve", "--sim", "spectral", "--trials", "2", "--evals", "320",
                                      "--seed", "7", "--dataset", p("ds")};
  const auto a = run(args);
  ASSERT_EQ(a.code, 0) << a.err;
  const auto rows = lines(a.out);
  ASSERT_EQ(rows.size(), 1u + 2 * 3);
  EXPECT_EQ(rows[0], "trial,param,truth,retrieved,rel_error");
  EXPECT_EQ(rows[1].rfind("0,amplitude,", 0), 0u);
  EXPECT_EQ(rows[6].rfind("1,width,", 0), 0u);
  EXPECT_EQ(run(args).out, a.out);
  const auto emu = run({"retrieve", "--model", p("m"), "--trials", "1", "--evals", "64"});
  ASSERT_EQ(emu.code, 0) << emu.err;
}

TEST_F(Cli, PosteriorEmitsHistogramsAndPairs) {
  const auto r = run({"posterior", "--sim", "spectral", "--center", "1,0.5,0.06", "--walkers", "16",
                      "--samples", "800", "--bins", "5", "--band", "0.2", "--out", p("post")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto h = lines(slurp(p("post") + "/histograms.csv"));
  const auto g = lines(slurp(p("post") + "/pairs.csv"));
  EXPECT_EQ(h[0], "param,bin,lo,hi,count");
  EXPECT_EQ(h.size(), 1u + 3 * 5);
  EXPECT_EQ(g[0], "param_i,param_j,value_i,value_j,count");
  EXPECT_EQ(g.size(), 1u + 3 * 25);
  EXPECT_NE(slurp(p("post") + "/run.txt").find("seed 0"), std::string::npos);
  EXPECT_EQ(run({"posterior", "--sim", "spectral", "--center", "1,0.5,0.06"}).code, cli::kExitUsage);
}

TEST_F(Cli, Bench) {
  ASSERT_EQ(run({"train", "--dataset", p("ds"), "--epochs", "0", "--out", p("m64")}).code, 0);
  const auto r = run({"bench", "--model", p("m64"), "--batch", "1000", "--repeats", "2",
                      "--sim-delay-us", "5000"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::map<std::string, std::string> kv;
  for (const auto& l : lines(r.out)) {
    const auto c = l.find(',');
    kv[l.substr(0, c)] = l.substr(c + 1);
  }
  EXPECT_EQ(lines(r.out)[0], "key,value");
  EXPECT_FALSE(kv["hardware"].empty());
  EXPECT_LT(std::stod(kv["emulator_batch_seconds"]), 1.0);
  EXPECT_GE(std::stod(kv["speedup"]), 1.0);
}
