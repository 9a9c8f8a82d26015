#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace {

namespace fs = std::filesystem;

struct CliRun {
  int exit_code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  static std::string data(const std::string& name) { return std::string(CL_DATA_DIR) + "/" + name; }

  CliRun run(const std::string& args) {
    const std::string cmd = std::string("'") + CLAYER_EXE + "' " + args + " >'" + path("stdout") +
                            "' 2>'" + path("stderr") + "'";
    const int raw = std::system(cmd.c_str());
    CliRun r;
    r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(path("stdout"));
    r.err = slurp(path("stderr"));
    return r;
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  // The toy pipeline shared by several tests: synth data, layer, weld, head.
  void build_pipeline() {
    ASSERT_EQ(run("synth --classes 4 --count 80 --seed 1 --out " + path("weld.tsv")).exit_code, 0);
    ASSERT_EQ(run("synth --classes 4 --count 120 --seed 2 --out " + path("train.tsv")).exit_code, 0);
    ASSERT_EQ(run("build --encoder-config " + data("encoder.cfg") + " --slice 3 --concepts " +
                  data("concepts.tsv") + " --out " + path("layer.clayer"))
                  .exit_code,
              0);
    const CliRun w = run("weld --encoder-config " + data("encoder.cfg") + " --layers " +
                      path("layer.clayer") + " --corpus " + path("weld.tsv.corpus.txt") +
                      " --weld-config " + data("weld.cfg") + " --epochs 3 --out " + path("welded.clmodel"));
    ASSERT_EQ(w.exit_code, 0) << w.err;
    const CliRun h = run("train-head --encoder-config " + data("encoder.cfg") + " --dataset " +
                      path("train.tsv") + " --out " + path("head.clhead"));
    ASSERT_EQ(h.exit_code, 0) << h.err;
  }

  fs::path dir_;
};

TEST_F(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run("").exit_code, 2);
  EXPECT_EQ(run("frobnicate").exit_code, 2);
  EXPECT_EQ(run("build --slice 1").exit_code, 2);
  const CliRun r = run("build --encoder-config " + data("encoder.cfg") + " --slice 9 --concepts " +
                    data("concepts.tsv") + " --out " + path("x.clayer"));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("slice_index"), std::string::npos) << r.err;
}

TEST_F(Cli, DataErrorsExitWithThree) {
  const CliRun r = run("build --encoder-config " + path("missing.cfg") + " --slice 1 --concepts " +
                    data("concepts.tsv") + " --out " + path("x.clayer"));
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("error: io"), std::string::npos) << r.err;
}

TEST_F(Cli, SearchWritesListManifestAndRunRecord) {
  ASSERT_EQ(run("synth --count 40 --out " + path("c.tsv")).exit_code, 0);
  const CliRun r = run("search --ontology " + data("ontology.tsv") + " --corpus " + path("c.tsv.corpus.txt") +
                    " --encoder-config " + data("encoder.cfg") +
                    " --slice 2 --target-size 6 --thr 0.2 --thr-step 0.1 --out " + path("found.txt"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const std::string list = slurp(path("found.txt"));
  EXPECT_EQ(std::count(list.begin(), list.end(), '\n'), 6);
  EXPECT_EQ(list.rfind("thing\n", 0), 0u);
  const auto manifest = nlohmann::json::parse(slurp(path("found.txt.manifest.json")));
  EXPECT_EQ(manifest["target_size"], 6);
  const auto run_record = nlohmann::json::parse(slurp(path("found.txt.run.json")));
  EXPECT_EQ(run_record["subcommand"], "search");
  EXPECT_EQ(run_record["seed"], 0);

  const CliRun exhausted = run("search --ontology " + data("ontology.tsv") + " --corpus " +
                            path("c.tsv.corpus.txt") + " --encoder-config " + data("encoder.cfg") +
                            " --slice 2 --target-size 99 --thr 0.2 --thr-step 0.1 --out " + path("f2.txt"));
  EXPECT_EQ(exhausted.exit_code, 3);
  EXPECT_NE(exhausted.err.find("exhausted"), std::string::npos) << exhausted.err;
}

TEST_F(Cli, FullPipelineProducesArtifactsAndReports) {
  build_pipeline();
  EXPECT_TRUE(fs::exists(path("welded.clmodel.bin")));
  EXPECT_TRUE(fs::exists(path("welded.clmodel.report.tsv")));

  const CliRun e = run("eval --model " + path("welded.clmodel") + " --head " + path("head.clhead") +
                    " --dataset " + path("train.tsv") + " --reference-encoder-config " +
                    data("encoder.cfg") + " --out " + path("eval.txt"));
  ASSERT_EQ(e.exit_code, 0) << e.err;
  const auto report = nlohmann::json::parse(slurp(path("eval.txt.json")));
  EXPECT_EQ(report["count"], 120);
  EXPECT_TRUE(report.contains("agreement"));
  EXPECT_NE(slurp(path("eval.txt")).find("accuracy="), std::string::npos);

  const CliRun p = run("project --model " + path("welded.clmodel") + " --text 'goal league match' --k 3");
  ASSERT_EQ(p.exit_code, 0) << p.err;
  EXPECT_EQ(std::count(p.out.begin(), p.out.end(), '\n'), 3);

  const CliRun c0 = run("classify --model " + path("welded.clmodel") + " --head " + path("head.clhead") +
                     " --text 'goal league match'");
  ASSERT_EQ(c0.exit_code, 0) << c0.err;
  EXPECT_NE(c0.out.find("label="), std::string::npos);
  const CliRun c1 = run("classify --model " + path("welded.clmodel") + " --head " + path("head.clhead") +
                     " --text 'goal league match' --intervene sport=1 --intervene business=1");
  ASSERT_EQ(c1.exit_code, 0) << c1.err;
  EXPECT_EQ(c0.out, c1.out);
  const CliRun bad = run("classify --model " + path("welded.clmodel") + " --head " + path("head.clhead") +
                      " --text x --intervene weather=0");
  EXPECT_EQ(bad.exit_code, 3);
  EXPECT_NE(bad.err.find("unknown_concept"), std::string::npos) << bad.err;
  const CliRun malformed = run("classify --model " + path("welded.clmodel") + " --head " + path("head.clhead") +
                            " --text x --intervene sport");
  EXPECT_EQ(malformed.exit_code, 2);
}

TEST_F(Cli, DeeperLayerOnWeldedModelAndOrdering) {
  build_pipeline();
  {
    std::ofstream f(path("deep.tsv"));
    f << "sport_deep\tfootball goal league\nmoney_deep\tmarket profit bank\n";
  }
  const CliRun shallow = run("build --model " + path("welded.clmodel") + " --slice 2 --concepts " +
                          path("deep.tsv") + " --out " + path("bad.clayer"));
  EXPECT_EQ(shallow.exit_code, 2);
  EXPECT_NE(shallow.err.find("slice_ordering"), std::string::npos) << shallow.err;
}

}  // namespace
