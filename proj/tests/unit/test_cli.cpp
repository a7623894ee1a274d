#include <nnhisd/surrogate/checkpoint.hpp>
#include <nnhisd/surrogate/dataset.hpp>

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / "nnhisd_cli_tests" / info->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  [[nodiscard]] std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Runs the CLI and returns its exit status; stdout/stderr go to a log in the test directory.
  int run(const std::string& args) const {
    const std::string cmd = std::string(NNHISD_CLI_PATH) + " " + args + " >>" + path("log.txt") + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }

  static std::string slurp(const std::string& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }

  static json load(const std::string& p) { return json::parse(slurp(p)); }

  static int lines(const std::string& p) {
    std::ifstream is(p);
    std::string l;
    int n = 0;
    while (std::getline(is, l)) ++n;
    return n;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenDataGridRowMajor) {
  ASSERT_EQ(run("gen-data --potential toy2d --sampling grid --n 3 --region '0,1;0,1' --out " + path("g.csv")), 0);
  std::ifstream is(path("g.csv"));
  const auto ds = nnhisd::surrogate::read_dataset_csv(is);
  ASSERT_EQ(ds.size(), 9);
  EXPECT_EQ(ds.points(1, 0), 0.0);
  EXPECT_EQ(ds.points(1, 1), 0.5);
  EXPECT_EQ(ds.points(8, 0), 1.0);
  EXPECT_EQ(slurp(path("g.csv")).substr(0, slurp(path("g.csv")).find('\n')), "x_1,x_2,E");
  EXPECT_TRUE(fs::exists(path("g.csv.manifest.json")));
}

TEST_F(Cli, GenDataDeterministic) {
  const std::string common = "gen-data --potential toy2d --n 5000 --seed 7 --noise-ratio 0.3 --out ";
  ASSERT_EQ(run(common + path("a.csv")), 0);
  ASSERT_EQ(run(common + path("b.csv")), 0);
  EXPECT_EQ(lines(path("a.csv")), 5001);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  ASSERT_EQ(run("gen-data --potential toy2d --n 5000 --seed 8 --out " + path("c.csv")), 0);
  EXPECT_NE(slurp(path("a.csv")), slurp(path("c.csv")));
}

TEST_F(Cli, GenDataParametricToy3D) {
  ASSERT_EQ(run("gen-data --potential toy3d --alpha 3,7,10 --n 4000 --seed 1 --out " + path("p.csv")), 0);
  std::ifstream is(path("p.csv"));
  const auto ds = nnhisd::surrogate::read_dataset_csv(is);
  ASSERT_EQ(ds.size(), 40000);
  ASSERT_TRUE(ds.parametric());
  EXPECT_EQ((*ds.alpha)[0], 3.0);
  EXPECT_EQ((*ds.alpha)[39999], 7.0);
  EXPECT_NEAR((*ds.alpha)[4000], 3.0 + 4.0 / 9.0, 1e-15);
}

TEST_F(Cli, GenDataGradientColumns) {
  ASSERT_EQ(run("gen-data --potential mb --n 100 --gradient-fraction 0.15 --out " + path("m.csv")), 0);
  std::ifstream is(path("m.csv"));
  const auto ds = nnhisd::surrogate::read_dataset_csv(is);
  EXPECT_TRUE(ds.has_gradients());
  EXPECT_EQ(ds.gradient_rows(), 15);
}

TEST_F(Cli, GenDataErrors) {
  EXPECT_EQ(run("gen-data --potential toy2d --n 0 --out " + path("x.csv")), 2);
  EXPECT_EQ(run("gen-data --potential toy2d --n 10 --region '0,1' --out " + path("x.csv")), 2);
  EXPECT_EQ(run("gen-data --potential nope --n 10 --out " + path("x.csv")), 2);
  EXPECT_NE(run("gen-data --potential toy2d --n 10 --bogus 1 --out " + path("x.csv")), 0);
}

TEST_F(Cli, TrainZeroEpochsWritesInitialization) {
  ASSERT_EQ(run("gen-data --potential toy2d --n 50 --out " + path("d.csv")), 0);
  ASSERT_EQ(run("train --data " + path("d.csv") + " --hidden 8,8 --epochs 0 --batch-size 10 --seed 3 --out " +
                path("m.json")),
            0);
  const auto m = nnhisd::surrogate::load_checkpoint(path("m.json"));
  const nnhisd::surrogate::MlpSurrogate init({2, 8, 8, 1}, false, nnhisd::derive_seed(3, nnhisd::streams::init));
  for (std::size_t l = 0; l < init.layers().size(); ++l) {
    EXPECT_EQ(m.layers()[l].w, init.layers()[l].w);
    EXPECT_EQ(m.layers()[l].b, init.layers()[l].b);
  }
  EXPECT_EQ(lines(path("m.json.history.csv")), 1);
}

TEST_F(Cli, TrainResumeAppendsHistory) {
  ASSERT_EQ(run("gen-data --potential mb --n 200 --gradient-fraction 0.15 --out " + path("d.csv")), 0);
  const std::string base = "train --data " + path("d.csv") + " --hidden 8 --batch-size 50 ";
  ASSERT_EQ(run(base + "--epochs 5 --out " + path("m.json")), 0);
  EXPECT_EQ(lines(path("m.json.history.csv")), 6);
  ASSERT_EQ(run(base + "--epochs 3 --grad-weight 0.5 --resume " + path("m.json") + " --out " + path("m.json")), 0);
  EXPECT_EQ(lines(path("m.json.history.csv")), 9);
  EXPECT_EQ(load(path("m.json"))["metadata"]["epochs_trained"], 8);
  const std::string hist = slurp(path("m.json.history.csv"));
  EXPECT_NE(hist.find("\n7,"), std::string::npos);
  // Resuming into a new file carries the history along.
  ASSERT_EQ(run(base + "--epochs 2 --resume " + path("m.json") + " --out " + path("n.json")), 0);
  EXPECT_EQ(lines(path("n.json.history.csv")), 11);
}

TEST_F(Cli, TrainGradientWeightWithoutLabelsFails) {
  ASSERT_EQ(run("gen-data --potential toy2d --n 50 --out " + path("d.csv")), 0);
  EXPECT_EQ(run("train --data " + path("d.csv") + " --epochs 1 --batch-size 10 --grad-weight 1 --out " +
                path("m.json")),
            2);
}

TEST_F(Cli, TrainConfigFileAndUnknownKeys) {
  ASSERT_EQ(run("gen-data --potential toy2d --n 50 --out " + path("d.csv")), 0);
  std::ofstream(path("good.json")) << R"({"hidden": [4], "epochs": 2, "batch_size": 25, "seed": 5})";
  std::ofstream(path("bad.json")) << R"({"hidden": [4], "epochs": 2, "batchsize": 25})";
  ASSERT_EQ(run("train --data " + path("d.csv") + " --config " + path("good.json") + " --out " + path("m.json")), 0);
  EXPECT_EQ(load(path("m.json"))["widths"], json::array({2, 4, 1}));
  EXPECT_EQ(run("train --data " + path("d.csv") + " --config " + path("bad.json") + " --out " + path("m.json")), 2);
  EXPECT_NE(slurp(path("log.txt")).find("batchsize"), std::string::npos);
}

TEST_F(Cli, SearchToy2D) {
  ASSERT_EQ(run("search --oracle toy2d --x0 0.7,0.7 --beta 0.05 --trajectory " + path("t.csv") + " --out " +
                path("r.json")),
            0);
  const auto r = load(path("r.json"));
  EXPECT_TRUE(r["converged"].get<bool>());
  EXPECT_EQ(r["index"], 1);
  EXPECT_NEAR(r["x"][0].get<double>(), 1.2842, 1e-3);
  EXPECT_NEAR(r["x"][1].get<double>(), 3.4484, 1e-3);
  EXPECT_EQ(lines(path("t.csv")), r["iters"].get<int>() + 2);
}

TEST_F(Cli, SearchZeroIterations) {
  ASSERT_EQ(run("search --oracle toy2d --x0 0.7,0.7 --max-iters 0 --out " + path("r.json")), 0);
  const auto r = load(path("r.json"));
  EXPECT_FALSE(r["converged"].get<bool>());
  EXPECT_EQ(r["x"], json::array({0.7, 0.7}));
}

TEST_F(Cli, SearchDivergenceIsReported) {
  ASSERT_EQ(run("search --oracle quadratic:-1,1 --k 0 --beta 0.5 --x0 0.1,0.1 --out " + path("r.json")), 0);
  const auto r = load(path("r.json"));
  EXPECT_FALSE(r["converged"].get<bool>());
  EXPECT_TRUE(r["diverged"].get<bool>());
}

TEST_F(Cli, SearchErrors) {
  std::ofstream(path("bad.json")) << R"({"beta": 0.1, "stepsize": 2})";
  EXPECT_EQ(run("search --oracle toy2d --x0 0.7,0.7 --config " + path("bad.json") + " --out " + path("r.json")), 2);
  EXPECT_EQ(run("search --oracle toy2d --x0 0.7,0.7,1 --out " + path("r.json")), 2);
  EXPECT_EQ(run("search --oracle toy2d --x0 0.7,0.7 --scheme adam --out " + path("r.json")), 2);
}

TEST_F(Cli, SearchOnCheckpoint) {
  ASSERT_EQ(run("gen-data --potential quadratic:-1,2 --n 400 --region '-1,1;-1,1' --out " + path("d.csv")), 0);
  ASSERT_EQ(run("train --data " + path("d.csv") + " --hidden 16 --epochs 300 --batch-size 100 --out " +
                path("m.json")),
            0);
  ASSERT_EQ(run("search --oracle " + path("m.json") + " --x0 0.2,0.2 --hvp exact --beta 0.1 --tol 1e-5 --out " +
                path("r.json")),
            0);
  const auto r = load(path("r.json"));
  EXPECT_TRUE(r["converged"].get<bool>());
  EXPECT_EQ(r["index"], 1);
  EXPECT_LT(std::abs(r["x"][0].get<double>()), 0.1);
  EXPECT_LT(std::abs(r["x"][1].get<double>()), 0.1);
}

TEST_F(Cli, LandscapeToy3D) {
  ASSERT_EQ(run("landscape --oracle toy3d:6 --seed-point 2.9,2.9,1.2 --seed-index 2 --out " + path("l")), 0);
  const auto g = load(path("l.json"));
  EXPECT_EQ(g["nodes"].size(), 7u);
  EXPECT_TRUE(fs::exists(path("l.dot")));
  const auto v = load(path("l.verify.json"));
  ASSERT_EQ(v.size(), 7u);
  for (const auto& e : v) EXPECT_TRUE(e["ok"].get<bool>());
  EXPECT_TRUE(fs::exists(path("l.manifest.json")));
}

TEST_F(Cli, LandscapeConvexQuadratic) {
  ASSERT_EQ(run("landscape --oracle quadratic:1,2 --seed-point 0.5,0.5 --max-index 0 --out " + path("l")), 0);
  EXPECT_EQ(load(path("l.json"))["nodes"].size(), 1u);
}

TEST_F(Cli, ManifestAndReplayReproduceOutputs) {
  ASSERT_EQ(run("gen-data --potential mb --n 300 --seed 4 --noise-ratio 0.5 --out " + path("d.csv")), 0);
  ASSERT_EQ(run("train --data " + path("d.csv") + " --hidden 8 --epochs 4 --batch-size 50 --seed 2 --out " +
                path("m.json")),
            0);
  ASSERT_EQ(run("search --oracle " + path("m.json") + " --x0 -0.8,0.6 --max-iters 50 --out " + path("r.json")), 0);
  const auto m = load(path("m.json.manifest.json"));
  EXPECT_EQ(m["command"], "train");
  EXPECT_EQ(m["seed"], 2);
  EXPECT_TRUE(m.contains("version"));
  EXPECT_TRUE(m["timings"].contains("train"));
  EXPECT_EQ(m["outputs"]["checkpoint"], path("m.json"));

  const std::string d0 = slurp(path("d.csv"));
  const std::string m0 = slurp(path("m.json"));
  const std::string r0 = slurp(path("r.json"));
  fs::remove(path("d.csv"));
  fs::remove(path("m.json"));
  fs::remove(path("r.json"));
  ASSERT_EQ(run("replay " + path("d.csv.manifest.json")), 0);
  ASSERT_EQ(run("replay " + path("m.json.manifest.json")), 0);
  ASSERT_EQ(run("replay " + path("r.json.manifest.json")), 0);
  EXPECT_EQ(slurp(path("d.csv")), d0);
  EXPECT_EQ(slurp(path("m.json")), m0);
  EXPECT_EQ(slurp(path("r.json")), r0);
}

TEST_F(Cli, BenchEigensolverComparison) {
  ASSERT_EQ(run("bench --suite eigsol_compare --out " + path("b")), 0);
  EXPECT_GT(lines(path("b/eigsol_compare.csv")), 1);
  EXPECT_TRUE(fs::exists(path("b/eigsol_compare.manifest.json")));
  EXPECT_NE(run("bench --suite nope --out " + path("b")), 0);
}

TEST_F(Cli, HelpAndVersion) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_NE(run(""), 0);
}
