#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "hardylab/cli.hpp"

using namespace hardylab;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("hardylab_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

// Mean-zero smooth bump on [-1, 1].
GridFunction odd_bump(const Grid& g) {
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    double x = g.coordinate(i);
    v[i] = -x * std::exp(-60.0 * x * x);
  }
  return GridFunction(g, std::move(v));
}

}  // namespace

TEST_F(CliTest, WeightsOfConstantWeight) {
  auto r = run({"weights", "--weight", "one", "--p", "2", "--depth", "8"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = Json::parse(r.out);
  EXPECT_EQ(j["schema_version"], kSchemaVersion);
  EXPECT_EQ(j["ap_char"].get<double>(), 1.0);
  EXPECT_FALSE(j["diverged"].get<bool>());
}

TEST_F(CliTest, NonIntegrableWeightExitsWithDivergence) {
  auto r = run({"weights", "--weight", "power:a=-1", "--p", "2", "--depth", "8"});
  EXPECT_EQ(r.code, 4);
  auto doc = Json::parse(r.out);
  EXPECT_TRUE(doc["diverged"].get<bool>());
  auto err = Json::parse(r.err);
  EXPECT_EQ(err["error"]["code"], 4);
}

TEST_F(CliTest, InvalidArgumentsExitWithTwo) {
  write_grid_file(path("f.grid"), odd_bump(Grid(1, 1.0, 256)));
  auto r = run({"validate", "--kind", "atom", "--p0", "1", "--in", path("f.grid"), "--ball", "0,0.5"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(Json::parse(r.err)["error"]["type"], "invalid_argument");
  EXPECT_TRUE(r.out.empty());

  EXPECT_EQ(run({"weights", "--weight", "one", "--unknown", "1"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"weights", "--weight", "power:b=1"}).code, 2);
  EXPECT_EQ(run({"operator", "--op", "riesz:1x", "--in", path("f.grid"), "--out", path("g.grid")}).code, 2);
  EXPECT_EQ(run({"operator", "--op", "hilbert", "--in", path("missing.grid"), "--out", path("g.grid")}).code, 2);
}

TEST_F(CliTest, HelpExitsCleanly) {
  auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("experiment"), std::string::npos);
}

TEST_F(CliTest, OperatorOutputRoundTrips) {
  Grid g(1, 1.0, 512);
  GridFunction f = odd_bump(g);
  write_grid_file(path("f.grid"), f);
  auto r = run({"operator", "--op", "hilbert", "--method", "quadrature", "--in", path("f.grid"), "--out",
                path("g.grid"), "--epsilon", "0.001"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto doc = Json::parse(r.out);
  EXPECT_TRUE(doc["epsilon_clipped"].get<bool>());
  EXPECT_EQ(doc["epsilon"].get<double>(), g.spacing());

  GridFunction back = read_grid_file(path("g.grid"));
  OperatorSpec spec = OperatorSpec::hilbert(OperatorMethod::quadrature);
  spec.epsilon = 0.001;
  GridFunction direct = apply_operator(f, spec).values;
  ASSERT_EQ(back.grid(), g);
  EXPECT_EQ(back.values(), direct.values());

  write_grid_file(path("h.grid"), back);
  EXPECT_EQ(read_grid_file(path("h.grid")).values(), back.values());
}

TEST_F(CliTest, KernelFromOmegaFile) {
  Grid g(1, 1.0, 512);
  write_grid_file(path("f.grid"), odd_bump(g));
  write_text_file(path("omega.txt"), "-1\n1\n");
  ASSERT_EQ(run({"operator", "--op", "kernel:" + path("omega.txt"), "--method", "quadrature", "--in", path("f.grid"),
                 "--out", path("k.grid")})
                .code,
            0);
  ASSERT_EQ(run({"operator", "--op", "hilbert", "--method", "quadrature", "--in", path("f.grid"), "--out",
                 path("h.grid")})
                .code,
            0);
  GridFunction k = read_grid_file(path("k.grid")), h = read_grid_file(path("h.grid"));
  double scale = 0, diff = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    scale = std::max(scale, std::abs(h[i]));
    diff = std::max(diff, std::abs(k[i] - M_PI * h[i]));
  }
  EXPECT_LE(diff, 1e-12 * M_PI * scale);

  write_text_file(path("bad.txt"), "1\n1\n");
  EXPECT_EQ(run({"operator", "--op", "kernel:" + path("bad.txt"), "--method", "quadrature", "--in", path("f.grid"),
                 "--out", path("k.grid")})
                .code,
            2);
}

TEST_F(CliTest, ValidateGeneratedAtom) {
  Grid g(1, 1.0, 1024);
  AtomParams a;
  a.p = 2.0 / 3.0;
  a.p0 = 4.0;
  a.d = 1;
  a.weight = WeightSpec::power(-0.5);
  a.ball = Ball(0.1, 0.2);
  write_grid_file(path("a.grid"), make_random_atom(g, a, 42));
  auto r = run({"validate", "--kind", "atom", "--in", path("a.grid"), "--weight", "power:a=-0.5", "--p",
                "0.66666666666666663", "--p0", "4", "--d", "1", "--ball", "0.1,0.2", "--out", path("v.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  auto doc = Json::parse(read_text_file(path("v.json")));
  EXPECT_TRUE(doc["report"]["pass"].get<bool>());
  EXPECT_EQ(doc["params"]["weight"], "power:a=-0.5");

  auto m = run({"validate", "--kind", "molecule", "--in", path("a.grid"), "--weight", "power:a=-0.5", "--p",
                "0.66666666666666663", "--p0", "4", "--d", "1", "--ball", "0.1,0.2"});
  ASSERT_EQ(m.code, 0) << m.err;
  EXPECT_TRUE(Json::parse(m.out)["report"]["pass"].get<bool>());
}

TEST_F(CliTest, HardyNormMatchesLibrary) {
  Grid g(1, 1.0, 512);
  GridFunction f = odd_bump(g);
  write_grid_file(path("f.grid"), f);
  auto r = run({"maximal", "--op", "hardy-norm", "--in", path("f.grid"), "--weight", "power:a=-0.5", "--p", "0.5"});
  ASSERT_EQ(r.code, 0) << r.err;
  double direct = hardy_norm(f, WeightSpec::power(-0.5), 0.5).value;
  EXPECT_EQ(Json::parse(r.out)["hardy_norm"].get<double>(), direct);
  EXPECT_EQ(run({"maximal", "--op", "hardy-norm", "--in", path("f.grid")}).code, 2);
  EXPECT_EQ(run({"maximal", "--op", "frac", "--alpha", "0.5", "--in", path("f.grid"), "--grid-out", path("m.grid")}).code,
            0);
  EXPECT_EQ(read_grid_file(path("m.grid")).values(), fractional_maximal(f, 0.5).values());
}

TEST_F(CliTest, DecompositionWindowsReconstructInput) {
  Grid g(1, 1.0, 2048);
  GridFunction f = odd_bump(g);
  write_grid_file(path("f.grid"), f);
  auto r = run({"decompose", "--in", path("f.grid"), "--p", "1", "--p0", "2", "--d", "0", "--out", path("d.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto doc = Json::parse(read_text_file(path("d.json")));
  const auto& dec = doc["decomposition"];
  EXPECT_EQ(dec["grid_header"], grid_header(g));
  ASSERT_FALSE(dec["entries"].empty());
  std::vector<double> sum(g.size(), 0.0);
  for (const auto& e : dec["entries"]) {
    double lambda = e["lambda"].get<double>();
    auto first = e["first_cell"].get<std::size_t>();
    const auto& v = e["values"];
    for (std::size_t t = 0; t < v.size(); ++t) sum[first + t] += lambda * v[t].get<double>();
  }
  double num = 0, den = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    num += (sum[i] - f[i]) * (sum[i] - f[i]);
    den += f[i] * f[i];
  }
  EXPECT_LE(std::sqrt(num / den), 1e-6);
  EXPECT_TRUE(dec["reconstruction_ok"].get<bool>());
}

TEST_F(CliTest, ExperimentIsSeedDeterministic) {
  Json cfg = {{"weight", "one"}, {"p", 1.0}, {"p0", 2.0}, {"d", 0}, {"trials", 3}, {"grid", {{"n", 1}, {"N", 512}}}};
  write_text_file(path("cfg.json"), cfg.dump());
  auto a = run({"experiment", "--kind", "atom_uniform_bound", "--config", path("cfg.json"), "--seed", "17", "--plot-csv",
                path("plot.csv")});
  auto b = run({"experiment", "--kind", "atom_uniform_bound", "--config", path("cfg.json"), "--seed", "17"});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  auto ja = Json::parse(a.out), jb = Json::parse(b.out);
  ja["report"].erase("wall_seconds");
  jb["report"].erase("wall_seconds");
  EXPECT_EQ(ja, jb);
  EXPECT_EQ(ja["report"]["config"]["seed"], 17u);
  EXPECT_EQ(ja["report"]["trials"].size(), 3u);

  std::string csv = read_text_file(path("plot.csv"));
  EXPECT_EQ(csv.rfind("trial,statistic,grid_N\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  EXPECT_NE(csv.find(",512\n"), std::string::npos);
  EXPECT_NE(csv.find(",256\n"), std::string::npos);

  // The config echo is itself a valid config.
  write_text_file(path("echo.json"), ja["report"]["config"].dump());
  auto c = run({"experiment", "--kind", "atom_uniform_bound", "--config", path("echo.json")});
  ASSERT_EQ(c.code, 0) << c.err;
  auto jc = Json::parse(c.out);
  jc["report"].erase("wall_seconds");
  EXPECT_EQ(jc, ja);
}

TEST_F(CliTest, ExperimentExitCodes) {
  write_text_file(path("bad_key.json"), R"({"weight": "one", "trails": 3})");
  EXPECT_EQ(run({"experiment", "--kind", "atom_uniform_bound", "--config", path("bad_key.json")}).code, 2);
  write_text_file(path("kind.json"), R"({"kind": "molecular_synthesis"})");
  EXPECT_EQ(run({"experiment", "--kind", "atom_uniform_bound", "--config", path("kind.json")}).code, 2);
  write_text_file(path("broken.json"), "{");
  EXPECT_EQ(run({"experiment", "--kind", "atom_uniform_bound", "--config", path("broken.json")}).code, 2);
  EXPECT_EQ(run({"experiment", "--kind", "no_such_kind"}).code, 2);

  write_text_file(path("hyp.json"), R"({"weight": "power:a=1", "p": 0.5, "family_depth": 8, "index_cells": 256})");
  auto r = run({"experiment", "--kind", "index_inequalities", "--config", path("hyp.json")});
  EXPECT_EQ(r.code, 3);
  EXPECT_FALSE(Json::parse(r.out)["report"]["hypotheses_ok"].get<bool>());
  EXPECT_EQ(Json::parse(r.err)["error"]["type"], "hypothesis_not_satisfied");
}

TEST_F(CliTest, IndexExperimentMatchesGoldenReport) {
  std::string golden = std::string(HARDYLAB_SOURCE_DIR) + "/tests/golden/index_quarter";
  auto r = run({"experiment", "--kind", "index_inequalities", "--config", golden + ".config.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto got = Json::parse(r.out);
  got["report"].erase("wall_seconds");
  EXPECT_EQ(got, Json::parse(read_text_file(golden + ".report.json")));
}
