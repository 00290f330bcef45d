#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "panel_msfe/config.hpp"
#include "support.hpp"

using namespace pmt;
namespace fs = std::filesystem;

namespace {

struct RunOutput {
  int status = -1;
  std::string out;
  std::string err;
};

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("panel_msfe_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

RunOutput run_cli(const std::string& args, const TempDir& dir) {
  const std::string out = dir.file("stdout.txt"), err = dir.file("stderr.txt");
  const std::string cmd = std::string(PANEL_MSFE_CLI) + " " + args + " >" + out + " 2>" + err;
  const int raw = std::system(cmd.c_str());
  RunOutput r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

Panel load(const std::string& panel_csv, const std::string& predict_csv) {
  std::istringstream p(panel_csv), q(predict_csv);
  return load_panel(p, q);
}

}  // namespace

TEST(ParseConfig, MinimalSimulateUsesDefaults) {
  const RunConfig cfg = parse_config("command: simulate\nscenario:\n  name: mine\n");
  const ScenarioConfig& c = cfg.study.base;
  EXPECT_EQ(cfg.command, Command::kSimulate);
  EXPECT_EQ(c.name, "mine");
  EXPECT_EQ(c.k, 5);
  EXPECT_EQ(c.reps, 5000);
  EXPECT_EQ(c.alpha, 0.05);
  EXPECT_EQ(c.sigma_spec, SigmaSpec::banded(0));
  ASSERT_EQ(cfg.study.cells.size(), 1u);
  EXPECT_EQ(cfg.study.cells[0], std::make_pair(c.n, c.t_len));
}

TEST(ParseConfig, TableNameSeedsScenario) {
  const RunConfig cfg = parse_config("command: simulate\nscenario:\n  name: T6\n  reps: 10\n");
  EXPECT_EQ(cfg.study.cells, find_table("T6").grid.cells);
  EXPECT_TRUE(cfg.study.base.fixed_effects);
  EXPECT_EQ(cfg.study.base.reps, 10);
}

TEST(ParseConfig, PhiOutOfRange) {
  try {
    parse_config("command: simulate\nscenario:\n  name: x\n  errors: {design: ar1, phi: 1.2}\n");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("phi out of (-1,1)"), std::string::npos);
  }
}

TEST(ParseConfig, ErrorsCarryLineAndField) {
  try {
    parse_config("command: simulate\nscenario:\n  name: x\n  n: many\n");
    FAIL();
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'n'"), std::string::npos) << msg;
  }
  EXPECT_THROW(parse_config("command: simulate\nscenario: [unclosed\n"), ParseError);
  EXPECT_THROW(parse_config("command: launch\n"), ValidationError);
  EXPECT_THROW(parse_config("command: table\ntable: {id: T42}\n"), UnknownTable);
}

TEST(ParseConfig, RoundTrip) {
  const std::vector<std::string> texts = {
      "command: simulate\nscenario:\n  name: T2\n",
      "command: simulate\nthreads: 3\noutput: out.csv\nscenario:\n  name: custom\n  n: 40\n  t_len: 12\n"
      "  k: 3\n  reps: 17\n  alpha: 0.1\n  seed: 12345678901\n  fixed_effects: true\n"
      "  lambda_sign: displayed\n  slopes: {design: random_normal, mean: 0.5, sd: 0.25}\n"
      "  errors: {design: hetero_ar1, phi: -0.4}\n"
      "  sigma: {estimator: hetero, scale_component: 2, inner: {estimator: hac, bandwidth: 3}, "
      "demean_adjust: true}\n  kernel: {shape: parzen, b_prime: 2.5}\n  grid: [[40, 12], [80, 24]]\n",
      "command: analyze\nanalyze:\n  panel: a.csv\n  predict: b.csv\n"
      "  columns: {id: firm, time: year, y: sales, x: [p, q]}\n  sigma: {estimator: ar1}\n"
      "  alpha: 0.1\n  fixed_effects: true\n  strict_paper_ci: true\n",
      "command: table\ntable: {id: A13, reps: 50, seed: 9}\n",
  };
  for (const auto& text : texts) {
    const RunConfig a = parse_config(text);
    const std::string emitted = emit_config(a);
    const RunConfig b = parse_config(emitted);
    EXPECT_TRUE(a == b) << emitted;
  }
}

TEST(LoadPanel, HandFileShapes) {
  const Panel p = load("id,t,y,x1\na,1,1.0,0.5\na,2,2.0,1.5\na,3,2.5,1.0\n"
                       "b,1,0.3,2.0\nb,2,0.1,0.2\nb,3,1.1,0.9\n",
                       "id,x1\nb,3.0\na,4.0\n");
  EXPECT_EQ(p.n(), 2);
  EXPECT_EQ(p.t_len(), 3);
  EXPECT_EQ(p.k(), 1);
  EXPECT_EQ(p.y(1, 0), 2.0);
  EXPECT_EQ(p.x[1](0, 0), 2.0);
  EXPECT_EQ(p.x_next(0, 0), 4.0);
  EXPECT_EQ(p.x_next(0, 1), 3.0);
}

TEST(LoadPanel, RowsMayBeShuffled) {
  const Panel p = load("id,t,y,x1\n2,2,5,1\n1,1,1,2\n2,1,4,3\n1,2,2,4\n", "id,x1\n1,0\n2,0\n");
  EXPECT_EQ(p.y(0, 0), 4.0);  // individual "2" appears first
  EXPECT_EQ(p.y(1, 0), 5.0);
  EXPECT_EQ(p.y(0, 1), 1.0);
}

TEST(LoadPanel, Errors) {
  EXPECT_THROW(load("id,t,y,x1\na,1,1,1\na,2,1,2\na,3,1,3\nb,1,1,1\nb,3,1,2\n", "id,x1\na,1\nb,1\n"),
               UnbalancedPanel);
  EXPECT_THROW(load("id,t,y,x1\na,1,1,1\na,2,1,2\n", "id,x1\nz,1\n"), MissingPrediction);
  try {
    load("id,t,y,x1\na,1,1,1\na,2,oops,2\n", "id,x1\na,1\n");
    FAIL();
  } catch (const NonNumericCell& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'y'"), std::string::npos) << msg;
  }
  EXPECT_THROW(load("id,t,y,x1\na,1,1\n", "id,x1\na,1\n"), ParseError);
  EXPECT_THROW(load("id,t,y\na,1,1\n", "id\na\n"), ParseError);
}

TEST(LoadPanel, WriteReadRoundTrip) {
  std::mt19937_64 rng(81);
  const Panel p = random_panel(rng, 7, 11, 3);
  std::ostringstream a, b;
  write_panel(p, a, b);
  const Panel q = load(a.str(), b.str());
  ASSERT_EQ(q.n(), 7);
  EXPECT_LE((q.y - p.y).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((q.x_next - p.x_next).cwiseAbs().maxCoeff(), 1e-12);
  for (Index i = 0; i < 7; ++i) EXPECT_LE((q.x[i] - p.x[i]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Cli, AnalyzeHomogeneousPanelsPreferPooling) {
  TempDir dir;
  ScenarioConfig cfg;
  cfg.n = 100;
  cfg.t_len = 20;
  int pooled = 0;
  for (std::uint32_t seed = 0; seed < 50; ++seed) {
    PhiloxStream s(1000 + seed);
    write_panel(simulate_panel(cfg, s).panel, dir.file("p.csv"), dir.file("q.csv"));
    const RunOutput r = run_cli("analyze --panel " + dir.file("p.csv") + " --predict " +
                                    dir.file("q.csv") + " --out " + dir.file("r.csv"),
                                dir);
    ASSERT_EQ(r.status, 0) << r.err;
    const auto at = r.out.find("decision: ");
    ASSERT_NE(at, std::string::npos) << r.out;
    const std::string decision = r.out.substr(at + 10, r.out.find('\n', at) - at - 10);
    if (decision == "pooled preferred") ++pooled;
    EXPECT_NE(slurp(dir.file("r.csv")).find("," + decision + ","), std::string::npos);
  }
  EXPECT_GE(pooled, 45);
}

TEST(Cli, AnalyzeSingleIndividual) {
  TempDir dir;
  spit(dir.file("p.csv"), "id,t,y,x1\nA,1,1.0,0.3\nA,2,2.1,1.2\nA,3,2.9,2.2\nA,4,4.2,2.9\n");
  spit(dir.file("q.csv"), "id,x1\nA,1.5\n");
  const RunOutput r =
      run_cli("analyze --panel " + dir.file("p.csv") + " --predict " + dir.file("q.csv"), dir);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("E_hat = 0 "), std::string::npos) << r.out;
  EXPECT_TRUE(r.out.find("decision: inconclusive") != std::string::npos ||
              r.out.find("decision: pooled preferred") != std::string::npos)
      << r.out;
}

TEST(Cli, MalformedCsvReportsNonNumericCell) {
  TempDir dir;
  spit(dir.file("p.csv"), "id,t,y,x1\nA,1,1.0,0.3\nA,2,x,1.2\nA,3,2.9,2.2\n");
  spit(dir.file("q.csv"), "id,x1\nA,1.5\n");
  const RunOutput r =
      run_cli("analyze --panel " + dir.file("p.csv") + " --predict " + dir.file("q.csv"), dir);
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(r.err.rfind("error: NonNumericCell: ", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST(Cli, ErrorPathsExitNonzeroWithOneLine) {
  TempDir dir;
  for (const std::string& args : std::vector<std::string>{"table --id T99", "", "simulate", "analyze --panel nope.csv --predict nope.csv",
                                 "table --id T1 --reps 0", "simulate --config " + dir.file("missing.yaml")}) {
    const RunOutput r = run_cli(args, dir);
    EXPECT_EQ(r.status, 2) << args;
    EXPECT_EQ(r.err.rfind("error: ", 0), 0u) << args << ": " << r.err;
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << args << ": " << r.err;
  }
  EXPECT_NE(run_cli("table --id T99", dir).err.find("UnknownTable"), std::string::npos);
}

TEST(Cli, TableOneGridStructure) {
  TempDir dir;
  const RunOutput r = run_cli("table --id T1 --reps 200 --out " + dir.file("t1.csv"), dir);
  ASSERT_EQ(r.status, 0) << r.err;
  std::istringstream in(slurp(dir.file("t1.csv")));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kCsvHeader);
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8);
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "200");
  }
  EXPECT_EQ(rows, 16);
  EXPECT_EQ(r.out, slurp(dir.file("t1.csv")));
}

TEST(Cli, SimulateIsDeterministic) {
  TempDir dir;
  spit(dir.file("c.yaml"),
       "command: simulate\nscenario:\n  name: T4\n  reps: 30\n  grid: [[20, 10], [40, 15]]\n");
  const RunOutput a = run_cli("simulate --config " + dir.file("c.yaml") + " --threads 1", dir);
  const RunOutput b = run_cli("simulate --config " + dir.file("c.yaml") + " --threads 2", dir);
  ASSERT_EQ(a.status, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  const RunOutput c = run_cli("simulate --config " + dir.file("c.yaml") + " --seed 5", dir);
  EXPECT_NE(a.out, c.out);
  const RunOutput text = run_cli("simulate --config " + dir.file("c.yaml") + " --format text", dir);
  EXPECT_NE(text.out.find("N=20"), std::string::npos);
}

TEST(Cli, TableConfigRunsThroughSimulate) {
  TempDir dir;
  spit(dir.file("t.yaml"), "command: table\ntable: {id: A13, reps: 5, seed: 3}\n");
  const RunOutput r = run_cli("simulate --config " + dir.file("t.yaml") + " --threads 1", dir);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("A13,500,60,"), std::string::npos) << r.out;
}
