#include <gtest/gtest.h>

#include <cyclegraph/dataset_io.hpp>
#include <cyclegraph/pipeline.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace cyclegraph;

namespace {

struct Run {
  int code = -1;
  std::string out;  // stdout + stderr
};

Run run(const std::string& args) {
  const char* exe = std::getenv("CYCLEGRAPH_CLI");
  Run r;
  if (!exe) return r;
  std::string cmd = std::string(exe) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  int st = pclose(p);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  os << s;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!std::getenv("CYCLEGRAPH_CLI")) GTEST_SKIP() << "CYCLEGRAPH_CLI not set";
    dir = fs::temp_directory_path() / ("cyclegraph_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    spit(dir / "quick.json", R"({
      // reduced resolution
      "grid": {"nodes_per_unit": 257},
      "forward": {"rho_eig_max": 120, "remainder_radius": 94.24777960769379, "remainder_points": 1001, "n_sigma": 24},
      "contour": {"nodes": 1024, "sigma_max": 94.24777960769379},
      "riesz": {"N": 32, "quad_points": 200},
      "loop": {"gl_pairs": 24},
      "inversion": {"refine_passes": 0},
      "perturbation": {"uniform_pairs": 0}
    })");
  }
  void TearDown() override {
    std::error_code ec;
    if (!dir.empty()) fs::remove_all(dir, ec);
  }
  std::string cfg() const { return "--config " + (dir / "quick.json").string(); }
  fs::path dir;
};

}  // namespace

TEST_F(Cli, DefaultsIsAValidConfig) {
  auto r = run("defaults");
  ASSERT_EQ(r.code, 0) << r.out;
  auto c = config_from_json(nlohmann::json::parse(r.out));
  EXPECT_EQ(to_json(c).dump(), to_json(RunConfig{}).dump());
}

TEST_F(Cli, ForwardIsDeterministic) {
  auto a = run("forward " + cfg() + " --out " + (dir / "a").string());
  auto b = run("forward " + cfg() + " --out " + (dir / "b").string());
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_EQ(slurp(dir / "a" / "dataset.txt"), slurp(dir / "b" / "dataset.txt"));
  EXPECT_TRUE(fs::exists(dir / "a" / "report.txt"));
  auto d = load_dataset((dir / "a" / "dataset.txt").string());
  EXPECT_FALSE(d.lambda_main.empty());
}

TEST_F(Cli, RandomSeedChangesPotentials) {
  spit(dir / "rand.json", R"({"potentials": {"kind": "random"}, "forward": {"rho_eig_max": 60, "remainder_points": 101,
      "remainder_radius": 30, "n_sigma": 40}})");
  auto c = "--config " + (dir / "rand.json").string();
  ASSERT_EQ(run("forward " + c + " --seed 1 --out " + (dir / "s1").string()).code, 0);
  ASSERT_EQ(run("forward " + c + " --seed 2 --out " + (dir / "s2").string()).code, 0);
  EXPECT_NE(slurp(dir / "s1" / "potentials.txt"), slurp(dir / "s2" / "potentials.txt"));
}

TEST_F(Cli, BadConfigIsReported) {
  spit(dir / "bad.json", R"({"geometry": {"m": 2}, "colour": "blue"})");
  auto r = run("forward --config " + (dir / "bad.json").string() + " --out " + dir.string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("colour"), std::string::npos) << r.out;
  auto e = run("forward " + cfg() + " --epsilon 1e-3,x --out " + dir.string());
  EXPECT_NE(e.code, 0);
}

TEST_F(Cli, InvertRoundTripAndTamperedInput) {
  ASSERT_EQ(run("forward " + cfg() + " --out " + dir.string()).code, 0);
  auto ok = run("invert " + (dir / "dataset.txt").string() + " " + cfg() + " --truth " +
                (dir / "potentials.txt").string() + " --out " + (dir / "inv").string());
  ASSERT_EQ(ok.code, 0) << ok.out;
  EXPECT_TRUE(fs::exists(dir / "inv" / "potentials_recovered.txt"));
  EXPECT_NE(ok.out.find("relative"), std::string::npos);

  // corrupt one number: the error names the field and the line
  auto text = slurp(dir / "dataset.txt");
  auto pos = text.find("\nmain ");
  ASSERT_NE(pos, std::string::npos);
  auto eol = text.find('\n', pos);
  auto bad = text.substr(0, eol + 1) + "not-a-number\n" + text.substr(eol + 1);
  spit(dir / "bad.txt", bad);
  auto r = run("invert " + (dir / "bad.txt").string() + " " + cfg() + " --out " + (dir / "inv2").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("line"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("main"), std::string::npos) << r.out;
}

TEST_F(Cli, PerturbAndSweepWriteTheirFiles) {
  auto p = run("perturb " + cfg() + " --epsilon 0.01 --out " + (dir / "p").string());
  ASSERT_EQ(p.code, 0) << p.out;
  EXPECT_TRUE(fs::exists(dir / "p" / "dataset_perturbed.txt"));
  EXPECT_TRUE(fs::exists(dir / "p" / "potentials_perturbed.txt"));

  auto s = run("stability-sweep " + cfg() + " --epsilon 1e-3,1e-2 --out " + (dir / "s").string());
  ASSERT_EQ(s.code, 0) << s.out;
  auto csv = slurp(dir / "s" / "sweep.csv");
  EXPECT_EQ(csv.rfind("epsilon,delta,err_q0", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(slurp(dir / "s" / "sweep.svg").find("<svg"), std::string::npos);
  EXPECT_NE(s.out.find("slope"), std::string::npos);
}

TEST_F(Cli, Selftest) {
  auto r = run("selftest " + cfg());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("selftest passed"), std::string::npos);
}
