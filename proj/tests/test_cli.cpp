#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "common.hpp"

using namespace testing_support;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

/// Runs the CLI with `args`, capturing stdout; stderr is discarded.
Result cli(const std::string& args) {
  const std::string cmd = std::string(HMMCPD_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string model(const std::string& name) { return model_path(name); }

/// Data rows (lines not starting with '#'), header included.
std::vector<std::string> data_lines(const std::string& out) {
  std::vector<std::string> lines;
  std::istringstream is(out);
  for (std::string line; std::getline(is, line);)
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  return lines;
}

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string f; std::getline(is, f, sep);) out.push_back(f);
  return out;
}

}  // namespace

TEST(Cli, ValidateExitCodes) {
  EXPECT_EQ(cli("validate " + model("finite_case1.json")).code, 0);
  const std::string bad = ::testing::TempDir() + "hmmcpd_bad_model.json";
  std::ofstream(bad) << R"({"states": ["a"], "classes": [0]})";
  EXPECT_EQ(cli("validate " + bad).code, 2);
  EXPECT_EQ(cli("no-such-command").code, 2);
  EXPECT_EQ(cli("validate /no/such/file.json").code, 2);
}

TEST(Cli, LimitsTable) {
  const auto r = cli("limits " + model("example2_gaussian.json"));
  ASSERT_EQ(r.code, 0);
  const auto lines = data_lines(r.out);
  ASSERT_EQ(lines.size(), 5u);
  const auto header = split(lines[0]);
  const auto col = std::find(header.begin(), header.end(), "l") - header.begin();
  ASSERT_LT(static_cast<std::size_t>(col), header.size());
  const std::vector<std::array<double, 3>> expect{{1, 0, 0.2854}, {1, 2, 0.1250}, {2, 0, 0.0713}, {2, 1, 0.1104}};
  for (std::size_t k = 0; k < expect.size(); ++k) {
    const auto f = split(lines[k + 1]);
    EXPECT_EQ(std::stoi(f[0]), static_cast<int>(expect[k][0]));
    EXPECT_EQ(std::stoi(f[1]), static_cast<int>(expect[k][1]));
    EXPECT_NEAR(std::stod(f[static_cast<std::size_t>(col)]), expect[k][2], 5e-5);
  }
}

TEST(Cli, StochasticCommandsNeedSeed) {
  EXPECT_EQ(cli("evaluate " + model("finite_case1.json") + " --cbar 0.1 --strategy pi --A 0.1 --paths 10").code, 2);
}

TEST(Cli, EvaluateIsReproducible) {
  const std::string args = "evaluate " + model("finite_case1.json") + " --cbar 0.1 --strategy pi --A 0.1 --paths 500 --seed 17";
  const auto a = cli(args + " --threads 1");
  const auto b = cli(args + " --threads 3");
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(data_lines(a.out), data_lines(b.out));
  const auto c = cli("evaluate " + model("finite_case1.json") + " --cbar 0.1 --strategy pi --A 0.1 --paths 500 --seed 18");
  EXPECT_NE(data_lines(a.out), data_lines(c.out));
}

TEST(Cli, NumericalFailureExitCode) {
  EXPECT_EQ(cli("optimal " + model("finite_case1.json") + " --cbar 0.01 --max-iters 2").code, 3);
}

TEST(Cli, RunStrategyAndSigma) {
  const auto r = cli("run-strategy " + model("finite_case2.json") + " --costs " + model("finite_costs_c01.json") +
                     " --strategy llr --from-costs --seed 2");
  EXPECT_EQ(r.code, 0);
  EXPECT_FALSE(data_lines(r.out).empty());
  const auto s = cli("estimate-sigma " + model("example2_gaussian.json") + " --cbar 0.1 --method default --seed 1");
  EXPECT_EQ(s.code, 0);
}

TEST(Cli, OptimalSolves) {
  const auto r = cli("optimal " + model("finite_case1.json") + " --cbar 0.5 --resolution 20");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("value_at_eta"), std::string::npos) << r.out;
}
