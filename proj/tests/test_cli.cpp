#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kCli = COGARB_CLI_PATH;
const std::string kScenario = std::string(COGARB_SOURCE_DIR) + "/scenarios/case_study.scn";

fs::path scratch(const std::string& name) {
  static const fs::path root = [] {
    std::random_device rd;
    auto p = fs::temp_directory_path() / ("cogarb-cli-" + std::to_string(rd()));
    fs::create_directories(p);
    return p;
  }();
  return root / name;
}

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::string root_value(const fs::path& report) {
  for (const auto& l : lines(slurp(report)))
    if (l.rfind("root value V0 ", 0) == 0) return l.substr(14);
  return {};
}

}  // namespace

TEST(Cli, PlanAgreesWithSweep) {
  const auto plan = scratch("plan5"), sweep = scratch("sweep5");
  ASSERT_EQ(run("plan --scenario " + kScenario + " --horizon 5 --budget 0 --out " + plan.string()), 0);
  ASSERT_EQ(run("sweep --scenario " + kScenario + " --horizons 5 --budgets 0 --out " + sweep.string()), 0);
  for (const char* f : {"playbook.txt", "profile.txt", "report.txt", "manifest.json"})
    EXPECT_TRUE(fs::exists(plan / f)) << f;
  const auto v0 = root_value(plan / "report.txt");
  ASSERT_FALSE(v0.empty());
  const auto rows = lines(slurp(sweep / "sweep.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], "horizon,budget,initial_mode,case,root_value,epsilon,converged");
  EXPECT_EQ(rows[1].rfind("5,0,0,\"0 (mode 0)\"," + v0 + ",", 0), 0u) << rows[1] << " vs " << v0;
}

TEST(Cli, DefaultSweepHasFifteenRows) {
  const auto dir = scratch("sweep-default");
  ASSERT_EQ(run("sweep --scenario " + kScenario + " --gnuplot --out " + dir.string()), 0);
  const auto rows = lines(slurp(dir / "sweep.csv"));
  EXPECT_EQ(rows.size(), 16u);
  EXPECT_TRUE(fs::exists(dir / "sweep.gp"));
}

TEST(Cli, ExecuteIsReproducible) {
  const auto a = scratch("exec-a"), b = scratch("exec-b");
  const std::string args = "execute --scenario " + kScenario +
                           " --runs 1 --seed 7 --strategy 'opt,noswitch:0,uniform:1;2' --bias bayes,cb,brn --out ";
  ASSERT_EQ(run(args + a.string()), 0);
  ASSERT_EQ(run(args + b.string()), 0);
  EXPECT_EQ(slurp(a / "ledger.csv"), slurp(b / "ledger.csv"));
  EXPECT_EQ(slurp(a / "summary.csv"), slurp(b / "summary.csv"));
  const auto ledger = lines(slurp(a / "ledger.csv"));
  ASSERT_EQ(ledger.size(), 10u);
  EXPECT_EQ(ledger[0],
            "strategy,bias,run,seed,total_reward,terminal_state,switch_stages,switch_modes,window_lengths,"
            "impossible_observations");
  const auto summary = lines(slurp(a / "summary.csv"));
  ASSERT_EQ(summary.size(), 10u);
  EXPECT_EQ(summary[0], "strategy,bias,label,runs,mean,sd,min,q1,median,q3,max,win_rate,seed");
}

TEST(Cli, VerifyAcceptsAndRejects) {
  const auto plan = scratch("plan-verify");
  ASSERT_EQ(run("plan --scenario " + kScenario + " --horizon 4 --out " + plan.string()), 0);
  const auto book = (plan / "playbook.txt").string();
  EXPECT_EQ(run("verify --scenario " + kScenario + " --horizon 4 --playbook " + book + " --out " +
                scratch("v-ok").string()),
            0);
  EXPECT_EQ(run("verify --scenario " + kScenario + " --horizon 4 --eta 0.4 --playbook " + book + " --out " +
                scratch("v-eta").string()),
            3);
  EXPECT_NE(slurp(scratch("v-eta") / "report.txt").find("threshold mismatch"), std::string::npos);
  // a different horizon solves a different profile
  EXPECT_EQ(run("verify --scenario " + kScenario + " --horizon 5 --playbook " + book + " --out " +
                scratch("v-fp").string()),
            3);

  // bump one stored value
  auto text = lines(slurp(plan / "playbook.txt"));
  for (auto& l : text)
    if (l.rfind("entry 1 ", 0) == 0) {
      std::istringstream is(l);
      std::vector<std::string> w;
      for (std::string x; is >> x;) w.push_back(x);
      w[w.size() - 2] = std::to_string(std::stod(w[w.size() - 2]) + 1.0);
      l.clear();
      for (std::size_t i = 0; i < w.size(); ++i) l += (i ? " " : "") + w[i];
      break;
    }
  const auto bad = scratch("bad-playbook.txt");
  {
    std::ofstream os(bad);
    for (const auto& l : text) os << l << "\n";
  }
  EXPECT_EQ(run("verify --scenario " + kScenario + " --horizon 4 --playbook " + bad.string() + " --out " +
                scratch("v-bad").string()),
            3);
}

TEST(Cli, InputErrorsExitTwo) {
  EXPECT_EQ(run("sweep --scenario " + kScenario + " --budgets '' --out " + scratch("e1").string()), 2);
  EXPECT_EQ(run("execute --scenario " + kScenario + " --strategy sometimes --out " + scratch("e2").string()), 2);
  EXPECT_EQ(run("execute --scenario " + kScenario + " --strategy 'uniform:1;2' --budget 1 --out " +
                scratch("e3").string()),
            2);
  EXPECT_EQ(run("plan --scenario /nonexistent.scn --out " + scratch("e4").string()), 2);
  EXPECT_EQ(run("plan --scenario " + kScenario + " --bogus"), 2);
  EXPECT_EQ(run("verify --scenario " + kScenario + " --out " + scratch("e5").string()), 2);
}

TEST(Cli, ScenarioFromEnvironment) {
  const std::string cmd = "COGARB_SCENARIO=" + kScenario + " " + kCli + " plan --horizon 2 --out " +
                          scratch("env").string() + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(st));
  EXPECT_EQ(WEXITSTATUS(st), 0);
  EXPECT_TRUE(fs::exists(scratch("env") / "report.txt"));
}
