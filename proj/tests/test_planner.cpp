#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "cogarb/planner.hpp"
#include "oracles.hpp"

using namespace cogarb;

namespace {

OperationalProfile wrap(PolicyTable pol) {
  OperationalProfile p;
  p.policy = std::move(pol);
  return p;
}

struct RandomCase {
  OperationalGame g;
  StrategicConfig c;
  OperationalProfile p;
};

RandomCase random_case(std::mt19937_64& rng, int horizon, std::size_t ns, std::size_t nt, int budget) {
  RandomCase rc{oracle::random_game(rng, ns, nt, 2, 2, horizon), {}, {}};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  rc.c.budget = budget;
  rc.c.eta = 0.2 + 0.5 * u(rng);
  for (std::size_t s = 0; s < ns; ++s) rc.c.terminal_reward.push_back(std::round(u(rng) * 40.0 - 20.0));
  std::vector<double> w(nt);
  for (auto& x : w) x = 0.1 + u(rng);
  rc.c.prior = *Belief::normalized(w);
  rc.c.initial_state = static_cast<int>(rng() % ns);
  rc.c.initial_mode = static_cast<int>(rng() % nt);
  rc.p = wrap(oracle::random_policy(rng, rc.g, horizon));
  return rc;
}

oracle::TreeConfig tree_config(const StrategicConfig& c) {
  return {c.eta,
          c.terminal_reward,
          std::vector<double>(c.prior.probs().begin(), c.prior.probs().end()),
          static_cast<std::size_t>(c.initial_state),
          c.initial_mode,
          c.budget};
}

/// Every open-loop mode schedule that respects the budget and never returns to a used mode.
void feasible_schedules(int horizon, int nt, int mode0, int budget, std::vector<std::vector<int>>& out) {
  std::vector<int> cur;
  std::function<void(int, int, unsigned)> rec = [&](int prev, int m, unsigned used) {
    if (static_cast<int>(cur.size()) == horizon) {
      out.push_back(cur);
      return;
    }
    for (int t = 0; t < nt; ++t) {
      if (t != prev && (m == 0 || ((used >> t) & 1u))) continue;
      cur.push_back(t);
      rec(t, t == prev ? m : m - 1, used | (1u << t));
      cur.pop_back();
    }
  };
  rec(mode0, budget, 1u << mode0);
}

}  // namespace

TEST(Planner, GatedPayoffAndTerminal) {
  const auto sc = build_case_study({}, 3, 1);
  const auto& g = sc.game;
  const auto& c = sc.config;
  EXPECT_EQ(payoff_U(g, 0, Belief::uniform(3), 0, 0, 0, c), 5.0);
  EXPECT_EQ(payoff_U(g, 0, Belief::point_mass(3, 0), 0, 0, 0, c), 0.0);
  EXPECT_EQ(payoff_U(g, 0, Belief({0.5, 0.5, 0.0}), 1, 2, 0, c), 0.0);  // r_D is 0 there anyway
  EXPECT_EQ(payoff_U(g, 0, Belief({0.5, 0.5, 0.0}), 0, 2, 0, c), 10.0);  // b = eta still counts
  auto cu = c;
  cu.superiority = SuperiorityKind::Uncertainty;
  EXPECT_EQ(payoff_U(g, 0, Belief::uniform(3), 0, 0, 0, cu), 5.0);
  EXPECT_EQ(payoff_U(g, 0, Belief({0.9, 0.05, 0.05}), 0, 0, 0, cu), 0.0);
  EXPECT_EQ(terminal_value(c, 0), 100.0);
  EXPECT_EQ(terminal_value(c, 4), -100.0);
}

TEST(Planner, TerminalEntriesHoldTerminalUtility) {
  const auto sc = build_case_study({}, 4, 2);
  const auto p = solve_pbne(sc.game, sc.config, SolverSettings{});
  const auto book = build_playbook(sc.game, sc.config, p);
  int terminal = 0;
  for (const auto& [k, e] : book.entries)
    if (k.stage == 4) {
      ++terminal;
      EXPECT_EQ(e.value, sc.config.terminal_reward[k.state]);
      EXPECT_EQ(e.next_mode, k.mode);
    }
  EXPECT_GT(terminal, 0);
}

TEST(Planner, ZeroBudgetAlwaysStays) {
  const auto sc = build_case_study({}, 5, 0);
  const auto p = solve_pbne(sc.game, sc.config, SolverSettings{});
  const auto book = build_playbook(sc.game, sc.config, p);
  for (const auto& [k, e] : book.entries) EXPECT_EQ(e.next_mode, k.mode);
  // and the root equals the fixed-schedule value
  const std::vector<int> sched(5, 0);
  const double v = oracle::schedule_value(sc.game, p.policy, tree_config(sc.config), sched);
  EXPECT_NEAR(book.root_value(), v, 1e-9);
}

TEST(Planner, RootValueIsMonotoneInBudget) {
  const auto base = build_case_study({}, 5, 0);
  const auto p = solve_pbne(base.game, base.config, SolverSettings{});
  double prev = -std::numeric_limits<double>::infinity();
  for (int m = 0; m <= 3; ++m) {
    auto c = base.config;
    c.budget = m;
    const double v = build_playbook(base.game, c, p).root_value();
    EXPECT_GE(v, prev - 1e-12) << "budget " << m;
    prev = v;
  }
}

TEST(Planner, MatchesExhaustiveSwitchingOracle) {
  std::mt19937_64 rng(43);
  int cases = 0;
  for (int horizon = 1; horizon <= 3; ++horizon)
    for (std::size_t ns = 1; ns <= 3; ++ns)
      for (int budget = 0; budget <= 2; ++budget)
        for (int rep = 0; rep < 3; ++rep) {
          if (budget > horizon) continue;
          auto rc = random_case(rng, horizon, ns, 3, budget);
          const auto book = build_playbook(rc.g, rc.c, rc.p);
          const double want = oracle::best_switching_value(rc.g, rc.p.policy, tree_config(rc.c));
          ASSERT_NEAR(book.root_value(), want, 1e-9) << "K=" << horizon << " |S|=" << ns << " M=" << budget;
          ++cases;
        }
  EXPECT_GT(cases, 50);
}

TEST(Planner, NoOpenLoopScheduleBeatsTheRoot) {
  std::mt19937_64 rng(47);
  for (int rep = 0; rep < 12; ++rep) {
    auto rc = random_case(rng, 3, 2, 3, 1 + rep % 2);
    const auto book = build_playbook(rc.g, rc.c, rc.p);
    std::vector<std::vector<int>> scheds;
    feasible_schedules(3, 3, rc.c.initial_mode, rc.c.budget, scheds);
    ASSERT_FALSE(scheds.empty());
    for (const auto& s : scheds)
      EXPECT_LE(oracle::schedule_value(rc.g, rc.p.policy, tree_config(rc.c), s), book.root_value() + 1e-9);
  }
}

TEST(Planner, SwitchNeedsAnUnusedMode) {
  std::mt19937_64 rng(53);
  auto rc = random_case(rng, 2, 2, 2, 1);
  Playbook book = empty_playbook(rc.c, 2, 0);
  ExtendedState x{0, 0, rc.c.prior, 0, 1, 0b11u};
  EXPECT_THROW(value_switch(rc.g, rc.c, rc.p, book, x), NoUnusedMode);
  x.switches_left = 0;
  EXPECT_THROW(value_switch(rc.g, rc.c, rc.p, book, x), InvalidModel);

  // only mode 1 is left: the switch value is playing mode 1 with m - 1
  x = {0, 0, rc.c.prior, 0, 1, 0b01u};
  const auto [v, t] = value_switch(rc.g, rc.c, rc.p, book, x);
  EXPECT_EQ(t, 1);
  ExtendedState forced{0, 0, rc.c.prior, 1, 0, 0b11u};
  EXPECT_NEAR(v, value_stay(rc.g, rc.c, rc.p, book, forced), 1e-12);
}

TEST(Planner, VerificationPassesOnSolvedProfile) {
  const auto sc = build_case_study({}, 5, 2);
  const auto p = solve_pbne(sc.game, sc.config, SolverSettings{});
  const auto book = build_playbook(sc.game, sc.config, p);
  const auto rep = verify_equilibrium(sc.game, sc.config, p, book);
  for (const auto& c : rep.checks) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
  EXPECT_TRUE(rep.passed());
  ASSERT_EQ(rep.checks.size(), 4u);
}

TEST(Planner, VerificationCatchesPerturbations) {
  const auto sc = build_case_study({}, 4, 1);
  const auto p = solve_pbne(sc.game, sc.config, SolverSettings{});
  const auto book = build_playbook(sc.game, sc.config, p);

  {
    auto bad = book;
    auto it = bad.entries.begin();
    std::advance(it, static_cast<long>(bad.entries.size() / 2));
    it->second.value += 1.0;
    const auto rep = verify_equilibrium(sc.game, sc.config, p, bad);
    EXPECT_FALSE(rep.passed());
    const auto& st = rep.checks[3];
    EXPECT_FALSE(st.passed);
    EXPECT_GE(st.residual, 1.0 - 1e-9);
    EXPECT_NE(st.detail.find("k=" + std::to_string(it->first.stage)), std::string::npos) << st.detail;
  }
  {
    auto q = p;
    for (auto& b : q.beliefs.beliefs) b = Belief::uniform(3);
    const auto rep = verify_equilibrium(sc.game, sc.config, q, book);
    EXPECT_FALSE(rep.checks[0].passed);
    EXPECT_GT(rep.checks[0].residual, 1e-3);
  }
  {
    auto c = sc.config;
    c.eta = 0.4;
    const auto rep = verify_equilibrium(sc.game, c, p, book);
    EXPECT_FALSE(rep.checks[2].passed);
    EXPECT_NE(rep.checks[2].detail.find("threshold mismatch"), std::string::npos);
  }
  {
    const auto rep = verify_equilibrium(sc.game, sc.config, p, book, -1.0);
    EXPECT_FALSE(rep.checks[1].passed);
  }
}

TEST(Planner, ExportImportRoundTrip) {
  const auto sc = build_case_study({}, 4, 2);
  const auto p = solve_pbne(sc.game, sc.config, SolverSettings{});
  const auto book = build_playbook(sc.game, sc.config, p);
  std::stringstream ss;
  write_playbook(ss, sc.game, book);
  const auto text = ss.str();
  const auto back = read_playbook(ss, fingerprint_hex(fingerprint(p)));
  ASSERT_EQ(back.entries.size(), book.entries.size());
  EXPECT_EQ(back.root, book.root);
  for (const auto& [k, e] : book.entries) {
    const auto it = back.entries.find(k);
    ASSERT_NE(it, back.entries.end());
    EXPECT_EQ(it->second.value, e.value);
    EXPECT_EQ(it->second.next_mode, e.next_mode);
  }
  EXPECT_TRUE(verify_equilibrium(sc.game, sc.config, p, back).passed());

  std::istringstream again(text);
  EXPECT_THROW(read_playbook(again, "0000000000000000"), FingerprintMismatch);
  std::istringstream broken(text.substr(0, text.size() / 2));
  EXPECT_THROW(read_playbook(broken, fingerprint_hex(fingerprint(p))), ScenarioError);
}

TEST(Planner, RebuildIsIdempotent) {
  const auto sc = build_case_study({}, 4, 2);
  const auto p = solve_pbne(sc.game, sc.config, SolverSettings{});
  std::ostringstream a, b;
  write_playbook(a, sc.game, build_playbook(sc.game, sc.config, p));
  write_playbook(b, sc.game, build_playbook(sc.game, sc.config, p));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Planner, ProfileMustCoverTheHorizon) {
  const auto sc = build_case_study({}, 4, 1);
  OperationalProfile short_profile = wrap(PolicyTable::uniform(sc.game, 2));
  EXPECT_THROW(build_playbook(sc.game, sc.config, short_profile), InvalidModel);
}
