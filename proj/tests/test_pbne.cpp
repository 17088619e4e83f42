#include <gtest/gtest.h>

#include <map>
#include <random>

#include "cogarb/pbne.hpp"
#include "oracles.hpp"

using namespace cogarb;

namespace {

/// Single mode and state, stage matrix [[3, 1], [2, 0]], zero terminal.
Scenario dominance_fixture(int horizon) {
  Scenario sc;
  auto& g = sc.game;
  g.states = {"s"};
  g.modes = {"m"};
  g.defender_actions = {"top", "bottom"};
  g.attacker_actions = {"left", "right"};
  g.horizon = horizon;
  g.allocate();
  const double r[2][2] = {{3, 1}, {2, 0}};
  for (std::size_t d = 0; d < 2; ++d)
    for (std::size_t a = 0; a < 2; ++a) {
      g.transition(0, 0, d, a, 0) = 1.0;
      g.reward_d(0, 0, d, a) = r[d][a];
      g.reward_a(0, 0, d, a) = -r[d][a];
    }
  sc.config.terminal_reward = {0.0};
  sc.config.prior = Belief::uniform(1);
  return sc;
}

}  // namespace

TEST(Pbne, CaseStudyEpsilonIsSmall) {
  for (int horizon : {5, 10}) {
    const auto sc = build_case_study({}, horizon, 0);
    SolverSettings st;
    const auto p = solve_pbne(sc.game, sc.config, st);
    EXPECT_TRUE(p.converged) << "K=" << horizon;
    EXPECT_LE(p.epsilon, 1e-4) << "K=" << horizon;
    EXPECT_NEAR(certify_epsilon(sc.game, p), p.epsilon, 1e-12);
    EXPECT_EQ(p.stages(), horizon + 1);
  }
}

TEST(Pbne, DominanceFixtureValues) {
  const auto sc = dominance_fixture(1);
  SolverSettings st;
  const auto p = solve_pbne(sc.game, sc.config, st);
  ASSERT_EQ(p.stages(), 2);
  EXPECT_NEAR(p.epsilon, 0.0, 1e-12);
  EXPECT_NEAR(p.value_d(0, 0, 0), 2.0, 1e-12);
  EXPECT_NEAR(p.value_d(1, 0, 0), 1.0, 1e-12);
  EXPECT_EQ(p.stage(0, 0).defender_prob(0, 0), 1.0);
  EXPECT_EQ(p.stage(0, 0).attacker[1], 1.0);
}

TEST(Pbne, EpsilonCertificateOnPerturbedProfiles) {
  const auto sc = dominance_fixture(1);
  SolverSettings st;
  const auto base = solve_pbne(sc.game, sc.config, st);
  auto p = base;
  p.policy.defender(1, 0, 0, 0) = 0.5;
  p.policy.defender(1, 0, 0, 1) = 0.5;
  auto rep = certify_epsilon_report(sc.game, p);
  EXPECT_NEAR(rep.epsilon, 0.5, 1e-12);
  EXPECT_NEAR(rep.defender_gain, 0.5, 1e-12);
  EXPECT_EQ(rep.stage, 1);

  p = base;
  p.policy.attacker(1, 0, 0) = 1.0;
  p.policy.attacker(1, 0, 1) = 0.0;
  rep = certify_epsilon_report(sc.game, p);
  EXPECT_NEAR(rep.epsilon, 2.0, 1e-12);
  EXPECT_NEAR(rep.attacker_gain, 2.0, 1e-12);
}

TEST(Pbne, SingleModeMatchesBackwardInduction) {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    // one state, 2x2 stage game repeated; the value is additive
    auto g = oracle::random_game(rng, 1, 1, 2, 2, 2);
    StrategicConfig c;
    c.terminal_reward = {static_cast<double>(rep)};
    c.prior = Belief::uniform(1);
    SolverSettings st;
    const auto p = solve_pbne(g, c, st);
    const double v = oracle::value_2x2(g.reward_d(0, 0, 0, 0), g.reward_d(0, 0, 0, 1), g.reward_d(0, 0, 1, 0),
                                       g.reward_d(0, 0, 1, 1));
    EXPECT_NEAR(p.value_d(0, 0, 0), 3.0 * v + rep, 1e-9);
    EXPECT_LE(p.epsilon, 1e-9);
  }
}

TEST(Pbne, RandomZeroSumGamesReachSmallEpsilon) {
  std::mt19937_64 rng(37);
  int converged = 0;
  for (int rep = 0; rep < 10; ++rep) {
    auto g = oracle::random_game(rng, 3, 2, 2, 2, 2);
    StrategicConfig c;
    c.terminal_reward = {5.0, 0.0, -5.0};
    c.prior = Belief::uniform(2);
    SolverSettings st;
    const auto p = solve_pbne(g, c, st);
    EXPECT_NEAR(certify_epsilon(g, p), p.epsilon, 1e-12);
    if (p.converged) {
      ++converged;
      EXPECT_LE(p.epsilon, 1e-6);
    }
  }
  EXPECT_GT(converged, 0);
}

TEST(Pbne, BeliefsMatchReplayedLikelihoods) {
  const auto sc = build_case_study({}, 4, 0);
  SolverSettings st;
  const auto p = solve_pbne(sc.game, sc.config, st);
  // along a single-predecessor chain the forward table equals the replay
  std::vector<std::size_t> path{0};
  for (int j = 1; j < p.stages(); ++j) {
    path.push_back(std::min<std::size_t>(path.back() + 1, 4));
    const auto want = oracle::replay_belief(sc.game, p.policy, 0, {1.0 / 3, 1.0 / 3, 1.0 / 3}, path);
    ASSERT_FALSE(want.empty());
    // stage j, state j was reached only through states 0..j-1 in order
    if (path.back() == static_cast<std::size_t>(j))
      for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(p.belief(j, path.back())[t], want[t], 1e-12);
  }
}

TEST(Pbne, BeliefsMatchMonteCarloFrequencies) {
  const auto sc = build_case_study({}, 3, 0);
  SolverSettings st;
  const auto p = solve_pbne(sc.game, sc.config, st);
  const auto& g = sc.game;
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto draw = [&](auto weights) {
    double x = u(rng), acc = 0.0;
    std::size_t i = 0;
    for (; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (x < acc) break;
    }
    return i;
  };
  const int runs = 200000;
  std::map<std::pair<int, std::size_t>, std::vector<double>> counts;
  for (int r = 0; r < runs; ++r) {
    const std::size_t t = draw(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3});
    std::size_t s = 0;
    for (int j = 0; j < p.stages(); ++j) {
      auto& c = counts[{j, s}];
      c.resize(3);
      c[t] += 1.0;
      const auto sp = p.stage(j, s);
      const auto d = draw(sp.defender_row(t));
      const auto a = draw(sp.attacker);
      s = draw(g.next_state_dist(t, s, d, a));
    }
  }
  for (const auto& [key, c] : counts) {
    const double n = c[0] + c[1] + c[2];
    if (n < 5000) continue;
    for (std::size_t t = 0; t < 3; ++t) {
      const double want = p.belief(key.first, key.second)[t];
      const double se = std::sqrt(want * (1 - want) / n);
      EXPECT_NEAR(c[t] / n, want, 4 * se + 1e-12) << "stage " << key.first << " state " << key.second;
    }
  }
}

TEST(Pbne, ThreadCountDoesNotChangeTheProfile) {
  const auto sc = build_case_study({}, 6, 0);
  SolverSettings one, many;
  many.threads = 4;
  const auto a = solve_pbne(sc.game, sc.config, one);
  const auto b = solve_pbne(sc.game, sc.config, many);
  EXPECT_EQ(fingerprint(a), fingerprint(b));
  EXPECT_EQ(a.epsilon, b.epsilon);
}

TEST(Pbne, NonZeroSumIsRejected) {
  auto sc = dominance_fixture(1);
  sc.game.reward_a(0, 0, 0, 0) = 1.0;
  EXPECT_THROW(solve_pbne(sc.game, sc.config, SolverSettings{}), NotSupported);
}

TEST(Pbne, WriteProfileStartsWithFingerprint) {
  const auto sc = dominance_fixture(1);
  const auto p = solve_pbne(sc.game, sc.config, SolverSettings{});
  std::ostringstream os;
  write_profile(os, sc.game, p);
  EXPECT_EQ(os.str().rfind("profile v1\nfingerprint " + fingerprint_hex(fingerprint(p)) + "\n", 0), 0u);
}
