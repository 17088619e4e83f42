#include <gtest/gtest.h>

#include <string>

#include "cogarb/scenario.hpp"

using namespace cogarb;

namespace {

const std::string kSource = COGARB_SOURCE_DIR;

const char* kTiny = R"(# one of everything
[states]
names = only

[modes]
names = m

[actions]
defender = d
attacker = a

[transitions]
row m only d a = 1

[rewards]
defender m only d a = 2.5

[strategic]
horizon = 3
terminal = 7
)";

std::string two_state(const std::string& row_aa, const std::string& extra = "") {
  return std::string(R"([states]
names = x y
[modes]
names = p q
[actions]
defender = d
attacker = a b
[transitions]
row p x d a = 0.5 0.5
row p x d b = )") + row_aa + R"(
row p y d a = 0 1
row p y d b = 0 1
row q x d a = 1 0
row q x d b = 0.25 0.75
row q y d a = 0 1
row q y d b = 0 1
[rewards]
defender p x d a = 1
defender p x d b = 2
defender p y d a = 3
defender p y d b = 4
defender q x d a = -1
defender q x d b = -2
defender q y d a = -3
defender q y d b = -4
[strategic]
horizon = 4
budget = 1
terminal = 10 -10
initial_state = y
initial_mode = q
prior = 0.25 0.75
)" + extra;
}

int error_line(const std::string& text) {
  try {
    load_scenario(text);
  } catch (const ScenarioError& e) {
    return e.line();
  }
  return -1;
}

std::string error_text(const std::string& text) {
  try {
    load_scenario(text);
  } catch (const ScenarioError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Scenario, BundledCaseStudyMatchesBuilder) {
  const auto doc = load_scenario_file(kSource + "/scenarios/case_study.scn");
  const auto ref = build_case_study({}, 10, 2);
  const auto& g = doc.scenario.game;
  EXPECT_EQ(g.transition.data().size(), ref.game.transition.data().size());
  for (std::size_t i = 0; i < g.transition.size(); ++i) EXPECT_EQ(g.transition.data()[i], ref.game.transition.data()[i]);
  for (std::size_t i = 0; i < g.reward_d.size(); ++i) {
    EXPECT_EQ(g.reward_d.data()[i], ref.game.reward_d.data()[i]);
    EXPECT_EQ(g.reward_a.data()[i], ref.game.reward_a.data()[i]);
  }
  EXPECT_EQ(g.horizon, 10);
  EXPECT_EQ(doc.scenario.config.budget, 2);
  EXPECT_EQ(doc.scenario.config.terminal_reward, ref.config.terminal_reward);
  EXPECT_EQ(doc.scenario.config.prior, ref.config.prior);
  EXPECT_NEAR(doc.scenario.config.zeta, ref.config.zeta, 1e-15);
  EXPECT_EQ(doc.lookahead, 5);
  EXPECT_TRUE(doc.refine);
  ASSERT_TRUE(doc.case_study.has_value());
  EXPECT_EQ(doc.case_study->matched_defender, MatchedDefenderRule::ActionOrder);
}

TEST(Scenario, MinimalGameIsAccepted) {
  const auto doc = load_scenario(kTiny);
  const auto& g = doc.scenario.game;
  EXPECT_EQ(g.num_states(), 1u);
  EXPECT_EQ(g.transition(0, 0, 0, 0, 0), 1.0);
  EXPECT_EQ(g.reward_d(0, 0, 0, 0), 2.5);
  EXPECT_EQ(g.reward_a(0, 0, 0, 0), -2.5);
  EXPECT_EQ(doc.scenario.config.budget, 0);
  EXPECT_EQ(doc.scenario.config.prior, Belief::uniform(1));
}

TEST(Scenario, ExplicitTablesAndStrategicKeys) {
  const auto doc = load_scenario(two_state("0.1 0.9"));
  const auto& g = doc.scenario.game;
  const auto& c = doc.scenario.config;
  EXPECT_EQ(g.transition(0, 0, 0, 1, 1), 0.9);
  EXPECT_EQ(g.transition(1, 0, 0, 1, 0), 0.25);
  EXPECT_EQ(g.reward_d(1, 1, 0, 1), -4.0);
  EXPECT_EQ(c.initial_state, 1);
  EXPECT_EQ(c.initial_mode, 1);
  EXPECT_EQ(c.prior, Belief({0.25, 0.75}));
}

TEST(Scenario, RowSumOffIsRejectedWithCell) {
  const auto text = two_state("0.1 0.88");
  const auto msg = error_text(text);
  EXPECT_NE(msg.find("(p, x, d, b)"), std::string::npos) << msg;
  EXPECT_NE(msg.find("0.98"), std::string::npos) << msg;
  EXPECT_EQ(error_line(text), 10);
}

TEST(Scenario, UnknownKeyReportsItsLine) {
  EXPECT_EQ(error_line(two_state("0.1 0.9", "colour = blue\n")), 33);
  EXPECT_EQ(error_line(two_state("0.1 0.9", "[weather]\n")), 33);
}

TEST(Scenario, DuplicateKeysAndCells) {
  EXPECT_EQ(error_line(two_state("0.1 0.9", "budget = 2\n")), 33);
  auto text = two_state("0.1 0.9");
  text.replace(text.find("row p y d b"), 11, "row p x d a");
  EXPECT_NE(error_text(text).find("duplicate"), std::string::npos);
}

TEST(Scenario, MissingCellIsReported) {
  auto text = two_state("0.1 0.9");
  const auto pos = text.find("defender q y d b = -4\n");
  text.erase(pos, std::string("defender q y d b = -4\n").size());
  EXPECT_NE(error_text(text).find("missing defender reward for (q, y, d, b)"), std::string::npos);
}

TEST(Scenario, CaseStudyCannotMixWithExplicitRows) {
  const std::string text = R"([states]
names = s1 s2 s3 s4 s5
[modes]
names = 0 1 2
[actions]
defender = 0 1 2
attacker = 0 1 2
[transitions]
case_study = true
row 0 s1 0 0 = 1 0 0 0 0
[strategic]
horizon = 2
terminal = 1 1 1 1 1
)";
  EXPECT_EQ(error_line(text), 10);
}

TEST(Scenario, BadValues) {
  EXPECT_GT(error_line(two_state("0.1 0.9", "superiority = vibes\n")), 0);
  EXPECT_GT(error_line(two_state("0.1 0.9", "[execution]\nlookahead = 0\n")), 0);
  EXPECT_GT(error_line(two_state("0.1 0.9", "[solver]\npolish_rounds = x\n")), 0);
  EXPECT_THROW(load_scenario_file(kSource + "/scenarios/does-not-exist.scn"), ScenarioError);
}

TEST(Scenario, SerializeRoundTrip) {
  for (const auto& text : {two_state("0.1 0.9", "eta = 0.3\nsuperiority = uncertainty\nzeta = 0.4\n"),
                           std::string(kTiny)}) {
    auto doc = load_scenario(text);
    doc.solver.alpha_weights.assign(doc.scenario.game.num_modes(), 2.0);
    doc.lookahead = 3;
    doc.refine = false;
    const auto back = load_scenario(serialize_scenario(doc));
    const auto& a = doc.scenario;
    const auto& b = back.scenario;
    for (std::size_t i = 0; i < a.game.transition.size(); ++i)
      EXPECT_NEAR(a.game.transition.data()[i], b.game.transition.data()[i], 1e-12);
    for (std::size_t i = 0; i < a.game.reward_d.size(); ++i) {
      EXPECT_NEAR(a.game.reward_d.data()[i], b.game.reward_d.data()[i], 1e-12);
      EXPECT_NEAR(a.game.reward_a.data()[i], b.game.reward_a.data()[i], 1e-12);
    }
    EXPECT_EQ(a.config.budget, b.config.budget);
    EXPECT_NEAR(a.config.eta, b.config.eta, 1e-12);
    EXPECT_NEAR(a.config.zeta, b.config.zeta, 1e-12);
    EXPECT_EQ(a.config.superiority, b.config.superiority);
    EXPECT_EQ(a.config.initial_state, b.config.initial_state);
    EXPECT_EQ(a.config.initial_mode, b.config.initial_mode);
    for (std::size_t t = 0; t < a.config.prior.size(); ++t) EXPECT_NEAR(a.config.prior[t], b.config.prior[t], 1e-12);
    EXPECT_EQ(back.solver.alpha_weights, doc.solver.alpha_weights);
    EXPECT_EQ(back.lookahead, 3);
    EXPECT_FALSE(back.refine);
  }
}

TEST(Scenario, CaseStudySerializesToEquivalentExplicitTables) {
  const auto doc = load_scenario_file(kSource + "/scenarios/case_study.scn");
  const auto back = load_scenario(serialize_scenario(doc));
  EXPECT_FALSE(back.case_study.has_value());
  for (std::size_t i = 0; i < doc.scenario.game.transition.size(); ++i)
    EXPECT_NEAR(doc.scenario.game.transition.data()[i], back.scenario.game.transition.data()[i], 1e-12);
}
