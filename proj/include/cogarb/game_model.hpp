#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cogarb/belief.hpp"
#include "cogarb/errors.hpp"
#include "cogarb/tensor.hpp"

namespace cogarb {

inline constexpr double kRowTolerance = 1e-9;

/// The family of one-sided-information Markov games, one per mode.
///
/// Tables are indexed [mode][state][defender action][attacker action] and the
/// transition table has a trailing next-state dimension. The defender observes
/// the mode; the attacker observes only the state.
struct OperationalGame {
  std::vector<std::string> states;
  std::vector<std::string> modes;
  std::vector<std::string> defender_actions;
  std::vector<std::string> attacker_actions;
  Tensor<5> transition;  // [θ][s][a_D][a_A][s']
  Tensor<4> reward_d;    // [θ][s][a_D][a_A]
  Tensor<4> reward_a;
  double discount = 1.0;
  int horizon = 0;  // stages 0..horizon

  std::size_t num_states() const noexcept { return states.size(); }
  std::size_t num_modes() const noexcept { return modes.size(); }
  std::size_t num_defender_actions() const noexcept { return defender_actions.size(); }
  std::size_t num_attacker_actions() const noexcept { return attacker_actions.size(); }

  std::span<const double> next_state_dist(std::size_t mode, std::size_t s, std::size_t a_d, std::size_t a_a) const {
    return transition.row(mode, s, a_d, a_a);
  }

  /// Allocates zeroed tables for the current name lists.
  void allocate() {
    const std::size_t nt = num_modes(), ns = num_states(), nd = num_defender_actions(), na = num_attacker_actions();
    transition = Tensor<5>({nt, ns, nd, na, ns});
    reward_d = Tensor<4>({nt, ns, nd, na});
    reward_a = Tensor<4>({nt, ns, nd, na});
  }

  std::string cell_name(std::size_t mode, std::size_t s, std::size_t a_d, std::size_t a_a) const {
    return "(" + modes[mode] + ", " + states[s] + ", " + defender_actions[a_d] + ", " + attacker_actions[a_a] + ")";
  }

  bool is_zero_sum(double tol = 1e-12) const {
    for (std::size_t i = 0; i < reward_d.size(); ++i)
      if (std::abs(reward_d.data()[i] + reward_a.data()[i]) > tol) return false;
    return true;
  }

  /// Throws InvalidModel naming the first violated invariant.
  void validate() const {
    if (states.empty() || modes.empty() || defender_actions.empty() || attacker_actions.empty())
      throw InvalidModel("game needs at least one state, mode and action per player");
    if (modes.size() > 32) throw InvalidModel("at most 32 modes are supported");
    if (horizon < 0) throw InvalidModel("horizon must be >= 0");
    if (!(discount >= 0.0 && discount <= 1.0)) throw InvalidModel("discount must lie in [0, 1]");
    const std::size_t nt = num_modes(), ns = num_states(), nd = num_defender_actions(), na = num_attacker_actions();
    if (transition.shape() != Tensor<5>::Shape{nt, ns, nd, na, ns}) throw InvalidModel("transition table has wrong shape");
    if (reward_d.shape() != Tensor<4>::Shape{nt, ns, nd, na} || reward_a.shape() != reward_d.shape())
      throw InvalidModel("reward tables have wrong shape");
    for (std::size_t t = 0; t < nt; ++t)
      for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t d = 0; d < nd; ++d)
          for (std::size_t a = 0; a < na; ++a) {
            double sum = 0.0;
            for (double p : next_state_dist(t, s, d, a)) {
              if (!(p >= 0.0) || !std::isfinite(p))
                throw InvalidModel("negative or non-finite transition probability at " + cell_name(t, s, d, a));
              sum += p;
            }
            if (std::abs(sum - 1.0) > kRowTolerance) {
              std::ostringstream os;
              os << "transition row at " << cell_name(t, s, d, a) << " sums to " << sum;
              throw InvalidModel(os.str());
            }
            if (!std::isfinite(reward_d(t, s, d, a)) || !std::isfinite(reward_a(t, s, d, a)))
              throw InvalidModel("non-finite reward at " + cell_name(t, s, d, a));
          }
  }
};

/// Strategic-layer inputs: switch budget, superiority thresholds, terminal utility
/// and the initial conditions of an engagement.
struct StrategicConfig {
  int budget = 0;
  double eta = 0.5;
  double zeta = 0.0;
  SuperiorityKind superiority = SuperiorityKind::Belief;
  std::vector<double> terminal_reward;
  int initial_mode = 0;
  int initial_state = 0;
  Belief prior;
  bool initial_mode_used = true;  // whether θ⁰ starts in the used set

  void validate(const OperationalGame& game) const {
    if (budget < 0) throw InvalidModel("budget must be >= 0");
    if (budget > game.horizon) throw InvalidModel("budget must not exceed the horizon");
    if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidModel("eta must lie in [0, 1]");
    if (!(zeta >= 0.0) || !std::isfinite(zeta)) throw InvalidModel("zeta must be finite and >= 0");
    if (terminal_reward.size() != game.num_states()) throw InvalidModel("terminal reward needs one value per state");
    for (double u : terminal_reward)
      if (!std::isfinite(u)) throw InvalidModel("terminal reward must be finite");
    if (initial_mode < 0 || static_cast<std::size_t>(initial_mode) >= game.num_modes())
      throw InvalidModel("initial mode out of range");
    if (initial_state < 0 || static_cast<std::size_t>(initial_state) >= game.num_states())
      throw InvalidModel("initial state out of range");
    if (prior.size() != game.num_modes()) throw InvalidModel("prior belief dimension differs from the mode count");
  }

  std::uint32_t initial_used_mask() const {
    return initial_mode_used ? (std::uint32_t{1} << initial_mode) : 0u;
  }
};

/// How the case-study transition rule treats a matched defender facing an
/// unmatched attacker (a_D = θ, a_A ≠ θ), a cell the published table leaves out.
enum class MatchedDefenderRule {
  BothMatched,  // same advance probability as the both-matched row
  ActionOrder,  // falls through to the a_D > a_A ordering row
};

inline const char* to_string(MatchedDefenderRule r) {
  return r == MatchedDefenderRule::BothMatched ? "both_matched" : "action_order";
}

struct CaseStudyParams {
  double kappa = 0.8;  // attacker ability
  double delta = 0.5;  // defender ability
  double beta = std::numeric_limits<double>::infinity();  // state-impact divisor
  MatchedDefenderRule matched_defender = MatchedDefenderRule::ActionOrder;
};

struct Scenario {
  OperationalGame game;
  StrategicConfig config;
};

namespace case_study {

inline constexpr std::size_t kStates = 5;
inline constexpr std::size_t kModes = 3;
inline constexpr std::size_t kActions = 3;

/// Defender's immediate reward in the case study (state independent).
inline double defender_reward(int mode, int a_d, int a_a) {
  if (a_d == mode) return a_a == mode ? 5.0 : 10.0;
  if (a_a == mode) return 0.0;
  return a_d > a_a ? 1.0 : 0.0;
}

/// Probability that the attacker advances from s_l to s_{l+1}; l is 1-based.
inline double advance_probability(const CaseStudyParams& p, int mode, int l, int a_d, int a_a) {
  const double state_term = std::isinf(p.beta) ? 0.0 : static_cast<double>(l) / p.beta;
  const double mode_term = static_cast<double>(mode) / 10.0;
  const bool d_match = a_d == mode, a_match = a_a == mode;
  if (!d_match && a_match) return p.kappa - mode_term - state_term;
  if (d_match && a_match) return p.kappa - p.delta - mode_term - state_term;
  if (d_match && p.matched_defender == MatchedDefenderRule::BothMatched)
    return p.kappa - p.delta - mode_term - state_term;
  return a_d > a_a ? p.kappa - p.delta : 1.0 - (p.kappa - p.delta);
}

}  // namespace case_study

/// Builds the five-step attack-path case study: rewards from the immediate-reward
/// table, advance probabilities from the transition table (residual mass stays
/// put, the last state absorbs), terminal utilities 100/50/10/0/-100.
inline Scenario build_case_study(const CaseStudyParams& params, int horizon = 10, int budget = 0) {
  if (!(params.beta > 0.0)) throw InvalidModel("beta must be > 0 (or infinite)");
  Scenario sc;
  auto& g = sc.game;
  g.states = {"s1", "s2", "s3", "s4", "s5"};
  g.modes = {"0", "1", "2"};
  g.defender_actions = {"0", "1", "2"};
  g.attacker_actions = {"0", "1", "2"};
  g.horizon = horizon;
  g.discount = 1.0;
  g.allocate();
  using namespace case_study;
  for (int t = 0; t < static_cast<int>(kModes); ++t)
    for (int s = 0; s < static_cast<int>(kStates); ++s)
      for (int d = 0; d < static_cast<int>(kActions); ++d)
        for (int a = 0; a < static_cast<int>(kActions); ++a) {
          const double r = defender_reward(t, d, a);
          g.reward_d(t, s, d, a) = r;
          g.reward_a(t, s, d, a) = -r;
          if (s == static_cast<int>(kStates) - 1) {
            g.transition(t, s, d, a, s) = 1.0;
            continue;
          }
          const double p = advance_probability(params, t, s + 1, d, a);
          if (!(p >= 0.0 && p <= 1.0)) {
            std::ostringstream os;
            os << "case-study advance probability " << p << " outside [0, 1] at " << g.cell_name(t, s, d, a);
            throw InvalidModel(os.str());
          }
          g.transition(t, s, d, a, s + 1) = p;
          g.transition(t, s, d, a, s) = 1.0 - p;
        }
  auto& c = sc.config;
  c.budget = budget;
  c.eta = 0.5;
  c.zeta = 0.5 * std::log(static_cast<double>(kModes));
  c.terminal_reward = {100.0, 50.0, 10.0, 0.0, -100.0};
  c.initial_mode = 0;
  c.initial_state = 0;
  c.prior = Belief::uniform(kModes);
  g.validate();
  c.validate(g);
  return sc;
}

}  // namespace cogarb
