#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cogarb/belief.hpp"
#include "cogarb/game_model.hpp"

namespace cogarb {

/// Read-only view of both players' policies at one (stage, state).
/// `defender` is mode-major: defender[θ * |A_D| + a_D].
struct StagePolicy {
  std::span<const double> defender;
  std::span<const double> attacker;
  std::size_t num_defender_actions = 0;

  double defender_prob(std::size_t mode, std::size_t a_d) const { return defender[mode * num_defender_actions + a_d]; }
  std::span<const double> defender_row(std::size_t mode) const {
    return defender.subspan(mode * num_defender_actions, num_defender_actions);
  }
};

/// Per-mode probability of observing s -> s_next with both actions hidden:
/// sum over (a_D, a_A) of T^θ(s_next | s, a_D, a_A) π_D(a_D | s, θ) π_A(a_A | s).
inline std::vector<double> transition_likelihood(const OperationalGame& g, const StagePolicy& pol, std::size_t s,
                                                 std::size_t s_next) {
  const std::size_t nt = g.num_modes(), nd = g.num_defender_actions(), na = g.num_attacker_actions();
  std::vector<double> lik(nt, 0.0);
  for (std::size_t t = 0; t < nt; ++t) {
    double acc = 0.0;
    for (std::size_t d = 0; d < nd; ++d) {
      const double pd = pol.defender_prob(t, d);
      if (pd == 0.0) continue;
      for (std::size_t a = 0; a < na; ++a) {
        const double pa = pol.attacker[a];
        if (pa == 0.0) continue;
        acc += g.transition(t, s, d, a, s_next) * pd * pa;
      }
    }
    lik[t] = acc;
  }
  return lik;
}

/// Per-mode likelihood of the realized (a_D, a_A, s_next).
inline std::vector<double> action_likelihood(const OperationalGame& g, const StagePolicy& pol, std::size_t s,
                                             std::size_t a_d, std::size_t a_a, std::size_t s_next) {
  std::vector<double> lik(g.num_modes());
  for (std::size_t t = 0; t < lik.size(); ++t)
    lik[t] = g.transition(t, s, a_d, a_a, s_next) * pol.defender_prob(t, a_d) * pol.attacker[a_a];
  return lik;
}

namespace detail {
inline std::optional<Belief> posterior(const Belief& prior, std::vector<double> lik) {
  for (std::size_t t = 0; t < lik.size(); ++t) lik[t] *= prior[t];
  return Belief::normalized(std::move(lik));
}
}  // namespace detail

// Every update returns nullopt for an impossible observation (zero normalizer);
// the caller chooses the fallback.

/// Planning-time Bayes update: conditions on the observed state transition only.
inline std::optional<Belief> bayes_update_planning(const Belief& b, std::size_t s, std::size_t s_next,
                                                   const StagePolicy& pol, const OperationalGame& g) {
  return detail::posterior(b, transition_likelihood(g, pol, s, s_next));
}

/// Execution-time ex-post update: conditions on the realized action pair as well.
inline std::optional<Belief> bayes_update_expost(const Belief& b, std::size_t s, std::size_t a_d, std::size_t a_a,
                                                 std::size_t s_next, const StagePolicy& pol,
                                                 const OperationalGame& g) {
  return detail::posterior(b, action_likelihood(g, pol, s, a_d, a_a, s_next));
}

/// Base-rate neglect: the ex-post likelihood alone, normalized; the prior is dropped.
inline std::optional<Belief> brn_update(std::size_t s, std::size_t a_d, std::size_t a_a, std::size_t s_next,
                                        const StagePolicy& pol, const OperationalGame& g) {
  return Belief::normalized(action_likelihood(g, pol, s, a_d, a_a, s_next));
}

}  // namespace cogarb
