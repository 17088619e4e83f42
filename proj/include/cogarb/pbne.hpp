#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "cogarb/belief.hpp"
#include "cogarb/belief_update.hpp"
#include "cogarb/errors.hpp"
#include "cogarb/game_model.hpp"
#include "cogarb/parallel.hpp"
#include "cogarb/stage_game.hpp"
#include "cogarb/tensor.hpp"

namespace cogarb {

struct SolverSettings {
  int max_iterations = 200;
  double policy_tolerance = 1e-9;
  std::vector<double> alpha_weights;  // empty means 1 for every mode
  double lp_tolerance = 1e-9;
  // Support-restricted polishing passes allowed when the sweeps cycle (0 disables).
  int polish_rounds = 8;
  // When set, U_T(s) is the defender's continuation after the last stage
  // (and -U_T the attacker's); otherwise the operational game ends at zero.
  bool terminal_continuation = true;
  int threads = 1;

  void validate(const OperationalGame& g) const {
    if (max_iterations < 1) throw InvalidModel("max_iterations must be positive");
    if (!(policy_tolerance > 0.0)) throw InvalidModel("policy_tolerance must be positive");
    if (!(lp_tolerance > 0.0)) throw InvalidModel("lp_tolerance must be positive");
    if (polish_rounds < 0) throw InvalidModel("polish_rounds must be >= 0");
    if (!alpha_weights.empty()) {
      if (alpha_weights.size() != g.num_modes()) throw InvalidModel("alpha_weights needs one entry per mode");
      for (double a : alpha_weights)
        if (!(a > 0.0) || !std::isfinite(a)) throw InvalidModel("alpha_weights must be positive and finite");
    }
  }

  std::vector<double> alphas(std::size_t modes) const {
    return alpha_weights.empty() ? std::vector<double>(modes, 1.0) : alpha_weights;
  }
};

/// Stage-indexed policy pair. Local stage j corresponds to global stage first_stage + j.
struct PolicyTable {
  Tensor<4> defender;  // [j][s][θ][a_D]
  Tensor<3> attacker;  // [j][s][a_A]

  int stages() const noexcept { return static_cast<int>(attacker.extent(0)); }

  static PolicyTable uniform(const OperationalGame& g, int stages) {
    const std::size_t ns = g.num_states(), nt = g.num_modes(), nd = g.num_defender_actions(),
                      na = g.num_attacker_actions();
    const auto n = static_cast<std::size_t>(stages);
    PolicyTable p;
    p.defender = Tensor<4>({n, ns, nt, nd}, 1.0 / static_cast<double>(nd));
    p.attacker = Tensor<3>({n, ns, na}, 1.0 / static_cast<double>(na));
    return p;
  }

  StagePolicy stage(int j, std::size_t s) const {
    const std::size_t nt = defender.extent(2), nd = defender.extent(3);
    const std::size_t off = (static_cast<std::size_t>(j) * defender.extent(1) + s) * nt * nd;
    return StagePolicy{{defender.data().data() + off, nt * nd}, attacker.row(j, s), nd};
  }

  double distance(const PolicyTable& o) const {
    double d = 0.0;
    for (std::size_t i = 0; i < defender.size(); ++i)
      d = std::max(d, std::abs(defender.data()[i] - o.defender.data()[i]));
    for (std::size_t i = 0; i < attacker.size(); ++i)
      d = std::max(d, std::abs(attacker.data()[i] - o.attacker.data()[i]));
    return d;
  }
};

/// Forward-consistent beliefs b[j][s] with the occupancy that produced them.
struct BeliefTable {
  std::size_t num_states = 0;
  std::vector<Belief> beliefs;    // [j * |S| + s]
  std::vector<double> occupancy;  // P(s^j = s)
  std::vector<char> reachable;

  const Belief& at(int j, std::size_t s) const { return beliefs[static_cast<std::size_t>(j) * num_states + s]; }
  double occ(int j, std::size_t s) const { return occupancy[static_cast<std::size_t>(j) * num_states + s]; }
  bool is_reachable(int j, std::size_t s) const { return reachable[static_cast<std::size_t>(j) * num_states + s] != 0; }
};

/// Output of the ε-PBNE solver.
struct OperationalProfile {
  int first_stage = 0;
  PolicyTable policy;
  BeliefTable beliefs;
  Tensor<3> value_d;       // [j][s][θ]
  Tensor<2> value_a;       // [j][s]
  Tensor<2> continuation;  // defender value after the last stage, [s][θ]
  double epsilon = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> change_log;   // sup-norm policy change per sweep
  std::vector<double> epsilon_log;  // certified ε of each sweep's candidate

  int stages() const noexcept { return policy.stages(); }
  StagePolicy stage(int j, std::size_t s) const { return policy.stage(j, s); }
  const Belief& belief(int j, std::size_t s) const { return beliefs.at(j, s); }
};

/// Occupancy-weighted forward application of the planning update.
///
/// b[j+1][s'] mixes the posteriors of every predecessor s in proportion to
/// P(s^j = s) b[j][s](θ) L_θ(s' | s), i.e. it is P(θ | s^{j+1} = s') under the
/// profile. Unreachable (j, s) get the prior and are flagged.
inline BeliefTable forward_belief_pass(const OperationalGame& g, const PolicyTable& pol, std::size_t s0,
                                       const Belief& b0) {
  const std::size_t ns = g.num_states(), nt = g.num_modes();
  const int n = pol.stages();
  BeliefTable tab;
  tab.num_states = ns;
  tab.beliefs.assign(static_cast<std::size_t>(n) * ns, b0);
  tab.occupancy.assign(static_cast<std::size_t>(n) * ns, 0.0);
  tab.reachable.assign(static_cast<std::size_t>(n) * ns, 0);
  if (n == 0) return tab;
  tab.occupancy[s0] = 1.0;
  tab.reachable[s0] = 1;
  std::vector<double> num(ns * nt);
  for (int j = 0; j + 1 < n; ++j) {
    std::fill(num.begin(), num.end(), 0.0);
    for (std::size_t s = 0; s < ns; ++s) {
      const double occ = tab.occ(j, s);
      if (!(occ > 0.0)) continue;
      const auto sp = pol.stage(j, s);
      const Belief& b = tab.at(j, s);
      for (std::size_t t = 0; t < nt; ++t) {
        if (b[t] == 0.0) continue;
        for (std::size_t d = 0; d < g.num_defender_actions(); ++d) {
          const double pd = sp.defender_prob(t, d);
          if (pd == 0.0) continue;
          for (std::size_t a = 0; a < g.num_attacker_actions(); ++a) {
            const double w = occ * b[t] * pd * sp.attacker[a];
            if (w == 0.0) continue;
            const auto row = g.next_state_dist(t, s, d, a);
            for (std::size_t s2 = 0; s2 < ns; ++s2) num[s2 * nt + t] += w * row[s2];
          }
        }
      }
    }
    for (std::size_t s2 = 0; s2 < ns; ++s2) {
      std::vector<double> w(num.begin() + static_cast<long>(s2 * nt), num.begin() + static_cast<long>((s2 + 1) * nt));
      double z = 0.0;
      for (double v : w) z += v;
      const std::size_t idx = static_cast<std::size_t>(j + 1) * ns + s2;
      tab.occupancy[idx] = z;
      if (z > 0.0) {
        tab.beliefs[idx] = *Belief::normalized(std::move(w));
        tab.reachable[idx] = 1;
      }
    }
  }
  return tab;
}

/// Builds the stage-game tables at (s) given next-stage defender values next[s'][θ].
/// The attacker's continuation is the per-mode negation (zero-sum).
inline void effective_payoffs(const OperationalGame& g, std::size_t s, const Tensor<2>& next, Tensor<3>& eff_d,
                              Tensor<3>& eff_a) {
  const std::size_t ns = g.num_states(), nt = g.num_modes(), nd = g.num_defender_actions(),
                    na = g.num_attacker_actions();
  eff_d = Tensor<3>({nt, nd, na});
  eff_a = Tensor<3>({nt, nd, na});
  for (std::size_t t = 0; t < nt; ++t)
    for (std::size_t d = 0; d < nd; ++d)
      for (std::size_t a = 0; a < na; ++a) {
        double cont = 0.0;
        const auto row = g.next_state_dist(t, s, d, a);
        for (std::size_t s2 = 0; s2 < ns; ++s2) cont += row[s2] * next(s2, t);
        eff_d(t, d, a) = g.reward_d(t, s, d, a) + g.discount * cont;
        eff_a(t, d, a) = g.reward_a(t, s, d, a) - g.discount * cont;
      }
}

struct BackwardResult {
  PolicyTable policy;
  Tensor<3> value_d;
  Tensor<2> value_a;
};

/// Solves every stage game from the last local stage back to the first, using
/// `continuation` as the defender's value after the last stage.
/// When `warm` is given, stage solutions keep its policies wherever they remain optimal.
inline BackwardResult backward_pass(const OperationalGame& g, const BeliefTable& beliefs, const Tensor<2>& continuation,
                                    int stages, const SolverSettings& settings, const PolicyTable* warm = nullptr) {
  const std::size_t ns = g.num_states(), nt = g.num_modes(), nd = g.num_defender_actions(),
                    na = g.num_attacker_actions();
  const auto n = static_cast<std::size_t>(stages);
  BackwardResult out{PolicyTable::uniform(g, stages), Tensor<3>({n, ns, nt}), Tensor<2>({n, ns})};
  Tensor<2> next = continuation;
  for (int j = stages - 1; j >= 0; --j) {
    parallel_for(ns, settings.threads, [&](std::size_t s) {
      Tensor<3> eff_d, eff_a;
      effective_payoffs(g, s, next, eff_d, eff_a);
      StagePolicy prev;
      if (warm != nullptr) prev = warm->stage(j, s);
      const auto sol =
          solve_stage_game(s, beliefs.at(j, s), eff_d, eff_a, settings.lp_tolerance, warm ? &prev : nullptr);
      for (std::size_t t = 0; t < nt; ++t) {
        for (std::size_t d = 0; d < nd; ++d) out.policy.defender(j, s, t, d) = sol.defender[t * nd + d];
        out.value_d(j, s, t) = sol.value_d[t];
      }
      for (std::size_t a = 0; a < na; ++a) out.policy.attacker(j, s, a) = sol.attacker[a];
      out.value_a(j, s) = sol.value_a;
    });
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t t = 0; t < nt; ++t) next(s, t) = out.value_d(j, s, t);
  }
  return out;
}

struct EpsilonReport {
  double epsilon = 0.0;
  double defender_gain = 0.0;
  double attacker_gain = 0.0;
  int stage = 0;  // local stage of the worst gain
  std::size_t state = 0;
};

/// Largest gain either player obtains by deviating from any stage onward.
///
/// The defender's deviation is an exact per-mode MDP best response to the
/// attacker policy. The attacker's is a dynamic program over per-mode values
/// where each stage chooses the action maximizing the belief-table-weighted
/// payoff; where the profile's own mixture is already optimal within the LP
/// tolerance it is kept, so an exact equilibrium certifies at zero.
inline EpsilonReport certify_epsilon_report(const OperationalGame& g, const OperationalProfile& p,
                                            double lp_tolerance = 1e-9) {
  const std::size_t ns = g.num_states(), nt = g.num_modes(), nd = g.num_defender_actions(),
                    na = g.num_attacker_actions();
  const int n = p.stages();
  double scale = 1.0;
  for (double v : g.reward_d.data()) scale = std::max(scale, std::abs(v));
  for (double v : p.continuation.data()) scale = std::max(scale, std::abs(v));
  const double keep_tol = lp_tolerance * scale * 10.0;

  Tensor<2> d_best = p.continuation, d_prof = p.continuation;
  Tensor<2> a_best({ns, nt}), a_prof({ns, nt});
  for (std::size_t i = 0; i < a_best.size(); ++i) a_best.data()[i] = a_prof.data()[i] = -p.continuation.data()[i];

  EpsilonReport rep;
  auto note = [&](double gain, bool defender, int j, std::size_t s) {
    double& slot = defender ? rep.defender_gain : rep.attacker_gain;
    slot = std::max(slot, gain);
    if (gain > rep.epsilon) {
      rep.epsilon = gain;
      rep.stage = j;
      rep.state = s;
    }
  };

  auto q_value = [&](std::size_t t, std::size_t s, std::size_t d, std::size_t a, const Tensor<2>& next,
                     const Tensor<4>& r) {
    double cont = 0.0;
    const auto row = g.next_state_dist(t, s, d, a);
    for (std::size_t s2 = 0; s2 < ns; ++s2) cont += row[s2] * next(s2, t);
    return r(t, s, d, a) + g.discount * cont;
  };

  for (int j = n - 1; j >= 0; --j) {
    Tensor<2> nd_best({ns, nt}), nd_prof({ns, nt}), na_best({ns, nt}), na_prof({ns, nt});
    for (std::size_t s = 0; s < ns; ++s) {
      const auto sp = p.stage(j, s);
      // Defender, per mode.
      for (std::size_t t = 0; t < nt; ++t) {
        std::vector<double> qb(nd, 0.0), qp(nd, 0.0);
        for (std::size_t d = 0; d < nd; ++d)
          for (std::size_t a = 0; a < na; ++a) {
            qb[d] += sp.attacker[a] * q_value(t, s, d, a, d_best, g.reward_d);
            qp[d] += sp.attacker[a] * q_value(t, s, d, a, d_prof, g.reward_d);
          }
        double mix_b = 0.0, mix_p = 0.0;
        for (std::size_t d = 0; d < nd; ++d) {
          mix_b += sp.defender_prob(t, d) * qb[d];
          mix_p += sp.defender_prob(t, d) * qp[d];
        }
        const double top = *std::max_element(qb.begin(), qb.end());
        nd_best(s, t) = mix_b >= top - keep_tol ? mix_b : top;
        nd_prof(s, t) = mix_p;
        note(nd_best(s, t) - mix_p, true, j, s);
      }
      // Attacker, belief-weighted over modes.
      const Belief& b = p.belief(j, s);
      std::vector<std::vector<double>> qb(na, std::vector<double>(nt, 0.0)), qp = qb;
      std::vector<double> avg_b(na, 0.0);
      for (std::size_t a = 0; a < na; ++a)
        for (std::size_t t = 0; t < nt; ++t) {
          for (std::size_t d = 0; d < nd; ++d) {
            const double pd = sp.defender_prob(t, d);
            if (pd == 0.0) continue;
            qb[a][t] += pd * q_value(t, s, d, a, a_best, g.reward_a);
            qp[a][t] += pd * q_value(t, s, d, a, a_prof, g.reward_a);
          }
          avg_b[a] += b[t] * qb[a][t];
        }
      double mix_avg = 0.0, prof_avg = 0.0;
      for (std::size_t a = 0; a < na; ++a) mix_avg += sp.attacker[a] * avg_b[a];
      for (std::size_t t = 0; t < nt; ++t) {
        double v = 0.0;
        for (std::size_t a = 0; a < na; ++a) v += sp.attacker[a] * qp[a][t];
        na_prof(s, t) = v;
        prof_avg += b[t] * v;
      }
      std::size_t arg = 0;
      for (std::size_t a = 1; a < na; ++a)
        if (avg_b[a] > avg_b[arg]) arg = a;
      const bool keep = mix_avg >= avg_b[arg] - keep_tol;
      for (std::size_t t = 0; t < nt; ++t) {
        double v = 0.0;
        if (keep)
          for (std::size_t a = 0; a < na; ++a) v += sp.attacker[a] * qb[a][t];
        else
          v = qb[arg][t];
        na_best(s, t) = v;
      }
      note((keep ? mix_avg : avg_b[arg]) - prof_avg, false, j, s);
    }
    d_best = std::move(nd_best);
    d_prof = std::move(nd_prof);
    a_best = std::move(na_best);
    a_prof = std::move(na_prof);
  }
  return rep;
}

inline double certify_epsilon(const OperationalGame& g, const OperationalProfile& p, double lp_tolerance = 1e-9) {
  return certify_epsilon_report(g, p, lp_tolerance).epsilon;
}

/// Defender continuation after the game's last stage for the given settings.
inline Tensor<2> terminal_continuation(const OperationalGame& g, const StrategicConfig& c, const SolverSettings& st) {
  Tensor<2> cont({g.num_states(), g.num_modes()});
  if (st.terminal_continuation)
    for (std::size_t s = 0; s < g.num_states(); ++s)
      for (std::size_t t = 0; t < g.num_modes(); ++t) cont(s, t) = c.terminal_reward[s];
  return cont;
}

namespace detail {

/// Action values of a fixed profile: q_d[j][s][θ][a_D] against the attacker's
/// mixture, q_a[j][s][a_A] against the belief-weighted defender mixture, and
/// the per-mode defender values v[j][s][θ] they induce.
struct ProfileValues {
  Tensor<4> q_d;
  Tensor<3> q_a;
  Tensor<3> v;
};

inline ProfileValues evaluate_profile(const OperationalGame& g, const PolicyTable& pol, const BeliefTable& beliefs,
                                      const Tensor<2>& continuation) {
  const std::size_t ns = g.num_states(), nt = g.num_modes(), nd = g.num_defender_actions(),
                    na = g.num_attacker_actions();
  const int n = pol.stages();
  const auto nn = static_cast<std::size_t>(n);
  ProfileValues out{Tensor<4>({nn, ns, nt, nd}), Tensor<3>({nn, ns, na}), Tensor<3>({nn, ns, nt})};
  Tensor<3> q({nt, nd, na});
  for (int j = n - 1; j >= 0; --j) {
    for (std::size_t s = 0; s < ns; ++s) {
      const auto sp = pol.stage(j, s);
      const Belief& b = beliefs.at(j, s);
      for (std::size_t t = 0; t < nt; ++t)
        for (std::size_t d = 0; d < nd; ++d)
          for (std::size_t a = 0; a < na; ++a) {
            const auto row = g.next_state_dist(t, s, d, a);
            double cont = 0.0;
            for (std::size_t s2 = 0; s2 < ns; ++s2)
              cont += row[s2] * (j + 1 < n ? out.v(j + 1, s2, t) : continuation(s2, t));
            q(t, d, a) = g.reward_d(t, s, d, a) + g.discount * cont;
            out.q_d(j, s, t, d) += sp.attacker[a] * q(t, d, a);
            out.q_a(j, s, a) += b[t] * sp.defender_prob(t, d) * (g.reward_a(t, s, d, a) - g.discount * cont);
          }
      for (std::size_t t = 0; t < nt; ++t) {
        double v = 0.0;
        for (std::size_t d = 0; d < nd; ++d) v += sp.defender_prob(t, d) * out.q_d(j, s, t, d);
        out.v(j, s, t) = v;
      }
    }
  }
  return out;
}

// Dense Gaussian elimination with partial pivoting; false when singular.
inline bool solve_dense(std::vector<double> a, std::vector<double>& rhs, std::size_t n) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    if (std::abs(a[piv * n + c]) < 1e-300) return false;
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
      std::swap(rhs[c], rhs[piv]);
    }
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / a[c * n + c];
      if (f == 0.0) continue;
      for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
      rhs[r] -= f * rhs[c];
    }
  }
  for (std::size_t c = n; c-- > 0;) {
    double acc = rhs[c];
    for (std::size_t k = c + 1; k < n; ++k) acc -= a[c * n + k] * rhs[k];
    rhs[c] = acc / a[c * n + c];
  }
  return true;
}

/// One player's mixing support at one (stage, state); mode < 0 marks the attacker.
struct SupportCell {
  int stage = 0;
  std::size_t state = 0;
  int mode = -1;
  std::vector<std::size_t> actions;
};

/// Union of the supports seen across `tables`, for cells where it has two or more actions.
inline std::vector<SupportCell> union_supports(const OperationalGame& g, const std::vector<PolicyTable>& tables) {
  const std::size_t ns = g.num_states(), nt = g.num_modes(), nd = g.num_defender_actions(),
                    na = g.num_attacker_actions();
  std::vector<SupportCell> cells;
  const int n = tables.front().stages();
  for (int j = 0; j < n; ++j)
    for (std::size_t s = 0; s < ns; ++s) {
      for (int t = -1; t < static_cast<int>(nt); ++t) {
        SupportCell c{j, s, t, {}};
        const std::size_t m = t < 0 ? na : nd;
        for (std::size_t i = 0; i < m; ++i) {
          bool used = false;
          for (const auto& tab : tables) {
            const double p = t < 0 ? tab.attacker(j, s, i) : tab.defender(j, s, t, i);
            used = used || p > 1e-12;
          }
          if (used) c.actions.push_back(i);
        }
        if (c.actions.size() >= 2) cells.push_back(std::move(c));
      }
    }
  return cells;
}

/// Solves the indifference conditions of every support cell for the mixing
/// probabilities (softmax-parametrized, so iterates stay on the simplex) by
/// Levenberg-Marquardt. Policies outside the cells are held fixed.
inline PolicyTable solve_indifference(const OperationalGame& g, const PolicyTable& start,
                                      const std::vector<SupportCell>& cells, std::size_t s0, const Belief& b0,
                                      const Tensor<2>& continuation, int max_steps = 60) {
  std::size_t dim = 0;
  for (const auto& c : cells) dim += c.actions.size() - 1;
  if (dim == 0) return start;

  std::vector<double> z(dim);
  {
    std::size_t k = 0;
    for (const auto& c : cells) {
      auto prob = [&](std::size_t i) {
        const double p = c.mode < 0 ? start.attacker(c.stage, c.state, i) : start.defender(c.stage, c.state, c.mode, i);
        return std::log(std::max(p, 1e-4));
      };
      const double base = prob(c.actions[0]);
      for (std::size_t i = 1; i < c.actions.size(); ++i) z[k++] = prob(c.actions[i]) - base;
    }
  }
  auto apply = [&](const std::vector<double>& zz) {
    PolicyTable p = start;
    std::size_t k = 0;
    for (const auto& c : cells) {
      const std::size_t m = c.actions.size();
      std::vector<double> w(m, 0.0);
      double top = 0.0;
      for (std::size_t i = 1; i < m; ++i) top = std::max(top, zz[k + i - 1]);
      double sum = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        w[i] = std::exp((i == 0 ? 0.0 : zz[k + i - 1]) - top);
        sum += w[i];
      }
      const std::size_t width = c.mode < 0 ? g.num_attacker_actions() : g.num_defender_actions();
      for (std::size_t i = 0; i < width; ++i) {
        double& slot = c.mode < 0 ? p.attacker(c.stage, c.state, i) : p.defender(c.stage, c.state, c.mode, i);
        slot = 0.0;
      }
      for (std::size_t i = 0; i < m; ++i) {
        double& slot = c.mode < 0 ? p.attacker(c.stage, c.state, c.actions[i])
                                  : p.defender(c.stage, c.state, c.mode, c.actions[i]);
        slot = w[i] / sum;
      }
      k += m - 1;
    }
    return p;
  };
  auto residual = [&](const std::vector<double>& zz) {
    const PolicyTable p = apply(zz);
    const BeliefTable bt = forward_belief_pass(g, p, s0, b0);
    const ProfileValues pv = evaluate_profile(g, p, bt, continuation);
    std::vector<double> r;
    r.reserve(dim);
    for (const auto& c : cells) {
      auto q = [&](std::size_t i) {
        return c.mode < 0 ? pv.q_a(c.stage, c.state, i) : pv.q_d(c.stage, c.state, c.mode, i);
      };
      for (std::size_t i = 1; i < c.actions.size(); ++i) r.push_back(q(c.actions[i]) - q(c.actions[0]));
    }
    return r;
  };
  auto norm2 = [](const std::vector<double>& r) {
    double acc = 0.0;
    for (double v : r) acc += v * v;
    return acc;
  };

  std::vector<double> r = residual(z);
  double cost = norm2(r), mu = 1e-3;
  std::vector<double> jac(dim * dim);
  for (int step = 0; step < max_steps && cost > 1e-26; ++step) {
    for (std::size_t c = 0; c < dim; ++c) {
      auto zp = z;
      const double h = 1e-7 * std::max(1.0, std::abs(z[c]));
      zp[c] += h;
      const auto rp = residual(zp);
      for (std::size_t i = 0; i < dim; ++i) jac[i * dim + c] = (rp[i] - r[i]) / h;
    }
    std::vector<double> jtj(dim * dim, 0.0), jtr(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t a = 0; a < dim; ++a) {
        const double jia = jac[i * dim + a];
        if (jia == 0.0) continue;
        jtr[a] += jia * r[i];
        for (std::size_t b = 0; b < dim; ++b) jtj[a * dim + b] += jia * jac[i * dim + b];
      }
    bool improved = false;
    for (int tries = 0; tries < 12 && !improved; ++tries) {
      auto m = jtj;
      std::vector<double> delta(dim);
      for (std::size_t a = 0; a < dim; ++a) {
        m[a * dim + a] += mu * (1.0 + jtj[a * dim + a]);
        delta[a] = -jtr[a];
      }
      if (solve_dense(m, delta, dim)) {
        auto zn = z;
        for (std::size_t a = 0; a < dim; ++a) zn[a] += std::clamp(delta[a], -20.0, 20.0);
        const auto rn = residual(zn);
        const double cn = norm2(rn);
        if (cn < cost) {
          z = std::move(zn);
          r = rn;
          cost = cn;
          mu = std::max(mu * 0.2, 1e-12);
          improved = true;
          break;
        }
      }
      mu *= 10.0;
    }
    if (!improved) break;
  }
  return apply(z);
}

/// Indifference solve with support pruning: actions the solve drives to
/// (near) zero probability while strictly worse are dropped and the rest re-solved.
inline PolicyTable polish_on_supports(const OperationalGame& g, PolicyTable start, std::vector<SupportCell> cells,
                                      std::size_t s0, const Belief& b0, const Tensor<2>& continuation) {
  for (int round = 0; round < 8 && !cells.empty(); ++round) {
    PolicyTable p = solve_indifference(g, start, cells, s0, b0, continuation);
    const BeliefTable bt = forward_belief_pass(g, p, s0, b0);
    const ProfileValues pv = evaluate_profile(g, p, bt, continuation);
    bool pruned = false;
    std::vector<SupportCell> kept;
    for (auto& c : cells) {
      auto prob = [&](std::size_t i) {
        return c.mode < 0 ? p.attacker(c.stage, c.state, i) : p.defender(c.stage, c.state, c.mode, i);
      };
      auto q = [&](std::size_t i) {
        return c.mode < 0 ? pv.q_a(c.stage, c.state, i) : pv.q_d(c.stage, c.state, c.mode, i);
      };
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t i : c.actions) top = std::max(top, q(i));
      SupportCell next = c;
      next.actions.clear();
      for (std::size_t i : c.actions)
        if (prob(i) > 1e-6 || q(i) >= top - 1e-9 * std::max(1.0, std::abs(top))) next.actions.push_back(i);
      if (next.actions.size() != c.actions.size()) pruned = true;
      if (next.actions.size() >= 2) {
        kept.push_back(std::move(next));
      } else if (next.actions.size() == 1) {
        // Collapse the cell onto its surviving action.
        const std::size_t width = c.mode < 0 ? g.num_attacker_actions() : g.num_defender_actions();
        for (std::size_t i = 0; i < width; ++i) {
          double& slot = c.mode < 0 ? p.attacker(c.stage, c.state, i) : p.defender(c.stage, c.state, c.mode, i);
          slot = i == next.actions[0] ? 1.0 : 0.0;
        }
      }
    }
    start = std::move(p);
    if (!pruned) break;
    cells = std::move(kept);
  }
  return start;
}

}  // namespace detail

/// Forward-backward ε-PBNE iteration over `stages` local stages starting at
/// (s0, b0).
///
/// Each sweep solves every stage game on the beliefs the previous policies
/// induce, keeping a previous policy wherever it is still optimal. When the
/// sweeps cycle, the cycle usually straddles a mixed equilibrium that no single
/// LP vertex reaches; the union of the cycling supports is then handed to
/// polish_on_supports, and the sweeps resume from the polished policies. Every
/// sweep yields a candidate (policies, their forward beliefs) and the one with
/// the smallest certified ε is returned.
inline OperationalProfile solve_window(const OperationalGame& g, std::size_t s0, const Belief& b0, int stages,
                                       const Tensor<2>& continuation, const SolverSettings& settings,
                                       int first_stage = 0) {
  settings.validate(g);
  if (stages < 1) throw InvalidModel("solver window needs at least one stage");
  if (b0.size() != g.num_modes()) throw InvalidModel("prior dimension differs from the mode count");
  const std::size_t ns = g.num_states(), nt = g.num_modes();

  OperationalProfile best;
  best.epsilon = std::numeric_limits<double>::infinity();
  std::vector<double> change_log, eps_log;
  auto consider = [&](const PolicyTable& pol) {
    OperationalProfile cand;
    cand.first_stage = first_stage;
    cand.policy = pol;
    cand.beliefs = forward_belief_pass(g, pol, s0, b0);
    cand.continuation = continuation;
    cand.value_d = detail::evaluate_profile(g, pol, cand.beliefs, continuation).v;
    cand.value_a = Tensor<2>({static_cast<std::size_t>(stages), ns});
    for (int j = 0; j < stages; ++j)
      for (std::size_t s = 0; s < ns; ++s) {
        double v = 0.0;
        for (std::size_t t = 0; t < nt; ++t) v -= cand.belief(j, s)[t] * cand.value_d(j, s, t);
        cand.value_a(j, s) = v;
      }
    cand.epsilon = certify_epsilon(g, cand, settings.lp_tolerance);
    eps_log.push_back(cand.epsilon);
    if (cand.epsilon < best.epsilon) best = std::move(cand);
  };

  PolicyTable current = PolicyTable::uniform(g, stages);
  std::vector<PolicyTable> recent;
  bool converged = false;
  int polishes = 0, it = 0;
  for (it = 1; it <= settings.max_iterations; ++it) {
    const BeliefTable beliefs = forward_belief_pass(g, current, s0, b0);
    BackwardResult br = backward_pass(g, beliefs, continuation, stages, settings, it > 1 ? &current : nullptr);
    const double change = br.policy.distance(current);
    change_log.push_back(change);
    consider(br.policy);
    if (it > 1 && change <= settings.policy_tolerance) {
      converged = true;
      break;
    }
    current = std::move(br.policy);
    recent.push_back(current);
    if (recent.size() > 4) recent.erase(recent.begin());
    const bool cycling = recent.size() == 4 && (recent[3].distance(recent[1]) <= settings.policy_tolerance ||
                                                recent[3].distance(recent[0]) <= settings.policy_tolerance);
    if (polishes < settings.polish_rounds && (cycling || (recent.size() == 4 && it % 12 == 0))) {
      PolicyTable mean = recent.front();
      for (std::size_t r = 1; r < recent.size(); ++r) {
        const double w = 1.0 / static_cast<double>(r + 1);
        for (std::size_t i = 0; i < mean.defender.size(); ++i)
          mean.defender.data()[i] += w * (recent[r].defender.data()[i] - mean.defender.data()[i]);
        for (std::size_t i = 0; i < mean.attacker.size(); ++i)
          mean.attacker.data()[i] += w * (recent[r].attacker.data()[i] - mean.attacker.data()[i]);
      }
      current = detail::polish_on_supports(g, mean, detail::union_supports(g, recent), s0, b0, continuation);
      consider(current);
      recent.clear();
      ++polishes;
    }
  }
  best.converged = converged;
  best.iterations = std::min(it, settings.max_iterations);
  best.change_log = std::move(change_log);
  best.epsilon_log = std::move(eps_log);
  return best;
}

/// Full-horizon solve from the configured initial state and prior.
inline OperationalProfile solve_pbne(const OperationalGame& g, const StrategicConfig& c, const SolverSettings& st) {
  g.validate();
  c.validate(g);
  if (!g.is_zero_sum(1e-9)) throw NotSupported("exact stage solving requires a zero-sum game (r_A = -r_D)");
  return solve_window(g, static_cast<std::size_t>(c.initial_state), c.prior, g.horizon + 1,
                      terminal_continuation(g, c, st), st, 0);
}

/// FNV-1a over the policy and belief contents.
inline std::uint64_t fingerprint(const OperationalProfile& p) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* data, std::size_t bytes) {
    const auto* c = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= c[i];
      h *= 1099511628211ULL;
    }
  };
  const std::int64_t dims[3] = {p.first_stage, p.stages(), static_cast<std::int64_t>(p.beliefs.num_states)};
  mix(dims, sizeof dims);
  mix(p.policy.defender.data().data(), p.policy.defender.size() * sizeof(double));
  mix(p.policy.attacker.data().data(), p.policy.attacker.size() * sizeof(double));
  for (const auto& b : p.beliefs.beliefs) mix(b.probs().data(), b.size() * sizeof(double));
  mix(p.continuation.data().data(), p.continuation.size() * sizeof(double));
  return h;
}

inline std::string fingerprint_hex(std::uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Plain-text dump of policies, beliefs and values per (k, s, θ).
inline void write_profile(std::ostream& os, const OperationalGame& g, const OperationalProfile& p) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  os << "profile v1\n";
  os << "fingerprint " << fingerprint_hex(fingerprint(p)) << "\n";
  os << "first_stage " << p.first_stage << "\nstages " << p.stages() << "\n";
  os << "epsilon " << num(p.epsilon) << "\nconverged " << (p.converged ? 1 : 0) << "\niterations " << p.iterations
     << "\n";
  for (int j = 0; j < p.stages(); ++j)
    for (std::size_t s = 0; s < g.num_states(); ++s) {
      os << "stage " << (p.first_stage + j) << " state " << g.states[s] << " reachable "
         << (p.beliefs.is_reachable(j, s) ? 1 : 0) << " occupancy " << num(p.beliefs.occ(j, s)) << "\n";
      os << "  belief";
      for (double v : p.belief(j, s).probs()) os << ' ' << num(v);
      os << "\n  attacker";
      for (double v : p.policy.attacker.row(j, s)) os << ' ' << num(v);
      for (std::size_t t = 0; t < g.num_modes(); ++t) {
        os << "\n  defender " << g.modes[t];
        for (double v : p.policy.defender.row(j, s, t)) os << ' ' << num(v);
        os << " value " << num(p.value_d(j, s, t));
      }
      os << "\n  value_a " << num(p.value_a(j, s)) << "\n";
    }
}

}  // namespace cogarb
