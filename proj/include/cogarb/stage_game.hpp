#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cogarb/belief.hpp"
#include "cogarb/belief_update.hpp"
#include "cogarb/errors.hpp"
#include "cogarb/lp.hpp"
#include "cogarb/tensor.hpp"

namespace cogarb {

/// Equilibrium of one Bayesian stage game.
struct StageSolution {
  std::vector<double> defender;  // mode-major [θ * |A_D| + a_D]
  std::vector<double> attacker;  // [a_A]
  std::vector<double> value_d;   // v_D per mode
  double value_a = 0.0;          // v_A
  std::vector<double> nu_d;      // = -v_D at the optimum
  double nu_a = 0.0;             // = -v_A at the optimum
};

namespace detail {

inline void clean_distribution(std::vector<double>& p, std::size_t begin, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = begin; i < begin + n; ++i) {
    if (p[i] < 0.0) p[i] = 0.0;
    sum += p[i];
  }
  if (!(sum > 0.0)) throw NumericalFailure("stage program returned an empty distribution");
  for (std::size_t i = begin; i < begin + n; ++i) p[i] /= sum;
}

inline std::size_t best_index(const std::vector<double>& v, double tol) {
  const double top = *std::max_element(v.begin(), v.end());
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] >= top - tol) return i;
  return 0;
}

}  // namespace detail

/// Expected defender payoff of each a_D in mode θ against attacker mix y.
inline std::vector<double> defender_action_values(const Tensor<3>& eff_d, std::size_t mode,
                                                  std::span<const double> attacker) {
  const std::size_t nd = eff_d.extent(1), na = eff_d.extent(2);
  std::vector<double> out(nd, 0.0);
  for (std::size_t d = 0; d < nd; ++d)
    for (std::size_t a = 0; a < na; ++a) out[d] += eff_d(mode, d, a) * attacker[a];
  return out;
}

/// Belief-weighted expected attacker payoff of each a_A against the defender's composite policy.
inline std::vector<double> attacker_action_values(const Tensor<3>& eff_a, const Belief& b,
                                                  std::span<const double> defender) {
  const std::size_t nt = eff_a.extent(0), nd = eff_a.extent(1), na = eff_a.extent(2);
  std::vector<double> out(na, 0.0);
  for (std::size_t t = 0; t < nt; ++t) {
    if (b[t] == 0.0) continue;
    for (std::size_t d = 0; d < nd; ++d) {
      const double w = b[t] * defender[t * nd + d];
      if (w == 0.0) continue;
      for (std::size_t a = 0; a < na; ++a) out[a] += w * eff_a(t, d, a);
    }
  }
  return out;
}

/// Objective of the stage program at a candidate point, with weights alpha per mode.
/// Zero at an equilibrium where both constraint families are tight.
inline double stage_program_objective(const StageSolution& sol, const Belief& b, const Tensor<3>& eff_d,
                                      const Tensor<3>& eff_a, std::span<const double> alpha) {
  const std::size_t nt = eff_d.extent(0), nd = eff_d.extent(1);
  double obj = 0.0;
  for (std::size_t t = 0; t < nt; ++t) {
    const auto vals = defender_action_values(eff_d, t, sol.attacker);
    double e = 0.0;
    for (std::size_t d = 0; d < nd; ++d) e += sol.defender[t * nd + d] * vals[d];
    obj += alpha[t] * (sol.nu_d[t] + e);
  }
  const auto avals = attacker_action_values(eff_a, b, sol.defender);
  double ea = 0.0;
  for (std::size_t a = 0; a < avals.size(); ++a) ea += sol.attacker[a] * avals[a];
  return obj + sol.nu_a + ea;
}

/// Solves the stage game with effective payoff tables indexed [θ][a_D][a_A].
///
/// Only the zero-sum case (eff_a = -eff_d per mode) is solved exactly: the
/// attacker's side is the LP  min_y Σ_θ b(θ) max_{a_D} (Q_θ y)_{a_D}  and the
/// defender's side its dual over the product of per-mode simplices. Modes with
/// zero belief get a pure best response to y (lowest index on ties).
///
/// When `warm` is given, each player's previous policy is kept if it still lies
/// in that player's optimal set (within the tolerance). The equilibrium set of
/// a zero-sum game is a product, so mixing kept and fresh halves stays an
/// equilibrium, and the forward-backward iteration stops flipping between
/// vertices of a non-unique optimum.
inline StageSolution solve_stage_game(std::size_t state, const Belief& b, const Tensor<3>& eff_d,
                                      const Tensor<3>& eff_a, double lp_tolerance = 1e-9,
                                      const StagePolicy* warm = nullptr) {
  const std::size_t nt = eff_d.extent(0), nd = eff_d.extent(1), na = eff_d.extent(2);
  if (eff_a.shape() != eff_d.shape()) throw InvalidModel("stage payoff tables differ in shape");
  if (b.size() != nt) throw InvalidModel("belief dimension differs from the mode count");
  auto where = [&] {
    std::ostringstream os;
    os << " (state index " << state << ")";
    return os.str();
  };
  double scale = 1.0, lo = 0.0;
  for (std::size_t i = 0; i < eff_d.size(); ++i) {
    const double q = eff_d.data()[i];
    if (std::abs(q + eff_a.data()[i]) > 1e-9 * std::max(1.0, std::abs(q)))
      throw NotSupported("stage game is not zero-sum" + where());
    scale = std::max(scale, std::abs(q));
    lo = i == 0 ? q : std::min(lo, q);
  }
  const double shift = 1.0 - lo;  // makes every shifted payoff >= 1

  std::vector<std::size_t> active;
  for (std::size_t t = 0; t < nt; ++t)
    if (b[t] > 0.0) active.push_back(t);
  const std::size_t nact = active.size();

  // Attacker: variables (y, w); maximize -Σ b w.
  std::vector<double> y;
  {
    const std::size_t nv = na + nact;
    std::vector<std::vector<double>> a;
    std::vector<double> rhs, c(nv, 0.0);
    for (std::size_t j = 0; j < nact; ++j) {
      c[na + j] = -b[active[j]];
      for (std::size_t d = 0; d < nd; ++d) {
        std::vector<double> row(nv, 0.0);
        for (std::size_t k = 0; k < na; ++k) row[k] = eff_d(active[j], d, k) + shift;
        row[na + j] = -1.0;
        a.push_back(std::move(row));
        rhs.push_back(0.0);
      }
    }
    std::vector<double> ones(nv, 0.0);
    std::fill(ones.begin(), ones.begin() + static_cast<long>(na), 1.0);
    a.push_back(ones);
    rhs.push_back(1.0);
    for (auto& v : ones) v = -v;
    a.push_back(ones);
    rhs.push_back(-1.0);
    const auto res = solve_lp(a, rhs, c);
    if (res.status != LpStatus::Optimal) throw NumericalFailure("attacker stage program failed" + where());
    y.assign(res.x.begin(), res.x.begin() + static_cast<long>(na));
    detail::clean_distribution(y, 0, na);
  }

  // Defender: variables (x_θ for active θ, t); maximize t.
  std::vector<double> x(nt * nd, 0.0);
  {
    const std::size_t nv = nact * nd + 1;
    std::vector<std::vector<double>> a;
    std::vector<double> rhs, c(nv, 0.0);
    c[nv - 1] = 1.0;
    for (std::size_t k = 0; k < na; ++k) {
      std::vector<double> row(nv, 0.0);
      for (std::size_t j = 0; j < nact; ++j)
        for (std::size_t d = 0; d < nd; ++d) row[j * nd + d] = -b[active[j]] * (eff_d(active[j], d, k) + shift);
      row[nv - 1] = 1.0;
      a.push_back(std::move(row));
      rhs.push_back(0.0);
    }
    for (std::size_t j = 0; j < nact; ++j) {
      std::vector<double> row(nv, 0.0);
      for (std::size_t d = 0; d < nd; ++d) row[j * nd + d] = 1.0;
      a.push_back(row);
      rhs.push_back(1.0);
      for (auto& v : row) v = -v;
      a.push_back(std::move(row));
      rhs.push_back(-1.0);
    }
    const auto res = solve_lp(a, rhs, c);
    if (res.status != LpStatus::Optimal) throw NumericalFailure("defender stage program failed" + where());
    for (std::size_t j = 0; j < nact; ++j) {
      std::copy_n(res.x.begin() + static_cast<long>(j * nd), nd, x.begin() + static_cast<long>(active[j] * nd));
      detail::clean_distribution(x, active[j] * nd, nd);
    }
  }

  const double keep_tol = lp_tolerance * scale;
  auto mode_gap = [&](std::span<const double> xs, std::size_t t) {
    const auto vals = defender_action_values(eff_d, t, y);
    double mix = 0.0;
    for (std::size_t d = 0; d < nd; ++d) mix += xs[t * nd + d] * vals[d];
    return *std::max_element(vals.begin(), vals.end()) - mix;
  };
  if (warm != nullptr) {
    // Game value from the fresh attacker solution: Σ_θ b(θ) max_{a_D} (Q_θ y)_{a_D}.
    auto upper = [&](std::span<const double> yy) {
      double v = 0.0;
      for (std::size_t t : active) {
        const auto vals = defender_action_values(eff_d, t, yy);
        v += b[t] * *std::max_element(vals.begin(), vals.end());
      }
      return v;
    };
    auto lower = [&](std::span<const double> xx) {
      double v = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < na; ++k) {
        double acc = 0.0;
        for (std::size_t t : active)
          for (std::size_t d = 0; d < nd; ++d) acc += b[t] * xx[t * nd + d] * eff_d(t, d, k);
        v = std::min(v, acc);
      }
      return v;
    };
    const double value = upper(y);
    if (upper(warm->attacker) <= value + keep_tol) y.assign(warm->attacker.begin(), warm->attacker.end());
    bool keep_x = lower(warm->defender) >= value - keep_tol;
    for (std::size_t t : active) keep_x = keep_x && mode_gap(warm->defender, t) <= keep_tol;
    if (keep_x)
      for (std::size_t t : active)
        std::copy_n(warm->defender.begin() + static_cast<long>(t * nd), nd, x.begin() + static_cast<long>(t * nd));
  }

  // Per-mode best responses: modes without belief mass get one outright, and a
  // low-mass mode whose LP row drifted off its best response is snapped back
  // (its effect on the attacker is bounded by its belief weight).
  double snapped_mass = 0.0;  // attacker-side slack introduced by snapping low-mass rows
  for (std::size_t t = 0; t < nt; ++t) {
    if (b[t] > 0.0 && mode_gap(x, t) <= keep_tol) continue;
    if (b[t] > 0.0) {
      double lo_q = eff_d(t, 0, 0), hi_q = lo_q;
      for (std::size_t d = 0; d < nd; ++d)
        for (std::size_t k = 0; k < na; ++k) {
          lo_q = std::min(lo_q, eff_d(t, d, k));
          hi_q = std::max(hi_q, eff_d(t, d, k));
        }
      snapped_mass += b[t] * (hi_q - lo_q);
    }
    if (b[t] == 0.0 && warm != nullptr && mode_gap(warm->defender, t) <= keep_tol) {
      std::copy_n(warm->defender.begin() + static_cast<long>(t * nd), nd, x.begin() + static_cast<long>(t * nd));
      continue;
    }
    std::fill_n(x.begin() + static_cast<long>(t * nd), nd, 0.0);
    x[t * nd + detail::best_index(defender_action_values(eff_d, t, y), keep_tol)] = 1.0;
  }

  StageSolution sol;
  sol.value_d.assign(nt, 0.0);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto vals = defender_action_values(eff_d, t, y);
    for (std::size_t d = 0; d < nd; ++d) sol.value_d[t] += x[t * nd + d] * vals[d];
  }
  const auto avals = attacker_action_values(eff_a, b, x);
  for (std::size_t k = 0; k < na; ++k) sol.value_a += y[k] * avals[k];

  // Both constraint families must be tight at the returned point.
  const double tol = keep_tol * 10.0;
  for (std::size_t t = 0; t < nt; ++t)
    if (mode_gap(x, t) > tol) throw NumericalFailure("defender constraint not tight at the stage solution" + where());
  if (*std::max_element(avals.begin(), avals.end()) - sol.value_a > tol + snapped_mass)
    throw NumericalFailure("attacker constraint not tight at the stage solution" + where());

  sol.defender = std::move(x);
  sol.attacker = std::move(y);
  sol.nu_d.resize(nt);
  for (std::size_t t = 0; t < nt; ++t) sol.nu_d[t] = -sol.value_d[t];
  sol.nu_a = -sol.value_a;
  return sol;
}

}  // namespace cogarb
