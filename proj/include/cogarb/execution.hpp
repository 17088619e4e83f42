#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cogarb/belief.hpp"
#include "cogarb/belief_update.hpp"
#include "cogarb/errors.hpp"
#include "cogarb/game_model.hpp"
#include "cogarb/parallel.hpp"
#include "cogarb/pbne.hpp"
#include "cogarb/planner.hpp"

namespace cogarb {

struct SwitchStrategy {
  enum class Kind { NoSwitch, FixedTiming, UniformInterval, OptimalPlaybook };
  Kind kind = Kind::OptimalPlaybook;
  int fixed_mode = 0;
  std::vector<std::pair<int, int>> timing;  // (stage, mode)
  std::vector<int> order;                   // uniform-interval modes

  static SwitchStrategy no_switch(int mode) { return {Kind::NoSwitch, mode, {}, {}}; }
  static SwitchStrategy fixed(std::vector<std::pair<int, int>> t) { return {Kind::FixedTiming, 0, std::move(t), {}}; }
  static SwitchStrategy uniform(std::vector<int> modes) { return {Kind::UniformInterval, 0, {}, std::move(modes)}; }
  static SwitchStrategy optimal() { return {Kind::OptimalPlaybook, 0, {}, {}}; }

  /// Switch stages and modes for the scheduled variants over a horizon of K stages.
  std::vector<std::pair<int, int>> schedule(int horizon) const {
    if (kind == Kind::FixedTiming) return timing;
    std::vector<std::pair<int, int>> out;
    if (kind == Kind::UniformInterval) {
      const int n = static_cast<int>(order.size());
      for (int j = 1; j <= n; ++j) {
        const int stage = (j * horizon + n) / (n + 1);  // ceil(j K / (n + 1))
        out.emplace_back(stage, order[static_cast<std::size_t>(j - 1)]);
      }
    }
    return out;
  }

  std::string label() const {
    std::ostringstream os;
    switch (kind) {
      case Kind::NoSwitch: os << "noswitch:" << fixed_mode; break;
      case Kind::OptimalPlaybook: os << "opt"; break;
      case Kind::FixedTiming:
        os << "fixed:";
        for (std::size_t i = 0; i < timing.size(); ++i) os << (i ? ";" : "") << timing[i].first << "=" << timing[i].second;
        break;
      case Kind::UniformInterval:
        os << "uniform:";
        for (std::size_t i = 0; i < order.size(); ++i) os << (i ? ";" : "") << order[i];
        break;
    }
    return os.str();
  }
};

struct BiasModel {
  enum class Kind { Bayesian, ConfirmationBias, BaseRateNeglect };
  Kind kind = Kind::Bayesian;
  double lambda = 0.0;

  static BiasModel bayesian() { return {}; }
  static BiasModel confirmation(double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidModel("confirmation-bias lambda must lie in [0, 1]");
    return {Kind::ConfirmationBias, lambda};
  }
  static BiasModel base_rate_neglect() { return {Kind::BaseRateNeglect, 0.0}; }

  std::string label() const {
    if (kind == Kind::Bayesian) return "bayes";
    if (kind == Kind::BaseRateNeglect) return "brn";
    char buf[32];
    std::snprintf(buf, sizeof buf, "cb:%.6g", lambda);
    return buf;
  }
};

/// Attacker belief after observing (s, a_D, a_A, s'); nullopt when the
/// observation has zero likelihood under every mode the operator weighs.
inline std::optional<Belief> apply_bias(const BiasModel& bias, const Belief& b, std::size_t s, std::size_t a_d,
                                        std::size_t a_a, std::size_t s_next, const StagePolicy& pol,
                                        const OperationalGame& g) {
  switch (bias.kind) {
    case BiasModel::Kind::Bayesian: return bayes_update_expost(b, s, a_d, a_a, s_next, pol, g);
    case BiasModel::Kind::ConfirmationBias: {
      auto post = bayes_update_expost(b, s, a_d, a_a, s_next, pol, g);
      if (!post) return std::nullopt;
      return cb_update(b, *post, bias.lambda);
    }
    case BiasModel::Kind::BaseRateNeglect: return brn_update(s, a_d, a_a, s_next, pol, g);
  }
  return std::nullopt;
}

struct ExecutionSettings {
  int lookahead = 5;  // K'; each refinement covers min(K', remaining) further stages
  bool refine = true;
  SolverSettings solver;
  int threads = 1;

  void validate() const {
    if (lookahead < 1) throw InvalidModel("lookahead must be >= 1");
    if (threads < 1) throw InvalidModel("threads must be >= 1");
  }
};

struct StageRecord {
  int stage = 0;
  std::size_t state = 0;
  int mode = 0;
  std::size_t a_d = 0;
  std::size_t a_a = 0;
  double reward = 0.0;
  Belief belief;  // attacker belief after the update
  bool impossible = false;
};

struct EpisodeRecord {
  std::uint64_t seed = 0;
  Belief initial_belief;
  std::vector<StageRecord> stages;
  std::size_t terminal_state = 0;
  double total_reward = 0.0;
  std::vector<std::pair<int, int>> switches;  // (stage, new mode)
  std::vector<SuperiorityWindow> windows;
  int impossible_observations = 0;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of run `index` under `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ (index + 1));
}

namespace detail {

// Inverse-CDF draw with a 53-bit uniform; the last positive entry absorbs rounding.
inline std::size_t sample(std::mt19937_64& rng, std::span<const double> p) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    last = i;
    acc += p[i];
    if (u < acc) return i;
  }
  return last;
}

struct RefineKey {
  int stage;
  std::size_t state;
  std::vector<double> belief;
  friend auto operator<=>(const RefineKey&, const RefineKey&) = default;
};

struct DecisionKey {
  int stage;
  std::size_t state;
  std::vector<double> belief;
  int mode, m;
  std::uint32_t used;
  friend auto operator<=>(const DecisionKey&, const DecisionKey&) = default;
};

}  // namespace detail

/// Shared state for the episodes of one configuration: the offline profile,
/// refined windows keyed on the exact (k, s, b) and playbook decisions. Entries
/// are pure functions of their keys, so sharing them across threads does not
/// change results.
class ExecutionContext {
 public:
  ExecutionContext(const OperationalGame& g, const StrategicConfig& c, const OperationalProfile& offline,
                   ExecutionSettings settings)
      : g_(g), c_(c), offline_(offline), settings_(std::move(settings)) {
    settings_.validate();
    if (offline_.first_stage != 0 || offline_.stages() < g_.horizon + 1)
      throw InvalidModel("offline profile must cover stages 0..K");
  }

  const OperationalGame& game() const noexcept { return g_; }
  const StrategicConfig& config() const noexcept { return c_; }
  const ExecutionSettings& settings() const noexcept { return settings_; }
  StagePolicy offline_stage(int k, std::size_t s) const { return offline_.stage(k, s); }

  /// Profile whose local stage 0 is global stage k, started from (s, b).
  std::shared_ptr<const OperationalProfile> refined(int k, std::size_t s, const Belief& b) {
    if (!settings_.refine) return nullptr;
    detail::RefineKey key{k, s, std::vector<double>(b.probs().begin(), b.probs().end())};
    {
      std::lock_guard lock(mu_);
      if (auto it = refined_.find(key); it != refined_.end()) return it->second;
    }
    const int h = std::min(settings_.lookahead, g_.horizon - k);
    const int last = k + h;  // window covers k..last
    Tensor<2> cont({g_.num_states(), g_.num_modes()});
    if (last + 1 <= g_.horizon) {
      for (std::size_t s2 = 0; s2 < g_.num_states(); ++s2)
        for (std::size_t t = 0; t < g_.num_modes(); ++t) cont(s2, t) = offline_.value_d(last + 1, s2, t);
    } else {
      cont = offline_.continuation;
    }
    SolverSettings st = settings_.solver;
    st.threads = 1;
    auto prof = std::make_shared<const OperationalProfile>(solve_window(g_, s, b, h + 1, cont, st, k));
    std::lock_guard lock(mu_);
    return refined_.emplace(std::move(key), std::move(prof)).first->second;
  }

  /// Playbook decision at x̄ evaluated on the refined window layered over the offline profile.
  int decide(const ExtendedState& x, const OperationalProfile* window) {
    detail::DecisionKey key{x.stage, x.state, std::vector<double>(x.belief.probs().begin(), x.belief.probs().end()),
                            x.mode, x.switches_left, x.used};
    {
      std::lock_guard lock(mu_);
      if (auto it = decisions_.find(key); it != decisions_.end()) return it->second;
    }
    PolicyView view;
    if (window) view.add(*window);
    view.add(offline_);
    Playbook book = empty_playbook(c_, g_.horizon, 0);
    const int next = PlaybookBuilder(g_, c_, view, book).evaluate(x).second;
    std::lock_guard lock(mu_);
    decisions_.emplace(std::move(key), next);
    return next;
  }

  std::size_t refined_count() const {
    std::lock_guard lock(mu_);
    return refined_.size();
  }

 private:
  const OperationalGame& g_;
  const StrategicConfig& c_;
  const OperationalProfile& offline_;
  ExecutionSettings settings_;
  mutable std::mutex mu_;
  std::map<detail::RefineKey, std::shared_ptr<const OperationalProfile>> refined_;
  std::map<detail::DecisionKey, int> decisions_;
};

/// Rejects schedules that switch with no budget left, reuse a mode or leave the horizon.
inline void check_feasible(const SwitchStrategy& st, const OperationalGame& g, const StrategicConfig& c) {
  const int nt = static_cast<int>(g.num_modes());
  if (st.kind == SwitchStrategy::Kind::NoSwitch) {
    if (st.fixed_mode < 0 || st.fixed_mode >= nt) throw InfeasibleStrategy("no-switch mode out of range");
    return;
  }
  if (st.kind == SwitchStrategy::Kind::OptimalPlaybook) return;
  const auto sched = st.schedule(g.horizon);
  if (static_cast<int>(sched.size()) > c.budget)
    throw InfeasibleStrategy(st.label() + ": " + std::to_string(sched.size()) + " switches exceed the budget of " +
                             std::to_string(c.budget));
  std::uint32_t used = c.initial_used_mask();
  int prev = -1;
  for (const auto& [k, t] : sched) {
    if (k <= prev) throw InfeasibleStrategy(st.label() + ": switch stages must be strictly increasing");
    if (k < 0 || k >= g.horizon) throw InfeasibleStrategy(st.label() + ": switch stage outside 0..K-1");
    if (t < 0 || t >= nt) throw InfeasibleStrategy(st.label() + ": mode out of range");
    if ((used >> t) & 1u) throw InfeasibleStrategy(st.label() + ": mode " + std::to_string(t) + " already used");
    used |= 1u << t;
    prev = k;
  }
}

/// One engagement: refine, decide, act, observe, update, accumulate raw r_D.
inline EpisodeRecord execute_episode(ExecutionContext& ctx, const SwitchStrategy& strategy, const BiasModel& bias,
                                     std::uint64_t seed) {
  const OperationalGame& g = ctx.game();
  const StrategicConfig& c = ctx.config();
  check_feasible(strategy, g, c);
  std::mt19937_64 rng(seed);

  EpisodeRecord rec;
  rec.seed = seed;
  std::size_t s = static_cast<std::size_t>(c.initial_state);
  Belief b = c.prior;
  rec.initial_belief = b;
  int mode = strategy.kind == SwitchStrategy::Kind::NoSwitch ? strategy.fixed_mode : c.initial_mode;
  int m = strategy.kind == SwitchStrategy::Kind::NoSwitch ? 0 : c.budget;
  std::uint32_t used = c.initial_mode_used ? (1u << mode) : 0u;
  const auto sched = strategy.schedule(g.horizon);
  std::size_t next_sched = 0;

  std::vector<Belief> seen;
  std::vector<int> modes;
  double discount = 1.0;
  for (int k = 0; k < g.horizon; ++k) {
    const auto window = ctx.refined(k, s, b);

    int next = mode;
    if (strategy.kind == SwitchStrategy::Kind::OptimalPlaybook) {
      next = ctx.decide(ExtendedState{k, s, b, mode, m, used}, window.get());
    } else if (next_sched < sched.size() && sched[next_sched].first == k) {
      next = sched[next_sched++].second;
    }
    if (next != mode) {
      if (m <= 0 || ((used >> next) & 1u)) throw InfeasibleStrategy("switch at stage " + std::to_string(k) + " is infeasible");
      --m;
      used |= 1u << next;
      mode = next;
      rec.switches.emplace_back(k, mode);
    }
    seen.push_back(b);
    modes.push_back(mode);

    const StagePolicy pol = window ? window->stage(0, s) : ctx.offline_stage(k, s);
    const auto t = static_cast<std::size_t>(mode);
    const std::size_t a_d = detail::sample(rng, pol.defender_row(t));
    const std::size_t a_a = detail::sample(rng, pol.attacker);
    const std::size_t s_next = detail::sample(rng, g.next_state_dist(t, s, a_d, a_a));
    const double r = g.reward_d(t, s, a_d, a_a);
    rec.total_reward += discount * r;
    discount *= g.discount;

    StageRecord sr{k, s, mode, a_d, a_a, r, b, false};
    if (auto nb = apply_bias(bias, b, s, a_d, a_a, s_next, pol, g)) {
      b = std::move(*nb);
    } else {
      sr.impossible = true;
      ++rec.impossible_observations;
    }
    sr.belief = b;
    rec.stages.push_back(std::move(sr));
    s = s_next;
  }
  rec.terminal_state = s;
  rec.total_reward += discount * terminal_value(c, s);
  const double thr = c.superiority == SuperiorityKind::Belief ? c.eta : c.zeta;
  rec.windows = superiority_windows(seen, modes, thr, c.superiority);
  return rec;
}

struct ExperimentStats {
  std::string label;
  int runs = 0;
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double win_rate = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> totals;
};

/// Summary of per-run totals: sample sd, linearly interpolated quartiles,
/// win rate = share of totals above zero.
inline ExperimentStats summarize(std::string label, std::vector<double> totals, std::uint64_t seed) {
  if (totals.empty()) throw InvalidModel("no runs to summarize");
  ExperimentStats st;
  st.label = std::move(label);
  st.seed = seed;
  st.runs = static_cast<int>(totals.size());
  const double n = static_cast<double>(totals.size());
  double sum = 0.0;
  int wins = 0;
  for (double v : totals) {
    sum += v;
    wins += v > 0.0;
  }
  st.mean = sum / n;
  double ss = 0.0;
  for (double v : totals) ss += (v - st.mean) * (v - st.mean);
  st.sd = totals.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  st.win_rate = wins / n;
  std::vector<double> sorted = totals;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * (n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  st.min = sorted.front();
  st.max = sorted.back();
  st.q1 = quantile(0.25);
  st.median = quantile(0.5);
  st.q3 = quantile(0.75);
  st.totals = std::move(totals);
  return st;
}

struct ExperimentResult {
  std::vector<ExperimentStats> stats;
  std::vector<std::vector<EpisodeRecord>> records;  // parallel to stats
};

/// Runs `runs` episodes per strategy. Run i uses derive_seed(master_seed, i)
/// for every strategy, so strategies face the same random streams.
inline ExperimentResult run_experiment(ExecutionContext& ctx, const std::vector<SwitchStrategy>& strategies,
                                       const BiasModel& bias, int runs, std::uint64_t master_seed) {
  if (runs < 1) throw InvalidModel("runs must be >= 1");
  for (const auto& st : strategies) check_feasible(st, ctx.game(), ctx.config());
  ExperimentResult res;
  for (const auto& st : strategies) {
    std::vector<EpisodeRecord> recs(static_cast<std::size_t>(runs));
    parallel_for(recs.size(), ctx.settings().threads, [&](std::size_t i) {
      recs[i] = execute_episode(ctx, st, bias, derive_seed(master_seed, i));
    });
    std::vector<double> totals;
    for (const auto& r : recs) totals.push_back(r.total_reward);
    res.stats.push_back(summarize(st.label(), std::move(totals), master_seed));
    res.records.push_back(std::move(recs));
  }
  return res;
}

/// Same engagement under each attacker belief operator.
inline ExperimentResult run_bias_experiment(ExecutionContext& ctx, const SwitchStrategy& strategy,
                                            const std::vector<BiasModel>& biases, int runs,
                                            std::uint64_t master_seed) {
  if (runs < 1) throw InvalidModel("runs must be >= 1");
  check_feasible(strategy, ctx.game(), ctx.config());
  ExperimentResult res;
  for (const auto& bias : biases) {
    std::vector<EpisodeRecord> recs(static_cast<std::size_t>(runs));
    parallel_for(recs.size(), ctx.settings().threads, [&](std::size_t i) {
      recs[i] = execute_episode(ctx, strategy, bias, derive_seed(master_seed, i));
    });
    std::vector<double> totals;
    for (const auto& r : recs) totals.push_back(r.total_reward);
    res.stats.push_back(summarize(bias.label(), std::move(totals), master_seed));
    res.records.push_back(std::move(recs));
  }
  return res;
}

inline std::string format6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline constexpr const char* kLedgerHeader =
    "strategy,bias,run,seed,total_reward,terminal_state,switch_stages,switch_modes,window_lengths,"
    "impossible_observations";

/// One CSV row per episode; list fields are ';'-separated.
inline void write_ledger_row(std::ostream& os, const OperationalGame& g, const std::string& strategy,
                             const std::string& bias, int run, const EpisodeRecord& r) {
  os << strategy << ',' << bias << ',' << run << ',' << r.seed << ',' << format6(r.total_reward) << ','
     << g.states.at(r.terminal_state) << ',';
  for (std::size_t i = 0; i < r.switches.size(); ++i) os << (i ? ";" : "") << r.switches[i].first;
  os << ',';
  for (std::size_t i = 0; i < r.switches.size(); ++i)
    os << (i ? ";" : "") << g.modes.at(static_cast<std::size_t>(r.switches[i].second));
  os << ',';
  for (std::size_t i = 0; i < r.windows.size(); ++i) os << (i ? ";" : "") << r.windows[i].length();
  os << ',' << r.impossible_observations << '\n';
}

inline constexpr const char* kSummaryHeader = "label,runs,mean,sd,min,q1,median,q3,max,win_rate,seed";

inline void write_summary_row(std::ostream& os, const ExperimentStats& s) {
  os << s.label << ',' << s.runs << ',' << format6(s.mean) << ',' << format6(s.sd) << ',' << format6(s.min) << ','
     << format6(s.q1) << ',' << format6(s.median) << ',' << format6(s.q3) << ',' << format6(s.max) << ','
     << format6(s.win_rate) << ',' << s.seed << '\n';
}

}  // namespace cogarb
