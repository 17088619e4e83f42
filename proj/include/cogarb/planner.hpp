#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cogarb/belief.hpp"
#include "cogarb/belief_update.hpp"
#include "cogarb/errors.hpp"
#include "cogarb/game_model.hpp"
#include "cogarb/pbne.hpp"

namespace cogarb {

/// x̄ = (k, s, b, θ, m, Θ̄). The used set is a bitmask over modes.
struct ExtendedState {
  int stage = 0;
  std::size_t state = 0;
  Belief belief;
  int mode = 0;
  int switches_left = 0;
  std::uint32_t used = 0;

  bool is_used(int t) const noexcept { return (used >> t) & 1u; }
};

/// Stage policies by global stage drawn from one or more profiles; the first
/// profile covering a stage wins. Execution layers a refined window over the
/// offline profile this way.
class PolicyView {
 public:
  PolicyView() = default;
  explicit PolicyView(const OperationalProfile& p) { add(p); }

  void add(const OperationalProfile& p) { layers_.push_back(&p); }

  bool covers(int k) const {
    for (const auto* p : layers_)
      if (k >= p->first_stage && k < p->first_stage + p->stages()) return true;
    return false;
  }

  StagePolicy at(int k, std::size_t s) const {
    for (const auto* p : layers_)
      if (k >= p->first_stage && k < p->first_stage + p->stages()) return p->stage(k - p->first_stage, s);
    throw InvalidModel("no operational policy covers stage " + std::to_string(k));
  }

  std::uint64_t fingerprint() const {
    if (layers_.size() == 1) return cogarb::fingerprint(*layers_.front());
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto* p : layers_) {
      h ^= cogarb::fingerprint(*p);
      h *= 1099511628211ULL;
    }
    return h;
  }

 private:
  std::vector<const OperationalProfile*> layers_;
};

struct PlaybookKey {
  int stage = 0;
  std::size_t state = 0;
  int mode = 0;
  int switches_left = 0;
  std::uint32_t used = 0;
  std::vector<std::int64_t> belief;  // round(b / quantum)

  friend auto operator<=>(const PlaybookKey&, const PlaybookKey&) = default;
  friend bool operator==(const PlaybookKey&, const PlaybookKey&) = default;
};

struct PlaybookEntry {
  double value = 0.0;
  int next_mode = 0;
  Belief belief;  // exact belief of the first visit
};

/// Memoized store D^k of values and next modes, keyed on quantized extended states.
struct Playbook {
  double quantum = 1e-6;
  int horizon = 0;
  int budget = 0;
  double eta = 0.5;
  double zeta = 0.0;
  SuperiorityKind superiority = SuperiorityKind::Belief;
  std::string fingerprint;
  std::map<PlaybookKey, PlaybookEntry> entries;
  std::optional<PlaybookKey> root;

  PlaybookKey key(const ExtendedState& x) const {
    PlaybookKey k{x.stage, x.state, x.mode, x.switches_left, x.used, {}};
    k.belief.reserve(x.belief.size());
    for (double v : x.belief.probs()) k.belief.push_back(std::llround(v / quantum));
    return k;
  }

  const PlaybookEntry* find(const ExtendedState& x) const {
    auto it = entries.find(key(x));
    return it == entries.end() ? nullptr : &it->second;
  }

  double root_value() const {
    if (!root) throw InvalidModel("playbook has no root entry");
    return entries.at(*root).value;
  }
};

/// Gated defender payoff U: r_D counts only while the defender holds superiority.
inline double payoff_U(const OperationalGame& g, std::size_t s, const Belief& b, std::size_t a_d, std::size_t a_a,
                       std::size_t mode, const StrategicConfig& c) {
  const double threshold = c.superiority == SuperiorityKind::Belief ? c.eta : c.zeta;
  return has_superiority(b, mode, threshold, c.superiority) ? g.reward_d(mode, s, a_d, a_a) : 0.0;
}

inline double terminal_value(const StrategicConfig& c, std::size_t s) { return c.terminal_reward.at(s); }

class PlaybookBuilder {
 public:
  PlaybookBuilder(const OperationalGame& g, const StrategicConfig& c, PolicyView view, Playbook& book)
      : g_(g), c_(c), view_(std::move(view)), book_(book) {}

  /// V and next mode at x̄, memoized in the playbook.
  std::pair<double, int> evaluate(const ExtendedState& x) {
    const PlaybookKey key = book_.key(x);
    if (auto it = book_.entries.find(key); it != book_.entries.end()) return {it->second.value, it->second.next_mode};
    std::pair<double, int> res{0.0, x.mode};
    if (x.stage >= g_.horizon) {
      res.first = terminal_value(c_, x.state);
    } else {
      res.first = stay(x);
      if (x.switches_left > 0 && has_unused(x)) {
        const auto [v, t] = best_switch(x);
        if (v > res.first) res = {v, t};
      }
    }
    book_.entries.emplace(key, PlaybookEntry{res.first, res.second, x.belief});
    return res;
  }

  double stay(const ExtendedState& x) { return play(x, x.mode, x.switches_left, x.used); }

  std::pair<double, int> best_switch(const ExtendedState& x) {
    if (!has_unused(x)) throw NoUnusedMode("every mode has already been used");
    double best = -std::numeric_limits<double>::infinity();
    int arg = -1;
    for (int t = 0; t < static_cast<int>(g_.num_modes()); ++t) {
      if (x.is_used(t)) continue;
      const double v = play(x, t, x.switches_left - 1, x.used | (1u << t));
      if (v > best) {
        best = v;
        arg = t;
      }
    }
    return {best, arg};
  }

  bool has_unused(const ExtendedState& x) const {
    for (int t = 0; t < static_cast<int>(g_.num_modes()); ++t)
      if (!x.is_used(t)) return true;
    return false;
  }

  // Expected gated payoff plus discounted continuation when `mode` is played at x̄.
  // Successor values come from `next` when supplied, otherwise from the recursion.
  template <typename Next>
  double play_with(const ExtendedState& x, int mode, int m, std::uint32_t used, Next&& next) {
    const std::size_t ns = g_.num_states(), nd = g_.num_defender_actions(), na = g_.num_attacker_actions();
    const StagePolicy pol = view_.at(x.stage, x.state);
    const auto t = static_cast<std::size_t>(mode);
    double total = 0.0;
    std::vector<double> reach(ns, 0.0);
    for (std::size_t d = 0; d < nd; ++d) {
      const double pd = pol.defender_prob(t, d);
      if (pd == 0.0) continue;
      for (std::size_t a = 0; a < na; ++a) {
        const double pa = pol.attacker[a];
        if (pa == 0.0) continue;
        total += pd * pa * payoff_U(g_, x.state, x.belief, d, a, t, c_);
        const auto row = g_.next_state_dist(t, x.state, d, a);
        for (std::size_t s2 = 0; s2 < ns; ++s2) reach[s2] += pd * pa * row[s2];
      }
    }
    for (std::size_t s2 = 0; s2 < ns; ++s2) {
      if (reach[s2] == 0.0) continue;
      auto post = bayes_update_planning(x.belief, x.state, s2, pol, g_);
      ExtendedState y{x.stage + 1, s2, post ? std::move(*post) : x.belief, mode, m, used};
      total += g_.discount * reach[s2] * next(y);
    }
    return total;
  }

  double play(const ExtendedState& x, int mode, int m, std::uint32_t used) {
    return play_with(x, mode, m, used, [&](const ExtendedState& y) { return evaluate(y).first; });
  }

  const PolicyView& view() const noexcept { return view_; }

 private:
  const OperationalGame& g_;
  const StrategicConfig& c_;
  PolicyView view_;
  Playbook& book_;
};

inline Playbook empty_playbook(const StrategicConfig& c, int horizon, std::uint64_t fp, double quantum = 1e-6) {
  if (!(quantum > 0.0)) throw InvalidModel("belief quantum must be positive");
  Playbook book;
  book.quantum = quantum;
  book.horizon = horizon;
  book.budget = c.budget;
  book.eta = c.eta;
  book.zeta = c.zeta;
  book.superiority = c.superiority;
  book.fingerprint = fingerprint_hex(fp);
  return book;
}

inline ExtendedState root_state(const StrategicConfig& c) {
  return {0, static_cast<std::size_t>(c.initial_state), c.prior, c.initial_mode, c.budget, c.initial_used_mask()};
}

inline double value_stay(const OperationalGame& g, const StrategicConfig& c, const OperationalProfile& p,
                         Playbook& book, const ExtendedState& x) {
  if (x.stage >= g.horizon) throw InvalidModel("value_stay needs k < K");
  return PlaybookBuilder(g, c, PolicyView(p), book).stay(x);
}

inline std::pair<double, int> value_switch(const OperationalGame& g, const StrategicConfig& c,
                                           const OperationalProfile& p, Playbook& book, const ExtendedState& x) {
  if (x.switches_left <= 0) throw InvalidModel("value_switch needs m > 0");
  return PlaybookBuilder(g, c, PolicyView(p), book).best_switch(x);
}

/// Builds the playbook from the root (0, s⁰, b⁰, θ⁰, M, Θ̄⁰).
inline Playbook build_playbook(const OperationalGame& g, const StrategicConfig& c, const PolicyView& view,
                               double quantum = 1e-6) {
  c.validate(g);
  for (int k = 0; k < g.horizon; ++k)
    if (!view.covers(k)) throw InvalidModel("operational profile does not cover stage " + std::to_string(k));
  Playbook book = empty_playbook(c, g.horizon, view.fingerprint(), quantum);
  PlaybookBuilder builder(g, c, view, book);
  const ExtendedState x0 = root_state(c);
  builder.evaluate(x0);
  book.root = book.key(x0);
  return book;
}

inline Playbook build_playbook(const OperationalGame& g, const StrategicConfig& c, const OperationalProfile& p,
                               double quantum = 1e-6) {
  return build_playbook(g, c, PolicyView(p), quantum);
}

struct CheckResult {
  std::string name;
  bool passed = true;
  double residual = 0.0;
  std::string detail;
};

struct VerificationReport {
  std::vector<CheckResult> checks;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
};

struct VerifyTolerances {
  double belief = 1e-9;
  double value = 1e-9;
  double lp = 1e-9;
};

inline std::string describe(const OperationalGame& g, const PlaybookKey& k, const Belief& b) {
  std::ostringstream os;
  os.precision(6);
  os << "(k=" << k.stage << ", s=" << g.states.at(k.state) << ", b=[";
  for (std::size_t i = 0; i < b.size(); ++i) os << (i ? " " : "") << b[i];
  os << "], mode=" << g.modes.at(static_cast<std::size_t>(k.mode)) << ", m=" << k.switches_left << ", used={";
  bool first = true;
  for (std::size_t t = 0; t < g.num_modes(); ++t)
    if ((k.used >> t) & 1u) {
      os << (first ? "" : ",") << g.modes[t];
      first = false;
    }
  os << "})";
  return os.str();
}

/// Operational check: beliefs are reproduced by the forward pass and the profile
/// is an ε-PBNE for the declared ε. Strategic check: every stored entry
/// satisfies the stay/switch recursion against the stored successors.
inline VerificationReport verify_equilibrium(const OperationalGame& g, const StrategicConfig& c,
                                             const OperationalProfile& p, const Playbook& book,
                                             std::optional<double> declared_epsilon = std::nullopt,
                                             const VerifyTolerances& tol = {}) {
  VerificationReport rep;
  const std::size_t ns = g.num_states();

  CheckResult c1{"belief_reproduction", true, 0.0, ""};
  {
    const BeliefTable fwd = forward_belief_pass(g, p.policy, static_cast<std::size_t>(c.initial_state), c.prior);
    for (int j = 0; j < p.stages(); ++j)
      for (std::size_t s = 0; s < ns; ++s) {
        if (!fwd.is_reachable(j, s)) continue;
        for (std::size_t t = 0; t < g.num_modes(); ++t) {
          const double r = std::abs(fwd.at(j, s)[t] - p.belief(j, s)[t]);
          if (r > c1.residual) {
            c1.residual = r;
            c1.detail = "worst at stage " + std::to_string(p.first_stage + j) + " state " + g.states[s];
          }
        }
      }
    c1.passed = c1.residual <= tol.belief;
  }
  rep.checks.push_back(c1);

  CheckResult c2{"epsilon_certificate", true, 0.0, ""};
  {
    const EpsilonReport er = certify_epsilon_report(g, p, tol.lp);
    const double declared = declared_epsilon.value_or(p.epsilon);
    c2.residual = er.epsilon;
    c2.passed = er.epsilon <= declared + tol.value;
    std::ostringstream os;
    os.precision(6);
    os << "certified " << er.epsilon << " against declared " << declared << " (stage " << er.stage << ", state "
       << g.states.at(er.state) << ")";
    c2.detail = os.str();
  }
  rep.checks.push_back(c2);

  CheckResult thr{"threshold_match", true, 0.0, ""};
  if (book.superiority != c.superiority ||
      (c.superiority == SuperiorityKind::Belief ? book.eta != c.eta : book.zeta != c.zeta)) {
    thr.passed = false;
    std::ostringstream os;
    os.precision(6);
    os << "threshold mismatch: playbook built with " << to_string(book.superiority) << " eta=" << book.eta
       << " zeta=" << book.zeta << ", verifying with " << to_string(c.superiority) << " eta=" << c.eta
       << " zeta=" << c.zeta;
    thr.detail = os.str();
    thr.residual = c.superiority == SuperiorityKind::Belief ? std::abs(book.eta - c.eta) : std::abs(book.zeta - c.zeta);
  }
  rep.checks.push_back(thr);

  CheckResult st{"strategic_recursion", true, 0.0, ""};
  {
    Playbook scratch = book;  // recursion may add successors the store lacks
    PlaybookBuilder builder(g, c, PolicyView(p), scratch);
    auto lookup = [&](const ExtendedState& y) {
      if (const auto* e = book.find(y)) return e->value;
      return builder.evaluate(y).first;
    };
    for (const auto& [key, entry] : book.entries) {
      const ExtendedState x{key.stage, key.state, entry.belief, key.mode, key.switches_left, key.used};
      double expect = 0.0;
      int next = key.mode;
      if (key.stage >= g.horizon) {
        expect = terminal_value(c, key.state);
      } else {
        expect = builder.play_with(x, key.mode, key.switches_left, key.used, lookup);
        if (key.switches_left > 0) {
          for (int t = 0; t < static_cast<int>(g.num_modes()); ++t) {
            if (x.is_used(t)) continue;
            const double v = builder.play_with(x, t, key.switches_left - 1, key.used | (1u << t), lookup);
            if (v > expect) {
              expect = v;
              next = t;
            }
          }
        }
      }
      const double r = std::abs(expect - entry.value);
      const bool decision_ok = next == entry.next_mode;
      const double worst = decision_ok ? r : std::max(r, 1.0);
      if (worst > st.residual || (!decision_ok && st.passed)) {
        if (worst > st.residual) st.residual = worst;
        std::ostringstream os;
        os.precision(6);
        os << "worst entry " << describe(g, key, entry.belief) << ": stored " << entry.value << " next "
           << g.modes.at(static_cast<std::size_t>(entry.next_mode)) << ", recomputed " << expect << " next "
           << g.modes.at(static_cast<std::size_t>(next));
        st.detail = os.str();
      }
      if (r > tol.value || !decision_ok) st.passed = false;
    }
  }
  rep.checks.push_back(st);
  return rep;
}

inline void write_playbook(std::ostream& os, const OperationalGame& g, const Playbook& book) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  os << "playbook v1\n";
  os << "fingerprint " << book.fingerprint << "\n";
  os << "quantum " << num(book.quantum) << "\nhorizon " << book.horizon << "\nbudget " << book.budget << "\n";
  os << "superiority " << to_string(book.superiority) << "\neta " << num(book.eta) << "\nzeta " << num(book.zeta)
     << "\n";
  os << "modes " << g.num_modes() << "\nentries " << book.entries.size() << "\n";
  auto line = [&](const char* tag, const PlaybookKey& k, const PlaybookEntry& e) {
    os << tag << ' ' << k.stage << ' ' << k.state << ' ' << k.mode << ' ' << k.switches_left << ' ' << k.used;
    for (double v : e.belief.probs()) os << ' ' << num(v);
    os << ' ' << num(e.value) << ' ' << e.next_mode << "\n";
  };
  if (book.root) line("root", *book.root, book.entries.at(*book.root));
  for (const auto& [k, e] : book.entries) line("entry", k, e);
}

/// Reads a playbook written by write_playbook and checks it against the
/// fingerprint of the profile it will be used with.
inline Playbook read_playbook(std::istream& is, const std::string& expected_fingerprint) {
  Playbook book;
  std::string line;
  int lineno = 0;
  std::size_t modes = 0, declared = 0;
  auto fail = [&](const std::string& what) { throw ScenarioError(lineno, "playbook: " + what); };
  std::optional<PlaybookKey> root_key;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (lineno == 1) {
      std::string ver;
      ls >> ver;
      if (tag != "playbook" || ver != "v1") fail("unrecognized header");
      continue;
    }
    if (tag == "fingerprint") ls >> book.fingerprint;
    else if (tag == "quantum") ls >> book.quantum;
    else if (tag == "horizon") ls >> book.horizon;
    else if (tag == "budget") ls >> book.budget;
    else if (tag == "eta") ls >> book.eta;
    else if (tag == "zeta") ls >> book.zeta;
    else if (tag == "modes") ls >> modes;
    else if (tag == "entries") ls >> declared;
    else if (tag == "superiority") {
      std::string k;
      ls >> k;
      if (k == "belief") book.superiority = SuperiorityKind::Belief;
      else if (k == "uncertainty") book.superiority = SuperiorityKind::Uncertainty;
      else fail("unknown superiority kind '" + k + "'");
    } else if (tag == "entry" || tag == "root") {
      if (modes == 0) fail("entry before the modes line");
      PlaybookKey k;
      PlaybookEntry e;
      ls >> k.stage >> k.state >> k.mode >> k.switches_left >> k.used;
      std::vector<double> b(modes);
      for (double& v : b) ls >> v;
      ls >> e.value >> e.next_mode;
      if (!ls) fail("malformed entry");
      try {
        e.belief = Belief(std::move(b));
      } catch (const InvalidModel& ex) {
        fail(ex.what());
      }
      for (double v : e.belief.probs()) k.belief.push_back(std::llround(v / book.quantum));
      if (tag == "root") root_key = k;
      else book.entries.emplace(std::move(k), std::move(e));
    } else {
      fail("unknown key '" + tag + "'");
    }
    if (ls.fail()) fail("malformed value for '" + tag + "'");
  }
  if (book.entries.size() != declared) fail("entry count differs from the header");
  if (root_key) {
    if (!book.entries.count(*root_key)) fail("root entry missing from the table");
    book.root = root_key;
  }
  if (book.fingerprint != expected_fingerprint)
    throw FingerprintMismatch("playbook fingerprint " + book.fingerprint + " does not match profile " +
                              expected_fingerprint);
  return book;
}

}  // namespace cogarb
