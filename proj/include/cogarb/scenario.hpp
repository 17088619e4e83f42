#pragma once

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cogarb/errors.hpp"
#include "cogarb/game_model.hpp"
#include "cogarb/pbne.hpp"

namespace cogarb {

/// Everything a scenario file configures.
struct ScenarioDocument {
  Scenario scenario;
  SolverSettings solver;
  int lookahead = 5;
  bool refine = true;
  std::optional<CaseStudyParams> case_study;  // set when the tables came from the case-study block
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

struct Line {
  int number;
  std::string section;
  std::vector<std::string> key;  // key name followed by any index tokens
  std::string value;
};

inline double parse_double(const std::string& s, int line) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || std::isnan(v))
    throw ScenarioError(line, "expected a number, got '" + s + "'");
  return v;
}

inline int parse_int(const std::string& s, int line) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size()) throw ScenarioError(line, "expected an integer, got '" + s + "'");
  return static_cast<int>(v);
}

inline bool parse_bool(const std::string& s, int line) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ScenarioError(line, "expected true/false, got '" + s + "'");
}

inline std::vector<double> parse_doubles(const std::string& s, int line) {
  std::vector<double> out;
  for (const auto& w : split_ws(s)) out.push_back(parse_double(w, line));
  return out;
}

inline std::size_t index_of(const std::vector<std::string>& names, const std::string& n, const char* what, int line) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == n) return i;
  throw ScenarioError(line, std::string("unknown ") + what + " '" + n + "'");
}

}  // namespace detail

/// Parses a scenario document. Sections: [states] [modes] [actions]
/// [transitions] [rewards] [strategic] [solver] [execution]; '#' starts a
/// comment. The case-study block in [transitions] fills both tables from
/// (kappa, delta, beta). Unknown sections or keys are rejected with their line.
inline ScenarioDocument load_scenario(std::string_view text) {
  using namespace detail;
  std::vector<Line> lines;
  {
    std::istringstream is{std::string(text)};
    std::string raw, section;
    int n = 0;
    while (std::getline(is, raw)) {
      ++n;
      if (auto h = raw.find('#'); h != std::string::npos) raw.erase(h);
      const std::string t = trim(raw);
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']') throw ScenarioError(n, "malformed section header");
        section = trim(std::string_view(t).substr(1, t.size() - 2));
        static const std::set<std::string> known{"states",  "modes",     "actions", "transitions",
                                                 "rewards", "strategic", "solver",  "execution"};
        if (!known.count(section)) throw ScenarioError(n, "unknown section [" + section + "]");
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ScenarioError(n, "expected 'key = value'");
      if (section.empty()) throw ScenarioError(n, "key outside any section");
      auto key = split_ws(t.substr(0, eq));
      if (key.empty()) throw ScenarioError(n, "empty key");
      lines.push_back({n, section, std::move(key), trim(std::string_view(t).substr(eq + 1))});
    }
  }

  ScenarioDocument doc;
  auto& g = doc.scenario.game;
  auto& c = doc.scenario.config;
  std::map<std::string, int> seen;
  auto once = [&](const Line& l) {
    const std::string id = l.section + "." + l.key[0];
    if (seen.count(id)) throw ScenarioError(l.number, "duplicate key '" + l.key[0] + "'");
    seen[id] = l.number;
  };
  auto plain = [&](const Line& l) {
    if (l.key.size() != 1) throw ScenarioError(l.number, "key '" + l.key[0] + "' takes no index");
    once(l);
  };
  auto bad_key = [](const Line& l) {
    return ScenarioError(l.number, "unknown key '" + l.key[0] + "' in [" + l.section + "]");
  };

  // Pass 1: names, the case-study block and scalar settings.
  bool case_study = false;
  CaseStudyParams cs;
  std::optional<std::string> initial_state, initial_mode;
  std::optional<std::vector<double>> prior, terminal;
  int horizon_line = 0;
  for (const auto& l : lines) {
    const auto& k = l.key[0];
    if (l.section == "states") {
      if (k != "names") throw bad_key(l);
      plain(l);
      g.states = split_ws(l.value);
    } else if (l.section == "modes") {
      if (k != "names") throw bad_key(l);
      plain(l);
      g.modes = split_ws(l.value);
    } else if (l.section == "actions") {
      if (k == "defender") g.defender_actions = split_ws(l.value);
      else if (k == "attacker") g.attacker_actions = split_ws(l.value);
      else throw bad_key(l);
      plain(l);
    } else if (l.section == "transitions") {
      if (k == "row") continue;
      plain(l);
      if (k == "case_study") case_study = parse_bool(l.value, l.number);
      else if (k == "kappa") cs.kappa = parse_double(l.value, l.number);
      else if (k == "delta") cs.delta = parse_double(l.value, l.number);
      else if (k == "beta") cs.beta = parse_double(l.value, l.number);
      else if (k == "matched_defender") {
        if (l.value == "both_matched") cs.matched_defender = MatchedDefenderRule::BothMatched;
        else if (l.value == "action_order") cs.matched_defender = MatchedDefenderRule::ActionOrder;
        else throw ScenarioError(l.number, "matched_defender must be both_matched or action_order");
      } else throw bad_key(l);
    } else if (l.section == "rewards") {
      if (k != "defender" && k != "attacker") throw bad_key(l);
    } else if (l.section == "strategic") {
      plain(l);
      if (k == "horizon") {
        g.horizon = parse_int(l.value, l.number);
        horizon_line = l.number;
      } else if (k == "budget") c.budget = parse_int(l.value, l.number);
      else if (k == "eta") c.eta = parse_double(l.value, l.number);
      else if (k == "zeta") c.zeta = parse_double(l.value, l.number);
      else if (k == "gamma") g.discount = parse_double(l.value, l.number);
      else if (k == "superiority") {
        if (l.value == "belief") c.superiority = SuperiorityKind::Belief;
        else if (l.value == "uncertainty") c.superiority = SuperiorityKind::Uncertainty;
        else throw ScenarioError(l.number, "superiority must be belief or uncertainty");
      } else if (k == "terminal") terminal = parse_doubles(l.value, l.number);
      else if (k == "initial_state") initial_state = l.value;
      else if (k == "initial_mode") initial_mode = l.value;
      else if (k == "initial_mode_used") c.initial_mode_used = parse_bool(l.value, l.number);
      else if (k == "prior") {
        if (l.value == "uniform") prior.reset();
        else prior = parse_doubles(l.value, l.number);
      } else throw bad_key(l);
    } else if (l.section == "solver") {
      plain(l);
      auto& s = doc.solver;
      if (k == "max_iterations") s.max_iterations = parse_int(l.value, l.number);
      else if (k == "policy_tolerance") s.policy_tolerance = parse_double(l.value, l.number);
      else if (k == "lp_tolerance") s.lp_tolerance = parse_double(l.value, l.number);
      else if (k == "polish_rounds") s.polish_rounds = parse_int(l.value, l.number);
      else if (k == "terminal_continuation") s.terminal_continuation = parse_bool(l.value, l.number);
      else if (k == "alpha") s.alpha_weights = parse_doubles(l.value, l.number);
      else throw bad_key(l);
    } else if (l.section == "execution") {
      plain(l);
      if (k == "lookahead") doc.lookahead = parse_int(l.value, l.number);
      else if (k == "refine") doc.refine = parse_bool(l.value, l.number);
      else throw bad_key(l);
    }
  }

  if (case_study) {
    for (const auto& l : lines)
      if ((l.section == "transitions" && l.key[0] == "row") || l.section == "rewards")
        throw ScenarioError(l.number, "explicit table entries cannot be combined with case_study = true");
    Scenario base;
    try {
      base = build_case_study(cs, g.horizon < 0 ? 0 : g.horizon, 0);
    } catch (const InvalidModel& e) {
      throw ScenarioError(seen.count("transitions.case_study") ? seen["transitions.case_study"] : 0, e.what());
    }
    auto keep = [&](std::vector<std::string>& mine, const std::vector<std::string>& theirs, const char* what) {
      if (mine.empty()) mine = theirs;
      else if (mine.size() != theirs.size())
        throw ScenarioError(0, std::string("case study needs ") + std::to_string(theirs.size()) + " " + what);
    };
    keep(g.states, base.game.states, "states");
    keep(g.modes, base.game.modes, "modes");
    keep(g.defender_actions, base.game.defender_actions, "defender actions");
    keep(g.attacker_actions, base.game.attacker_actions, "attacker actions");
    g.transition = base.game.transition;
    g.reward_d = base.game.reward_d;
    g.reward_a = base.game.reward_a;
    if (!terminal) terminal = base.config.terminal_reward;
    if (!seen.count("strategic.zeta")) c.zeta = base.config.zeta;
    doc.case_study = cs;
  }

  if (g.states.empty()) throw ScenarioError(0, "missing [states] names");
  if (g.modes.empty()) throw ScenarioError(0, "missing [modes] names");
  if (g.defender_actions.empty() || g.attacker_actions.empty()) throw ScenarioError(0, "missing [actions]");
  if (!horizon_line) throw ScenarioError(0, "missing [strategic] horizon");

  if (!case_study) {
    g.allocate();
    const std::size_t nt = g.num_modes(), ns = g.num_states(), nd = g.num_defender_actions(),
                      na = g.num_attacker_actions();
    std::vector<char> have_t(nt * ns * nd * na, 0), have_d(have_t.size(), 0), have_a(have_t.size(), 0);
    for (const auto& l : lines) {
      const bool row = l.section == "transitions" && l.key[0] == "row";
      const bool rew = l.section == "rewards";
      if (!row && !rew) continue;
      if (l.key.size() != 5) throw ScenarioError(l.number, l.key[0] + " needs <mode> <state> <a_D> <a_A>");
      const std::size_t t = index_of(g.modes, l.key[1], "mode", l.number);
      const std::size_t s = index_of(g.states, l.key[2], "state", l.number);
      const std::size_t d = index_of(g.defender_actions, l.key[3], "defender action", l.number);
      const std::size_t a = index_of(g.attacker_actions, l.key[4], "attacker action", l.number);
      const std::size_t cell = ((t * ns + s) * nd + d) * na + a;
      auto& have = row ? have_t : (l.key[0] == "defender" ? have_d : have_a);
      if (have[cell]) throw ScenarioError(l.number, "duplicate entry for " + g.cell_name(t, s, d, a));
      have[cell] = 1;
      if (row) {
        const auto p = parse_doubles(l.value, l.number);
        if (p.size() != ns)
          throw ScenarioError(l.number, "transition row needs " + std::to_string(ns) + " probabilities");
        double sum = 0.0;
        for (std::size_t s2 = 0; s2 < ns; ++s2) {
          if (p[s2] < 0.0) throw ScenarioError(l.number, "negative probability at " + g.cell_name(t, s, d, a));
          g.transition(t, s, d, a, s2) = p[s2];
          sum += p[s2];
        }
        if (std::abs(sum - 1.0) > kRowTolerance) {
          std::ostringstream os;
          os << "transition row at " << g.cell_name(t, s, d, a) << " sums to " << sum;
          throw ScenarioError(l.number, os.str());
        }
      } else {
        const double r = parse_double(l.value, l.number);
        (l.key[0] == "defender" ? g.reward_d : g.reward_a)(t, s, d, a) = r;
      }
    }
    bool any_attacker = false;
    for (char h : have_a) any_attacker |= h != 0;
    for (std::size_t t = 0; t < nt; ++t)
      for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t d = 0; d < nd; ++d)
          for (std::size_t a = 0; a < na; ++a) {
            const std::size_t cell = ((t * ns + s) * nd + d) * na + a;
            if (!have_t[cell]) throw ScenarioError(0, "missing transition row for " + g.cell_name(t, s, d, a));
            if (!have_d[cell]) throw ScenarioError(0, "missing defender reward for " + g.cell_name(t, s, d, a));
            if (any_attacker && !have_a[cell])
              throw ScenarioError(0, "missing attacker reward for " + g.cell_name(t, s, d, a));
            if (!any_attacker) g.reward_a(t, s, d, a) = -g.reward_d(t, s, d, a);
          }
  }

  auto line_of = [&](const char* id) { return seen.count(id) ? seen[id] : 0; };
  if (!terminal) throw ScenarioError(0, "missing [strategic] terminal rewards");
  c.terminal_reward = *terminal;
  c.initial_state = initial_state
                        ? static_cast<int>(index_of(g.states, *initial_state, "state", line_of("strategic.initial_state")))
                        : 0;
  c.initial_mode = initial_mode
                       ? static_cast<int>(index_of(g.modes, *initial_mode, "mode", line_of("strategic.initial_mode")))
                       : 0;
  if (prior) {
    try {
      c.prior = Belief(*prior);
    } catch (const InvalidModel& e) {
      throw ScenarioError(line_of("strategic.prior"), e.what());
    }
  } else {
    c.prior = Belief::uniform(g.num_modes());
  }
  try {
    g.validate();
    c.validate(g);
    doc.solver.validate(g);
  } catch (const InvalidModel& e) {
    throw ScenarioError(0, e.what());
  }
  if (doc.lookahead < 1) throw ScenarioError(line_of("execution.lookahead"), "lookahead must be >= 1");
  return doc;
}

inline ScenarioDocument load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(0, "cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_scenario(ss.str());
}

/// Writes the document with explicit tables; load_scenario reads it back unchanged.
inline std::string serialize_scenario(const ScenarioDocument& doc) {
  const auto& g = doc.scenario.game;
  const auto& c = doc.scenario.config;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + v[i];
    return s;
  };
  std::ostringstream os;
  os << "[states]\nnames = " << join(g.states) << "\n\n[modes]\nnames = " << join(g.modes) << "\n\n";
  os << "[actions]\ndefender = " << join(g.defender_actions) << "\nattacker = " << join(g.attacker_actions) << "\n\n";
  os << "[transitions]\n";
  for (std::size_t t = 0; t < g.num_modes(); ++t)
    for (std::size_t s = 0; s < g.num_states(); ++s)
      for (std::size_t d = 0; d < g.num_defender_actions(); ++d)
        for (std::size_t a = 0; a < g.num_attacker_actions(); ++a) {
          os << "row " << g.modes[t] << ' ' << g.states[s] << ' ' << g.defender_actions[d] << ' '
             << g.attacker_actions[a] << " =";
          for (double p : g.next_state_dist(t, s, d, a)) os << ' ' << num(p);
          os << '\n';
        }
  os << "\n[rewards]\n";
  for (const char* who : {"defender", "attacker"})
    for (std::size_t t = 0; t < g.num_modes(); ++t)
      for (std::size_t s = 0; s < g.num_states(); ++s)
        for (std::size_t d = 0; d < g.num_defender_actions(); ++d)
          for (std::size_t a = 0; a < g.num_attacker_actions(); ++a)
            os << who << ' ' << g.modes[t] << ' ' << g.states[s] << ' ' << g.defender_actions[d] << ' '
               << g.attacker_actions[a] << " = "
               << num(who[0] == 'd' ? g.reward_d(t, s, d, a) : g.reward_a(t, s, d, a)) << '\n';
  os << "\n[strategic]\nhorizon = " << g.horizon << "\nbudget = " << c.budget << "\ngamma = " << num(g.discount)
     << "\neta = " << num(c.eta) << "\nzeta = " << num(c.zeta) << "\nsuperiority = " << to_string(c.superiority)
     << "\nterminal =";
  for (double u : c.terminal_reward) os << ' ' << num(u);
  os << "\ninitial_state = " << g.states.at(static_cast<std::size_t>(c.initial_state))
     << "\ninitial_mode = " << g.modes.at(static_cast<std::size_t>(c.initial_mode))
     << "\ninitial_mode_used = " << (c.initial_mode_used ? "true" : "false") << "\nprior =";
  for (double p : c.prior.probs()) os << ' ' << num(p);
  const auto& s = doc.solver;
  os << "\n\n[solver]\nmax_iterations = " << s.max_iterations << "\npolicy_tolerance = " << num(s.policy_tolerance)
     << "\nlp_tolerance = " << num(s.lp_tolerance) << "\npolish_rounds = " << s.polish_rounds
     << "\nterminal_continuation = " << (s.terminal_continuation ? "true" : "false") << "\n";
  if (!s.alpha_weights.empty()) {
    os << "alpha =";
    for (double a : s.alpha_weights) os << ' ' << num(a);
    os << "\n";
  }
  os << "\n[execution]\nlookahead = " << doc.lookahead << "\nrefine = " << (doc.refine ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace cogarb
