#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cogarb/execution.hpp"
#include "cogarb/planner.hpp"
#include "cogarb/scenario.hpp"

namespace fs = std::filesystem;
using namespace cogarb;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr const char* kScenarioEnv = "COGARB_SCENARIO";

enum Exit { kOk = 0, kInputError = 2, kVerificationFailed = 3, kInternalError = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string scenario;
  std::string out;
  std::uint64_t seed = 1;
  std::optional<int> horizon, budget, lookahead;
  std::optional<double> eta, zeta, gamma;
  double lambda = 0.5;
  int runs = 200;
  std::string strategy = "opt";
  std::string bias = "bayes";
  int threads = 1;
  bool no_refine = false;
  std::string playbook;
  std::string horizons = "5,10,20";
  std::string budgets = "0,1,2";
  bool gnuplot = false;
};

std::string fmt(double v) { return format6(v); }

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

fs::path make_out_dir(const Options& o, const std::string& sub, const std::string& stamp) {
  fs::path dir = o.out.empty() ? fs::path("out") / (sub + "-" + stamp) : fs::path(o.out);
  if (o.out.empty()) {
    for (int i = 1; fs::exists(dir); ++i) dir = fs::path("out") / (sub + "-" + stamp + "-" + std::to_string(i));
  }
  fs::create_directories(dir);
  return dir;
}

int effective_threads(int t) { return t <= 0 ? hardware_threads() : t; }

ScenarioDocument load(const Options& o) {
  std::string path = o.scenario;
  if (path.empty()) {
    if (const char* env = std::getenv(kScenarioEnv)) path = env;
  }
  if (path.empty()) throw UsageError(std::string("no scenario given (use --scenario or set ") + kScenarioEnv + ")");
  ScenarioDocument doc = load_scenario_file(path);
  auto& g = doc.scenario.game;
  auto& c = doc.scenario.config;
  if (o.horizon) g.horizon = *o.horizon;
  if (o.budget) c.budget = *o.budget;
  if (o.eta) c.eta = *o.eta;
  if (o.zeta) c.zeta = *o.zeta;
  if (o.gamma) g.discount = *o.gamma;
  if (o.lookahead) doc.lookahead = *o.lookahead;
  if (o.no_refine) doc.refine = false;
  doc.solver.threads = effective_threads(o.threads);
  g.validate();
  c.validate(g);
  doc.solver.validate(g);
  return doc;
}

std::string scenario_path(const Options& o) {
  if (!o.scenario.empty()) return o.scenario;
  const char* env = std::getenv(kScenarioEnv);
  return env ? env : "";
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<int> int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& w : split(s, ',')) {
    std::size_t used = 0;
    out.push_back(std::stoi(w, &used));
    if (used != w.size()) throw UsageError("expected an integer list, got '" + s + "'");
  }
  return out;
}

void write_manifest(const fs::path& dir, const std::string& sub, const Options& o, const ScenarioDocument& doc,
                    const std::string& stamp) {
  nlohmann::ordered_json j;
  j["subcommand"] = sub;
  j["scenario"] = scenario_path(o);
  j["output_directory"] = dir.string();
  j["seed"] = o.seed;
  nlohmann::ordered_json ov;
  ov["horizon"] = doc.scenario.game.horizon;
  ov["budget"] = doc.scenario.config.budget;
  ov["eta"] = doc.scenario.config.eta;
  ov["zeta"] = doc.scenario.config.zeta;
  ov["gamma"] = doc.scenario.game.discount;
  ov["lambda"] = o.lambda;
  ov["lookahead"] = doc.lookahead;
  ov["runs"] = o.runs;
  ov["strategy"] = o.strategy;
  ov["bias"] = o.bias;
  ov["threads"] = o.threads;
  ov["refine"] = doc.refine;
  if (sub == "sweep") {
    ov["horizons"] = int_list(o.horizons);
    ov["budgets"] = int_list(o.budgets);
  }
  if (sub == "verify") ov["playbook"] = o.playbook;
  j["overrides"] = ov;
  j["tool_version"] = kVersion;
  j["timestamp"] = stamp;
  std::ofstream(dir / "manifest.json") << j.dump(2) << "\n";
}

int mode_index(const OperationalGame& g, const std::string& name) {
  for (std::size_t i = 0; i < g.modes.size(); ++i)
    if (g.modes[i] == name) return static_cast<int>(i);
  throw UsageError("unknown mode '" + name + "'");
}

// noswitch:<mode> | opt | fixed:<stage>=<mode>;... | uniform:<mode>;...
SwitchStrategy parse_strategy(const OperationalGame& g, const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (kind == "opt") return SwitchStrategy::optimal();
  if (kind == "noswitch") return SwitchStrategy::no_switch(mode_index(g, arg));
  if (kind == "fixed") {
    std::vector<std::pair<int, int>> t;
    for (const auto& part : split(arg, ';')) {
      const auto eq = part.find('=');
      if (eq == std::string::npos) throw UsageError("fixed timing entries look like <stage>=<mode>");
      t.emplace_back(std::stoi(part.substr(0, eq)), mode_index(g, part.substr(eq + 1)));
    }
    return SwitchStrategy::fixed(std::move(t));
  }
  if (kind == "uniform") {
    std::vector<int> order;
    for (const auto& part : split(arg, ';')) order.push_back(mode_index(g, part));
    return SwitchStrategy::uniform(std::move(order));
  }
  throw UsageError("unknown strategy '" + text + "'");
}

BiasModel parse_bias(const std::string& text, double lambda) {
  if (text == "bayes") return BiasModel::bayesian();
  if (text == "brn") return BiasModel::base_rate_neglect();
  if (text == "cb") return BiasModel::confirmation(lambda);
  if (text.rfind("cb:", 0) == 0) return BiasModel::confirmation(std::stod(text.substr(3)));
  throw UsageError("unknown bias '" + text + "'");
}

std::string mode_name(const OperationalGame& g, int t) { return g.modes.at(static_cast<std::size_t>(t)); }

// Superiority windows along the most-occupied state of each stage with `mode` held fixed.
std::string window_summary(const OperationalGame& g, const StrategicConfig& c, const OperationalProfile& p) {
  std::ostringstream os;
  const double thr = c.superiority == SuperiorityKind::Belief ? c.eta : c.zeta;
  for (std::size_t t = 0; t < g.num_modes(); ++t) {
    std::vector<Belief> path;
    std::vector<int> modes;
    for (int j = 0; j < std::min(p.stages(), g.horizon); ++j) {
      std::size_t best = 0;
      for (std::size_t s = 1; s < g.num_states(); ++s)
        if (p.beliefs.occ(j, s) > p.beliefs.occ(j, best)) best = s;
      path.push_back(p.belief(j, best));
      modes.push_back(static_cast<int>(t));
    }
    const auto w = superiority_windows(path, modes, thr, c.superiority);
    os << "  mode " << g.modes[t] << ":";
    if (w.empty()) os << " none";
    for (const auto& x : w) os << " [" << x.start << "," << x.end << "]";
    os << "\n";
  }
  return os.str();
}

int cmd_plan(const Options& o) {
  ScenarioDocument doc = load(o);
  const auto& g = doc.scenario.game;
  const auto& c = doc.scenario.config;
  const OperationalProfile prof = solve_pbne(g, c, doc.solver);
  const Playbook book = build_playbook(g, c, prof);
  const VerificationReport rep = verify_equilibrium(g, c, prof, book);

  const std::string stamp = timestamp();
  const fs::path dir = make_out_dir(o, "plan", stamp);
  std::ofstream(dir / "playbook.txt") << [&] {
    std::ostringstream os;
    write_playbook(os, g, book);
    return os.str();
  }();
  {
    std::ofstream os(dir / "profile.txt");
    write_profile(os, g, prof);
  }
  int stays = 0, switches = 0;
  for (const auto& [k, e] : book.entries) (e.next_mode == k.mode ? stays : switches)++;

  std::ostringstream r;
  r << "root value V0 " << fmt(book.root_value()) << "\n";
  r << "root decision " << mode_name(g, book.entries.at(*book.root).next_mode) << "\n";
  r << "horizon " << g.horizon << " budget " << c.budget << " initial mode " << mode_name(g, c.initial_mode) << "\n";
  r << "certified epsilon " << fmt(prof.epsilon) << (prof.converged ? " (converged)" : " (not converged)") << "\n";
  r << "solver iterations " << prof.iterations << "\n";
  r << "playbook entries " << book.entries.size() << " stay " << stays << " switch " << switches << "\n";
  r << "superiority windows (" << to_string(c.superiority) << ", threshold "
    << fmt(c.superiority == SuperiorityKind::Belief ? c.eta : c.zeta) << ")\n"
    << window_summary(g, c, prof);
  r << "verification\n";
  for (const auto& ch : rep.checks)
    r << "  " << ch.name << " " << (ch.passed ? "pass" : "FAIL") << " residual " << fmt(ch.residual)
      << (ch.detail.empty() ? "" : " " + ch.detail) << "\n";
  r << "iteration log (sweep, change, epsilon)\n";
  for (std::size_t i = 0; i < prof.change_log.size(); ++i)
    r << "  " << (i + 1) << " " << fmt(prof.change_log[i]) << " "
      << (i < prof.epsilon_log.size() ? fmt(prof.epsilon_log[i]) : "-") << "\n";
  std::ofstream(dir / "report.txt") << r.str();
  write_manifest(dir, "plan", o, doc, stamp);
  std::cout << r.str() << "output " << dir.string() << "\n";
  return kOk;
}

int cmd_sweep(const Options& o) {
  const std::vector<int> horizons = int_list(o.horizons), budgets = int_list(o.budgets);
  if (horizons.empty()) throw UsageError("sweep needs at least one horizon");
  if (budgets.empty()) throw UsageError("sweep needs at least one budget");
  ScenarioDocument doc = load(o);
  const std::string stamp = timestamp();
  const fs::path dir = make_out_dir(o, "sweep", stamp);
  std::ostringstream csv;
  csv << "horizon,budget,initial_mode,case,root_value,epsilon,converged\n";
  for (int K : horizons) {
    Scenario sc = doc.scenario;
    sc.game.horizon = K;
    sc.config.budget = 0;
    sc.game.validate();
    const OperationalProfile prof = solve_pbne(sc.game, sc.config, doc.solver);
    for (int M : budgets) {
      if (M > K) throw UsageError("budget " + std::to_string(M) + " exceeds horizon " + std::to_string(K));
      std::vector<int> starts;
      if (M == 0)
        for (int t = 0; t < static_cast<int>(sc.game.num_modes()); ++t) starts.push_back(t);
      else
        starts.push_back(doc.scenario.config.initial_mode);
      for (int t : starts) {
        StrategicConfig c = sc.config;
        c.budget = M;
        c.initial_mode = t;
        const Playbook book = build_playbook(sc.game, c, prof);
        const std::string label = M == 0 ? "0 (mode " + mode_name(sc.game, t) + ")" : std::to_string(M) + " (opt)";
        csv << K << ',' << M << ',' << mode_name(sc.game, t) << ",\"" << label << "\"," << fmt(book.root_value())
            << ',' << fmt(prof.epsilon) << ',' << (prof.converged ? 1 : 0) << "\n";
      }
    }
  }
  std::ofstream(dir / "sweep.csv") << csv.str();
  if (o.gnuplot) {
    std::ofstream gp(dir / "sweep.gp");
    gp << "set datafile separator ','\nset key left bottom\nset xlabel 'horizon K'\nset ylabel 'V0'\n"
          "set terminal pngcairo size 800,500\nset output 'sweep.png'\n"
          "plot for [c in '0 (mode 0)|0 (mode 1)|0 (mode 2)|1 (opt)|2 (opt)'] \\\n"
          "  'sweep.csv' using 1:(stringcolumn(4) eq c ? $5 : NaN) skip 1 with linespoints title c\n";
  }
  write_manifest(dir, "sweep", o, doc, stamp);
  std::cout << csv.str() << "output " << dir.string() << "\n";
  return kOk;
}

int cmd_execute(const Options& o) {
  if (o.runs < 1) throw UsageError("--runs must be >= 1");
  ScenarioDocument doc = load(o);
  const auto& g = doc.scenario.game;
  const auto& c = doc.scenario.config;
  std::vector<SwitchStrategy> strategies;
  for (const auto& s : split(o.strategy, ',')) strategies.push_back(parse_strategy(g, s));
  std::vector<BiasModel> biases;
  for (const auto& b : split(o.bias, ',')) biases.push_back(parse_bias(b, o.lambda));
  if (strategies.empty() || biases.empty()) throw UsageError("need at least one strategy and one bias");
  for (const auto& st : strategies) check_feasible(st, g, c);

  const OperationalProfile prof = solve_pbne(g, c, doc.solver);
  ExecutionSettings es;
  es.lookahead = doc.lookahead;
  es.refine = doc.refine;
  es.solver = doc.solver;
  es.threads = effective_threads(o.threads);
  ExecutionContext ctx(g, c, prof, es);

  const std::string stamp = timestamp();
  const fs::path dir = make_out_dir(o, "execute", stamp);
  std::ostringstream ledger, summary;
  ledger << kLedgerHeader << "\n";
  summary << "strategy,bias," << kSummaryHeader << "\n";
  for (const auto& bias : biases) {
    const ExperimentResult res = run_experiment(ctx, strategies, bias, o.runs, o.seed);
    for (std::size_t i = 0; i < strategies.size(); ++i) {
      const std::string sl = strategies[i].label(), bl = bias.label();
      for (std::size_t r = 0; r < res.records[i].size(); ++r)
        write_ledger_row(ledger, g, sl, bl, static_cast<int>(r), res.records[i][r]);
      ExperimentStats st = res.stats[i];
      st.label = sl + "/" + bl;
      summary << sl << ',' << bl << ',';
      write_summary_row(summary, st);
    }
  }
  std::ofstream(dir / "ledger.csv") << ledger.str();
  std::ofstream(dir / "summary.csv") << summary.str();
  write_manifest(dir, "execute", o, doc, stamp);
  std::cout << summary.str() << "output " << dir.string() << "\n";
  return kOk;
}

int cmd_verify(const Options& o) {
  if (o.playbook.empty()) throw UsageError("verify needs --playbook");
  ScenarioDocument doc = load(o);
  const auto& g = doc.scenario.game;
  const auto& c = doc.scenario.config;
  const OperationalProfile prof = solve_pbne(g, c, doc.solver);
  std::ifstream in(o.playbook);
  if (!in) throw UsageError("cannot open playbook '" + o.playbook + "'");
  const std::string stamp = timestamp();
  std::ostringstream r;
  int code = kOk;
  try {
    const Playbook book = read_playbook(in, fingerprint_hex(fingerprint(prof)));
    const VerificationReport rep = verify_equilibrium(g, c, prof, book);
    for (const auto& ch : rep.checks)
      r << ch.name << " " << (ch.passed ? "pass" : "FAIL") << " residual " << fmt(ch.residual)
        << (ch.detail.empty() ? "" : " " + ch.detail) << "\n";
    r << "result " << (rep.passed() ? "pass" : "FAIL") << "\n";
    if (!rep.passed()) code = kVerificationFailed;
  } catch (const FingerprintMismatch& e) {
    r << "fingerprint FAIL " << e.what() << "\nresult FAIL\n";
    code = kVerificationFailed;
  }
  const fs::path dir = make_out_dir(o, "verify", stamp);
  std::ofstream(dir / "report.txt") << r.str();
  write_manifest(dir, "verify", o, doc, stamp);
  std::cout << r.str() << "output " << dir.string() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deception-switching planner and engagement simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--scenario", o.scenario, std::string("scenario file (default: $") + kScenarioEnv + ")");
    sub->add_option("--out", o.out, "output directory (default out/<subcommand>-<timestamp>)");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--horizon", o.horizon, "K");
    sub->add_option("--budget", o.budget, "switch budget M");
    sub->add_option("--eta", o.eta, "belief-superiority threshold");
    sub->add_option("--zeta", o.zeta, "uncertainty-superiority threshold (nats)");
    sub->add_option("--gamma", o.gamma, "discount factor");
    sub->add_option("--lambda", o.lambda, "confirmation-bias weight for 'cb'");
    sub->add_option("--lookahead", o.lookahead, "refinement lookahead K'");
    sub->add_option("--runs", o.runs, "episodes per strategy");
    sub->add_option("--strategy", o.strategy, "comma list of opt | noswitch:<mode> | fixed:<k>=<mode>;... | uniform:<mode>;...");
    sub->add_option("--bias", o.bias, "comma list of bayes | cb | cb:<lambda> | brn");
    sub->add_option("--threads", o.threads, "worker threads (0 = all hardware threads)");
    sub->add_flag("--no-refine", o.no_refine, "reuse the offline profile instead of refining each stage");
  };
  auto* plan = app.add_subcommand("plan", "solve the operational game and build the switching playbook");
  auto* sweep = app.add_subcommand("sweep", "root values over horizons and budgets");
  auto* exec = app.add_subcommand("execute", "simulate engagements and summarize total rewards");
  auto* verify = app.add_subcommand("verify", "check a stored playbook against a fresh solve");
  for (auto* s : {plan, sweep, exec, verify}) common(s);
  sweep->add_option("--horizons", o.horizons, "comma list of horizons");
  sweep->add_option("--budgets", o.budgets, "comma list of budgets");
  sweep->add_flag("--gnuplot", o.gnuplot, "also write a gnuplot script");
  verify->add_option("--playbook", o.playbook, "playbook file written by plan");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInputError;
  }
  try {
    if (*plan) return cmd_plan(o);
    if (*sweep) return cmd_sweep(o);
    if (*exec) return cmd_execute(o);
    if (*verify) return cmd_verify(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const InvalidModel& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const InfeasibleStrategy& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const NotSupported& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: bad number (" << e.what() << ")\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
  return kInternalError;
}
