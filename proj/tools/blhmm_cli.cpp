// blhmm: fit, diagnose, derive, simulate, report.
//
// Exit status: 0 success, 1 internal error, 2 bad input or usage.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "blhmm/config.hpp"
#include "blhmm/data.hpp"
#include "blhmm/derive.hpp"
#include "blhmm/diagnostics.hpp"
#include "blhmm/draws_io.hpp"
#include "blhmm/sampler.hpp"
#include "blhmm/simulate.hpp"

namespace fs = std::filesystem;
using namespace blhmm;

namespace {

constexpr double kRhatFlag = 1.1;

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool quiet = false;
};

void note(const Globals& g, const std::string& msg) {
  if (!g.quiet) std::cerr << msg << '\n';
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

std::vector<std::string> flagged(std::span<const PosteriorSummary> rows) {
  std::vector<std::string> out;
  for (const auto& s : rows)
    if (!(s.rhat <= kRhatFlag)) out.push_back(s.name);
  return out;
}

/// Draws file plus its sidecar: an explicit path, or effects.csv next to
/// the draws file when present.
ChainSet load_draws(const std::string& draws_path, const std::string& effects_path) {
  if (!fs::exists(draws_path)) throw InputError("cannot open draws file: " + draws_path);
  std::string effects = effects_path;
  if (effects.empty()) {
    const auto guess = fs::path(draws_path).parent_path() / "effects.csv";
    if (fs::exists(guess)) effects = guess.string();
  }
  return read_draws_files(draws_path, effects);
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string data, config, out;
};

int cmd_fit(const FitArgs& a, const Globals& g) {
  const auto data = parse_season_file(a.data);
  SamplerConfig cfg;
  if (!a.config.empty()) cfg = sampler_config_from(parse_config_file(a.config));
  if (g.seed) cfg.seed = *g.seed;
  validate(cfg);
  make_dir(a.out);
  note(g, "fitting " + std::to_string(data.n_matches()) + " matches, " +
              std::to_string(data.n_shots()) + " shots; " + std::to_string(cfg.n_chains) +
              " chains x (" + std::to_string(cfg.n_burnin) + " + " +
              std::to_string(cfg.n_iterations) + ")");
  const auto chains = run_chains(data, cfg, std::nullopt, g.threads);

  const fs::path out(a.out);
  {
    auto f = open_out(out / "draws.csv");
    write_draws_csv(f, chains);
  }
  {
    auto f = open_out(out / "effects.csv");
    write_effects_csv(f, chains);
  }
  const auto rows = summarize_all(chains);
  {
    auto f = open_out(out / "summary.csv");
    write_summary_csv(f, rows);
  }
  write_json(out / "summary.json", to_json(std::span<const PosteriorSummary>(rows)));

  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : chains.acceptance_rates)
    blocks.push_back({{"block", b.name}, {"acceptance_rate", b.acceptance_rate}, {"scale", b.scale}});
  write_json(out / "diagnostics.json",
             {{"n_chains", cfg.n_chains},
              {"n_burnin", cfg.n_burnin},
              {"n_iterations", cfg.n_iterations},
              {"thin", cfg.thin},
              {"seed", cfg.seed},
              {"n_draws", chains.draws.size()},
              {"rhat_threshold", kRhatFlag},
              {"flagged", flagged(rows)},
              {"blocks", blocks}});
  for (const auto& name : flagged(rows)) note(g, "warning: rhat > 1.1 for " + name);
  note(g, "wrote " + out.string());
  return 0;
}

// ---------------------------------------------------------------------------

struct DiagnoseArgs {
  std::string draws, out;
};

int cmd_diagnose(const DiagnoseArgs& a, const Globals& g) {
  const auto chains = load_draws(a.draws, {});
  const auto rows = summarize_all(chains);
  const auto bad = flagged(rows);
  if (!g.quiet) {
    std::printf("%-10s %10s %10s %10s %10s %8s %9s\n", "parameter", "mean", "sd", "q025", "q975",
                "rhat", "ess");
    for (const auto& s : rows)
      std::printf("%-10s %10.4f %10.4f %10.4f %10.4f %8.4f %9.1f%s\n", s.name.c_str(), s.mean, s.sd,
                  s.q025, s.q975, s.rhat, s.ess, s.rhat <= kRhatFlag ? "" : "  FLAG rhat > 1.1");
  }
  if (!a.out.empty())
    write_json(a.out, {{"summary", to_json(std::span<const PosteriorSummary>(rows))},
                       {"rhat_threshold", kRhatFlag},
                       {"flagged", bad}});
  if (!bad.empty()) {
    std::string list;
    for (const auto& n : bad) list += (list.empty() ? "" : ", ") + n;
    std::cerr << "not converged (rhat > 1.1): " << list << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct DeriveArgs {
  std::string quantity, draws, effects, out, state, from = "cold", to = "cold", direction = "ch",
      condition = "unknown", match;
  int n = 1, k = 3, n_mc = 200, bins = 30;
  std::optional<int> shot_index;
  double distance = 0.0;
  bool ft = false;
};

HiddenState parse_state(const std::string& s, const char* what) {
  if (s == "cold") return HiddenState::Cold;
  if (s == "hot") return HiddenState::Hot;
  throw InputError(std::string(what) + " must be cold or hot, got '" + s + "'");
}

QuantitySpec quantity_spec(const DeriveArgs& a) {
  const auto kind = quantity_from_name(a.quantity);
  if (!kind) {
    std::string names;
    for (auto n : kQuantityNames) names += (names.empty() ? "" : ", ") + std::string(n);
    throw InputError("unknown quantity '" + a.quantity + "'; valid: " + names);
  }
  QuantitySpec q;
  q.kind = *kind;
  if (!a.match.empty()) q.match_id = a.match;
  if (a.direction == "ch") q.direction = Direction::CH;
  else if (a.direction == "hc") q.direction = Direction::HC;
  else throw InputError("--direction must be ch or hc");
  q.from = parse_state(a.from, "--from");
  q.to = parse_state(a.to, "--to");
  q.n = a.n;
  q.k = a.k;
  q.n_mc = a.n_mc;
  q.shot_index = a.shot_index;
  q.distance_ft = a.distance;
  q.is_free_throw = a.ft;
  // --state names the state for stationary/sojourn/streak and the
  // condition for basket.
  if (q.kind == QuantitySpec::Kind::Basket) {
    const std::string c = a.state.empty() ? a.condition : a.state;
    if (c == "cold") q.condition = Condition::Cold;
    else if (c == "hot") q.condition = Condition::Hot;
    else if (c == "unknown") q.condition = Condition::Unknown;
    else throw InputError("basket condition must be cold, hot or unknown");
  } else {
    q.state = parse_state(a.state.empty() ? "cold" : a.state, "--state");
  }
  return q;
}

void write_derived(const fs::path& dir, const std::string& stem, const DerivedPosterior& d, int bins) {
  {
    auto f = open_out(dir / (stem + ".csv"));
    write_derived_csv(f, d);
  }
  write_json(dir / (stem + ".json"), to_json(d));
  auto f = open_out(dir / (stem + "_hist.csv"));
  write_histogram_csv(f, histogram(d.samples, bins));
}

std::uint64_t mc_seed(const Globals& g) { return g.seed.value_or(SamplerConfig{}.seed); }

int cmd_derive(const DeriveArgs& a, const Globals& g) {
  const auto q = quantity_spec(a);
  validate(q);
  const auto chains = load_draws(a.draws, a.effects);
  RandomStream rng(mc_seed(g));
  const auto d = posterior_derive(chains, q, rng, g.threads);
  make_dir(a.out);
  write_derived(a.out, "derived", d, a.bins);
  if (!g.quiet)
    std::printf("%s: mean %.6g sd %.6g 95%% [%.6g, %.6g]\n", d.label.c_str(), d.summary.mean,
                d.summary.sd, d.summary.q025, d.summary.q975);
  return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string spec, out;
};

int cmd_simulate(const SimulateArgs& a, const Globals& g) {
  auto spec = sim_spec_from(parse_config_file(a.spec), fs::path(a.spec).parent_path());
  if (g.seed) spec.seed = *g.seed;
  const auto sim = gen_season(spec);
  make_dir(a.out);
  const fs::path out(a.out);
  {
    auto f = open_out(out / "season.csv");
    write_season_csv(f, sim.data);
  }
  {
    auto f = open_out(out / "truth_effects.csv");
    write_truth_effects_csv(f, sim);
  }
  {
    auto f = open_out(out / "truth_states.csv");
    write_truth_states_csv(f, sim);
  }
  note(g, "simulated " + std::to_string(sim.data.n_matches()) + " matches, " +
              std::to_string(sim.data.n_shots()) + " shots -> " + out.string());
  return 0;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string fit, out;
  int n_mc = 200, bins = 30, occupancy_n = 120, streak_k = 3;
};

int cmd_report(const ReportArgs& a, const Globals& g) {
  const fs::path fit(a.fit);
  const auto chains = load_draws((fit / "draws.csv").string(), {});
  make_dir(a.out);
  const fs::path out(a.out);
  RandomStream rng(mc_seed(g));
  nlohmann::json summary = nlohmann::json::array();

  // Basket probability against distance for a generic match, one curve
  // per condition (Unknown in the stationary regime).
  {
    auto f = open_out(out / "basket_prob_vs_distance.csv");
    f << "distance,cold_mean,cold_lo,cold_hi,hot_mean,hot_lo,hot_hi,unknown_mean,unknown_lo,unknown_hi\n";
    for (int dist = 0; dist <= 30; ++dist) {
      f << dist;
      for (Condition c : {Condition::Cold, Condition::Hot, Condition::Unknown}) {
        QuantitySpec q;
        q.kind = QuantitySpec::Kind::Basket;
        q.condition = c;
        q.distance_ft = dist;
        q.n_mc = a.n_mc;
        const auto d = posterior_derive(chains, q, rng, g.threads);
        f << ',' << detail::fmt_double(d.summary.mean) << ',' << detail::fmt_double(d.summary.q025)
          << ',' << detail::fmt_double(d.summary.q975);
      }
      f << '\n';
    }
  }

  auto emit = [&](QuantitySpec q) {
    q.n_mc = a.n_mc;
    const auto d = posterior_derive(chains, q, rng, g.threads);
    auto f = open_out(out / (d.label + "_hist.csv"));
    write_histogram_csv(f, histogram(d.samples, a.bins));
    summary.push_back(to_json(d));
  };
  using K = QuantitySpec::Kind;
  for (Direction dir : {Direction::CH, Direction::HC}) {
    QuantitySpec q;
    q.kind = K::Transition;
    q.direction = dir;
    emit(q);
  }
  for (HiddenState s : {HiddenState::Cold, HiddenState::Hot}) {
    QuantitySpec q;
    q.kind = K::Stationary;
    q.state = s;
    emit(q);
    q.kind = K::Streak;
    q.k = a.streak_k;
    emit(q);
  }
  for (auto [from, to] : {std::pair{HiddenState::Cold, HiddenState::Cold},
                          std::pair{HiddenState::Cold, HiddenState::Hot}}) {
    QuantitySpec q;
    q.kind = K::Occupancy;
    q.from = from;
    q.to = to;
    q.n = a.occupancy_n;
    emit(q);
  }
  write_json(out / "report.json", summary);
  note(g, "wrote " + out.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian two-state hidden Markov model for shot sequences"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides config files)");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Run the MCMC sampler on a season");
  fit_cmd->add_option("--data", fit.data, "Season CSV")->required();
  fit_cmd->add_option("--config", fit.config, "Sampler config (key = value)");
  fit_cmd->add_option("--out", fit.out, "Output directory")->required();

  DiagnoseArgs diag;
  auto* diag_cmd = app.add_subcommand("diagnose", "Summaries and R-hat for a draws file");
  diag_cmd->add_option("--draws", diag.draws, "draws.csv")->required();
  diag_cmd->add_option("--out", diag.out, "Write the report as JSON");

  DeriveArgs der;
  auto* der_cmd = app.add_subcommand("derive", "Posterior of a derived quantity");
  der_cmd->add_option("quantity", der.quantity,
                      "transition | nstep | stationary | occupancy | sojourn | streak | basket")
      ->required();
  der_cmd->add_option("--draws", der.draws, "draws.csv")->required();
  der_cmd->add_option("--effects", der.effects, "Effects sidecar (default: effects.csv beside draws)");
  der_cmd->add_option("--out", der.out, "Output directory")->required();
  der_cmd->add_option("--state", der.state, "cold | hot (basket: cold | hot | unknown)");
  der_cmd->add_option("--from", der.from, "Start state for nstep/occupancy");
  der_cmd->add_option("--to", der.to, "End state for nstep/occupancy");
  der_cmd->add_option("--direction", der.direction, "Transition direction: ch | hc");
  der_cmd->add_option("--n", der.n, "Steps (nstep, occupancy) or sojourn length");
  der_cmd->add_option("--k", der.k, "Streak length");
  der_cmd->add_option("--distance", der.distance, "Shot distance in feet (basket)");
  der_cmd->add_flag("--ft", der.ft, "Free throw (basket)");
  der_cmd->add_option("--shot-index", der.shot_index, "Shot number within the match (basket, unknown)");
  der_cmd->add_option("--match", der.match, "Use this match's effects instead of marginalizing");
  der_cmd->add_option("--n-mc", der.n_mc, "Monte Carlo draws per posterior draw");
  der_cmd->add_option("--bins", der.bins, "Histogram bins");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic season");
  sim_cmd->add_option("--spec", sim.spec, "Simulation spec (key = value)")->required();
  sim_cmd->add_option("--out", sim.out, "Output directory")->required();

  ReportArgs rep;
  auto* rep_cmd = app.add_subcommand("report", "Plot-ready CSVs from a fit directory");
  rep_cmd->add_option("--fit", rep.fit, "Directory written by fit")->required();
  rep_cmd->add_option("--out", rep.out, "Output directory")->required();
  rep_cmd->add_option("--n-mc", rep.n_mc, "Monte Carlo draws per posterior draw");
  rep_cmd->add_option("--bins", rep.bins, "Histogram bins");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*fit_cmd) return cmd_fit(fit, g);
    if (*diag_cmd) return cmd_diagnose(diag, g);
    if (*der_cmd) return cmd_derive(der, g);
    if (*sim_cmd) return cmd_simulate(sim, g);
    if (*rep_cmd) return cmd_report(rep, g);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
