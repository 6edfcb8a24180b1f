// Acceptance gate. Prints one PASS/FAIL line per criterion; exits nonzero if
// any selected criterion fails. Usage: blhmm_acceptance [criterion ...]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "blhmm/derive.hpp"
#include "blhmm/draws_io.hpp"
#include "blhmm/markov.hpp"
#include "blhmm/simulate.hpp"
#include "oracles.hpp"

using namespace blhmm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome forward_vs_enumeration() {
  std::mt19937_64 gen(2006);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const auto p = oracle::random_params(gen);
    const auto e = oracle::random_effects(gen);
    const auto m = oracle::random_match(gen, 1 + static_cast<int>(gen() % 12));
    worst = std::max(worst, std::abs(match_loglik(p, e, m) - oracle::brute_force_loglik(p, e, m)));
  }
  return {worst < 1e-10, fmt("max |diff| %.3g over 200 triples", worst)};
}

Outcome markov_identities() {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  double e_power = 0, e_fixed = 0, e_rows = 0, e_occ = 0, e_ck = 0;
  for (int k = 0; k < 500; ++k) {
    const auto P = TransitionMatrix::from_switch(u(gen), u(gen));
    const int n = static_cast<int>(gen() % 60), m = static_cast<int>(gen() % 60);
    const oracle::Mat2 A{P.p_cc, P.p_ch, P.p_hc, P.p_hh};
    const auto Pn = n_step(P, n);
    const auto B = oracle::power(A, n);
    e_power = std::max({e_power, std::abs(Pn.p_cc - B.a), std::abs(Pn.p_ch - B.b), std::abs(Pn.p_hc - B.c),
                        std::abs(Pn.p_hh - B.d)});

    const auto pi = stationary(P);
    e_fixed = std::max({e_fixed, std::abs(pi.delta_c_stat * P.p_cc + pi.delta_h_stat * P.p_hc - pi.delta_c_stat),
                        std::abs(pi.delta_c_stat * P.p_ch + pi.delta_h_stat * P.p_hh - pi.delta_h_stat)});

    const auto M = occupancy(P, n);
    e_rows = std::max({e_rows, std::abs(M.m_cc + M.m_ch - (n + 1)), std::abs(M.m_hc + M.m_hh - (n + 1))});
    double cc = 0, ch = 0, hc = 0, hh = 0;
    for (int t = 0; t <= n; ++t) {
      const auto Pt = n_step(P, t);
      cc += Pt.p_cc, ch += Pt.p_ch, hc += Pt.p_hc, hh += Pt.p_hh;
    }
    e_occ = std::max({e_occ, std::abs(M.m_cc - cc), std::abs(M.m_ch - ch), std::abs(M.m_hc - hc),
                      std::abs(M.m_hh - hh)});

    const auto Pm = n_step(P, m), Pnm = n_step(P, n + m);
    const auto prod = oracle::mul({Pn.p_cc, Pn.p_ch, Pn.p_hc, Pn.p_hh}, {Pm.p_cc, Pm.p_ch, Pm.p_hc, Pm.p_hh});
    e_ck = std::max({e_ck, std::abs(Pnm.p_cc - prod.a), std::abs(Pnm.p_ch - prod.b), std::abs(Pnm.p_hc - prod.c),
                     std::abs(Pnm.p_hh - prod.d)});
  }
  const bool pass = e_power < 1e-12 && e_fixed < 1e-12 && e_rows < 1e-9 && e_occ < 1e-10 && e_ck < 1e-11;
  return {pass, fmt("n_step %.2g, fixed point %.2g, row sums %.2g, occupancy %.2g, Chapman-Kolmogorov %.2g",
                    e_power, e_fixed, e_rows, e_occ, e_ck)};
}

Outcome reported_numbers() {
  ChainSet cs;
  PosteriorDraw d;
  d.params = kMiamiPosteriorMeans;
  cs.draws.push_back(d);
  RandomStream rng(20060620);
  auto value = [&](QuantitySpec q) {
    q.n_mc = 20000;
    return posterior_derive(cs, q, rng).samples.at(0);
  };
  using K = QuantitySpec::Kind;
  QuantitySpec q;
  q.kind = K::Transition;
  const double ch = value(q);
  q.direction = Direction::HC;
  const double hc = value(q);
  q = {};
  q.kind = K::Stationary;
  const double pi_c = value(q);
  q.state = HiddenState::Hot;
  const double pi_h = value(q);
  q = {};
  q.kind = K::Occupancy;
  q.n = 120;
  const double m_cc = value(q);
  q.to = HiddenState::Hot;
  const double m_ch = value(q);
  q = {};
  q.kind = K::Streak;
  q.k = 3;
  const double streak_c = value(q);
  q.state = HiddenState::Hot;
  const double streak_h = value(q);
  auto basket = [&](Condition c, double dist) {
    QuantitySpec b;
    b.kind = K::Basket;
    b.condition = c;
    b.distance_ft = dist;
    return value(b);
  };
  const double cold0 = basket(Condition::Cold, 0.0);
  const double hot_close = basket(Condition::Hot, 0.25);
  const double unknown25 = basket(Condition::Unknown, 25.0);

  const bool pass = std::abs(ch - 0.38) <= 0.005 && std::abs(hc - 0.59) <= 0.005 &&
                    std::abs(pi_c - 0.61) <= 0.01 && std::abs(pi_h - 0.39) <= 0.01 &&
                    std::abs(m_cc - 74.0) <= 0.5 && std::abs(m_ch - 46.9) <= 0.5 &&
                    std::abs(streak_c - 0.24) <= 0.02 && streak_h < 0.1 && std::abs(cold0 - 0.46) <= 0.01 &&
                    hot_close > 0.999 && unknown25 >= 0.3 && unknown25 <= 0.45;
  return {pass, fmt("p_ch %.4f p_hc %.4f stationary (%.4f, %.4f) occupancy (%.2f, %.2f) streak cold %.4f "
                    "hot %.4f basket cold@0 %.4f hot@0.25 %.6f unknown@25 %.4f",
                    ch, hc, pi_c, pi_h, m_cc, m_ch, streak_c, streak_h, cold0, hot_close, unknown25)};
}

Outcome recovery() {
  SimSpec spec;
  spec.n_matches = 50;
  spec.shots_per_match = {100};
  spec.seed = 1;
  SamplerConfig c;
  c.n_chains = 3;
  c.n_burnin = 5000;
  c.n_iterations = 5000;
  c.thin = 5;
  const auto report = recovery_experiment(spec, c);
  double worst_rhat = 0.0;
  for (Param p : {Param::AlphaC, Param::AlphaH, Param::AlphaD, Param::AlphaFT, Param::BetaCH, Param::BetaHC})
    worst_rhat = std::max(worst_rhat, report.row(p).posterior.rhat);
  std::string missed;
  for (const auto& r : report.rows)
    if (!r.covered) missed += " " + std::string(name_of(r.param));
  return {report.n_covered() >= 8 && worst_rhat < 1.1,
          fmt("%d/10 covered, max coefficient R-hat %.3f%s%s", report.n_covered(), worst_rhat,
              missed.empty() ? "" : ", missed:", missed.c_str())};
}

Outcome ffbs_paths() {
  std::mt19937_64 gen(55);
  const auto p = oracle::random_params(gen);
  const auto e = oracle::random_effects(gen);
  const auto m = oracle::random_match(gen, 6);
  std::vector<double> exact(64);
  double total = 0.0;
  for (std::uint32_t path = 0; path < 64; ++path) total += exact[path] = oracle::path_joint_prob(p, e, m, path);
  RandomStream rng(56);
  std::vector<double> freq(64, 0.0);
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const auto t = ffbs_states(p, e, m, rng);
    std::uint32_t path = 0;
    for (std::size_t s = 0; s < 6; ++s)
      if (t.states[s] == HiddenState::Hot) path |= 1u << s;
    freq[path] += 1.0 / n;
  }
  double tv = 0.0;
  for (int k = 0; k < 64; ++k) tv += 0.5 * std::abs(freq[k] - exact[k] / total);
  return {tv < 0.02, fmt("total variation %.4f over 1e5 draws", tv)};
}

Outcome sbc() {
  SamplerConfig c;
  c.n_chains = 2;
  c.n_burnin = 1000;
  c.n_iterations = 2000;
  c.thin = 20;
  RandomStream rng(12345);
  const auto good = sbc_ranks(100, c, rng);
  RandomStream rng2(12345);
  const auto flipped = sbc_ranks(100, c, rng2, {}, FlippedDistanceModel{});
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : good.params)
    if (r.chi_square > worst) worst = r.chi_square, worst_name = name_of(r.param);
  int control_failures = 0;
  for (const auto& r : flipped.params) control_failures += !r.uniform();
  return {good.all_uniform() && control_failures >= 1,
          fmt("max chi-square %.1f (%s) vs threshold %.2f; negative control non-uniform for %d parameter(s)", worst,
              worst_name.c_str(), good.params[0].threshold, control_failures)};
}

Outcome simulator_vs_analytics() {
  SimSpec spec;
  spec.params.sigma_a = spec.params.sigma_ch = spec.params.sigma_hc = 0.0;
  spec.n_matches = 1;
  spec.shots_per_match = {100000};
  spec.seed = 8;
  const auto z = gen_season(spec).true_states[0].states;
  const auto P = transition_matrix(spec.params, {});
  const double pi = stationary(P).delta_c_stat;
  const double lambda = 1.0 - switch_rate(P);
  const double n = static_cast<double>(z.size());
  const double cold = std::count(z.begin(), z.end(), HiddenState::Cold) / n;
  const double se_occ = std::sqrt(pi * (1 - pi) * (1 + lambda) / (1 - lambda) / n);
  bool pass = std::abs(cold - pi) < 3 * se_occ;
  std::string detail = fmt("cold fraction %.4f vs %.4f (%.1f SE)", cold, pi, (cold - pi) / se_occ);

  for (HiddenState s : {HiddenState::Cold, HiddenState::Hot}) {
    // Completed runs after the first; sojourn = run length - 1.
    std::map<int, double> counts;
    double runs = 0;
    std::size_t i = 0;
    while (i < z.size() && z[i] == z[0]) ++i;
    while (i < z.size()) {
      std::size_t end = i;
      while (end < z.size() && z[end] == z[i]) ++end;
      if (end == z.size()) break;
      if (z[i] == s) {
        counts[static_cast<int>(end - i) - 1] += 1;
        runs += 1;
      }
      i = end;
    }
    const double stay = stay_prob(P, s);
    for (int tau = 0; tau <= 2; ++tau) {
      const double expect = sojourn_pmf(stay, tau);
      const double se = std::sqrt(expect * (1 - expect) / runs);
      const double got = counts[tau] / runs;
      pass = pass && std::abs(got - expect) < 3 * se;
      detail += fmt("; %s tau=%d %.4f vs %.4f (%.1f SE)", s == HiddenState::Cold ? "cold" : "hot", tau, got, expect,
                    (got - expect) / se);
    }
  }
  return {pass, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "blhmm_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "spec.txt") << "n_matches = 8\nshots_per_match = 40\nseed = 3\n";
  std::ofstream(dir / "fit.txt") << "n_chains = 3\nn_burnin = 200\nn_iterations = 200\nthin = 2\nseed = 99\n";
  const std::string cli = BLHMM_CLI;
  auto sh = [](const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); };
  bool ok = sh(cli + " simulate --spec " + (dir / "spec.txt").string() + " --out " + (dir / "sim").string()) == 0;
  std::vector<std::size_t> hashes;
  for (int threads : {1, 2, 3}) {
    const fs::path out = dir / ("fit" + std::to_string(threads));
    ok = ok && sh(cli + " --quiet --threads " + std::to_string(threads) + " fit --data " +
                  (dir / "sim" / "season.csv").string() + " --config " + (dir / "fit.txt").string() + " --out " +
                  out.string()) == 0;
    hashes.push_back(std::hash<std::string>{}(slurp(out / "draws.csv") + slurp(out / "effects.csv")));
  }
  fs::remove_all(dir);
  const bool same = ok && hashes[0] == hashes[1] && hashes[1] == hashes[2];
  return {same, ok ? fmt("draws+effects hash %016zx / %016zx / %016zx for 1 / 2 / 3 threads", hashes[0], hashes[1],
                         hashes[2])
                   : std::string("CLI run failed")};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
  double max_seconds;  // 0: no runtime bound
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"forward algorithm vs path enumeration", forward_vs_enumeration, 10.0},
      {"closed-form Markov identities", markov_identities, 5.0},
      {"reported numbers from posterior means", reported_numbers, 1.0},
      {"parameter recovery at desk scale", recovery, 600.0},
      {"FFBS path distribution", ffbs_paths, 0.0},
      {"simulation-based calibration", sbc, 0.0},
      {"simulator vs analytics", simulator_vs_analytics, 0.0},
      {"determinism across thread counts", determinism, 0.0},
  };
  std::vector<int> selected;
  for (int a = 1; a < argc; ++a) {
    const int k = std::atoi(argv[a]);
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::cerr << "unknown criterion '" << argv[a] << "' (1-" << criteria.size() << ")\n";
      return 2;
    }
    selected.push_back(k);
  }
  if (selected.empty())
    for (std::size_t k = 1; k <= criteria.size(); ++k) selected.push_back(static_cast<int>(k));

  bool all = true;
  for (int k : selected) {
    const auto& c = criteria[static_cast<std::size_t>(k - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.max_seconds > 0 && secs >= c.max_seconds) {
      o.pass = false;
      o.detail += fmt("; runtime %.1f s over the %.0f s bound", secs, c.max_seconds);
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << k << " (" << c.name << "): " << o.detail
              << fmt(" [%.1f s]", secs) << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
