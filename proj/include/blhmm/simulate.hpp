#pragma once

// Synthetic seasons from the generative model, parameter-recovery runs and
// simulation-based calibration.

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "blhmm/data.hpp"
#include "blhmm/diagnostics.hpp"
#include "blhmm/error.hpp"
#include "blhmm/model.hpp"
#include "blhmm/rng.hpp"
#include "blhmm/sampler.hpp"
#include "blhmm/stats.hpp"

namespace blhmm {

/// How shot covariates are generated. Fixed and Uniform draw the distance
/// and flag free throws independently with probability ft_fraction;
/// Empirical resamples (distance, free-throw) pairs from real shots.
struct DistanceModel {
  enum class Kind { Fixed, Uniform, Empirical };
  Kind kind = Kind::Uniform;
  double value = 0.0;
  double lo = 0.0;
  double hi = 30.0;
  std::vector<std::pair<double, bool>> pool;

  static DistanceModel fixed(double d) { return {Kind::Fixed, d, d, d, {}}; }
  static DistanceModel uniform(double lo, double hi) { return {Kind::Uniform, lo, lo, hi, {}}; }
  static DistanceModel empirical(const SeasonData& season) {
    DistanceModel m;
    m.kind = Kind::Empirical;
    for (const auto& match : season.matches)
      for (const auto& s : match.shots) m.pool.emplace_back(s.distance_ft, s.is_free_throw);
    if (m.pool.empty()) throw InputError("empirical distance model needs at least one shot");
    return m;
  }
};

struct SimSpec {
  ModelParams params = kMiamiPosteriorMeans;
  int n_matches = 10;
  std::vector<int> shots_per_match = {100};  // one entry for all matches, or one per match
  DistanceModel distance_model;
  double ft_fraction = 0.2;
  std::uint64_t seed = 1;
};

inline void validate(const SimSpec& spec) {
  if (spec.n_matches < 1) throw InputError("simulation: n_matches must be positive");
  if (spec.shots_per_match.size() != 1 &&
      spec.shots_per_match.size() != static_cast<std::size_t>(spec.n_matches))
    throw InputError("simulation: shots_per_match needs 1 or n_matches entries");
  for (int m : spec.shots_per_match)
    if (m < 1) throw InputError("simulation: shots_per_match must be >= 1");
  if (!(spec.ft_fraction >= 0.0 && spec.ft_fraction <= 1.0))
    throw InputError("simulation: ft_fraction must lie in [0, 1]");
  if (!in_support(spec.params)) throw InputError("simulation: parameters outside prior support");
  const auto& d = spec.distance_model;
  if (d.kind == DistanceModel::Kind::Uniform && !(d.lo >= 0.0 && d.hi >= d.lo))
    throw InputError("simulation: uniform distance range must satisfy 0 <= lo <= hi");
  if (d.kind == DistanceModel::Kind::Fixed && !(d.value >= 0.0))
    throw InputError("simulation: fixed distance must be non-negative");
  if (d.kind == DistanceModel::Kind::Empirical && d.pool.empty())
    throw InputError("simulation: empirical distance pool is empty");
}

struct SimOutput {
  SeasonData data;
  std::vector<MatchEffects> true_effects;
  std::vector<StateTrajectory> true_states;
};

inline std::string sim_match_id(int i) {
  std::ostringstream s;
  s << "sim" << std::setw(4) << std::setfill('0') << (i + 1);
  return s.str();
}

inline SimOutput gen_season(const SimSpec& spec) {
  validate(spec);
  RandomStream rng(spec.seed);
  const auto& p = spec.params;
  SimOutput out;
  for (int i = 0; i < spec.n_matches; ++i) {
    const std::string id = sim_match_id(i);
    const int m = spec.shots_per_match.size() == 1
                      ? spec.shots_per_match[0]
                      : spec.shots_per_match[static_cast<std::size_t>(i)];
    MatchEffects e;
    e.a = p.sigma_a * rng.normal();
    e.b_ch = p.sigma_ch * rng.normal();
    e.b_hc = p.sigma_hc * rng.normal();
    const TransitionMatrix P = transition_matrix(p, e);

    MatchData match{id, {}};
    StateTrajectory traj{id, {}};
    HiddenState z = rng.uniform() < p.delta_c ? HiddenState::Cold : HiddenState::Hot;
    for (int n = 1; n <= m; ++n) {
      if (n > 1) {
        const double leave = z == HiddenState::Cold ? P.p_ch : P.p_hc;
        if (rng.uniform() < leave) z = z == HiddenState::Cold ? HiddenState::Hot : HiddenState::Cold;
      }
      ShotRecord shot{id, n, 0.0, false, false};
      const auto& dm = spec.distance_model;
      switch (dm.kind) {
        case DistanceModel::Kind::Fixed:
          shot.distance_ft = dm.value;
          shot.is_free_throw = rng.uniform() < spec.ft_fraction;
          break;
        case DistanceModel::Kind::Uniform:
          shot.distance_ft = rng.uniform(dm.lo, dm.hi);
          shot.is_free_throw = rng.uniform() < spec.ft_fraction;
          break;
        case DistanceModel::Kind::Empirical: {
          const auto& [d, ft] = dm.pool[rng.index(dm.pool.size())];
          shot.distance_ft = d;
          shot.is_free_throw = ft;
          break;
        }
      }
      const auto g = emission_probs(p, e, shot.distance_ft, shot.is_free_throw);
      shot.made = rng.uniform() < g[z];
      match.shots.push_back(std::move(shot));
      traj.states.push_back(z);
    }
    out.data.matches.push_back(std::move(match));
    out.true_effects.push_back(e);
    out.true_states.push_back(std::move(traj));
  }
  return out;
}

inline void write_truth_effects_csv(std::ostream& out, const SimOutput& sim) {
  out << "match_id,a,b_ch,b_hc\n";
  for (std::size_t i = 0; i < sim.true_effects.size(); ++i) {
    const auto& e = sim.true_effects[i];
    out << sim.data.matches[i].match_id << ',' << detail::fmt_double(e.a) << ','
        << detail::fmt_double(e.b_ch) << ',' << detail::fmt_double(e.b_hc) << '\n';
  }
}

inline void write_truth_states_csv(std::ostream& out, const SimOutput& sim) {
  out << "match_id,shot_index,state\n";
  for (const auto& t : sim.true_states)
    for (std::size_t n = 0; n < t.states.size(); ++n)
      out << t.match_id << ',' << n + 1 << ',' << to_string(t.states[n]) << '\n';
}

// ---------------------------------------------------------------------------
// Parameter recovery

struct RecoveryRow {
  Param param;
  double truth = 0.0;
  PosteriorSummary posterior;
  bool covered = false;
};

struct RecoveryReport {
  std::vector<RecoveryRow> rows;
  ChainSet chains;

  int n_covered() const {
    return static_cast<int>(std::count_if(rows.begin(), rows.end(),
                                          [](const RecoveryRow& r) { return r.covered; }));
  }
  const RecoveryRow& row(Param p) const { return rows[static_cast<std::size_t>(p)]; }
};

template <class Model = HmmModel>
RecoveryReport recovery_experiment(const SimSpec& spec, const SamplerConfig& sampler_config,
                                   int threads = 1, const Model& model = {}) {
  const SimOutput sim = gen_season(spec);
  RecoveryReport report;
  report.chains = run_chains(sim.data, sampler_config, std::nullopt, threads, model);
  for (Param p : kAllParams) {
    RecoveryRow row;
    row.param = p;
    row.truth = spec.params[p];
    row.posterior = summarize(report.chains, name_of(p));
    row.covered = row.posterior.q025 <= row.truth && row.truth <= row.posterior.q975;
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Simulation-based calibration

/// Draw of the global parameters from the fitting prior, truncated
/// identically (the sorted pair of two iid N(0, 10^2) draws has exactly
/// the density of the prior restricted to alpha_c <= alpha_h).
inline ModelParams draw_from_prior(RandomStream& rng) {
  ModelParams p;
  p.alpha_c = rng.normal(0.0, kCoefPriorSd);
  p.alpha_h = rng.normal(0.0, kCoefPriorSd);
  if (p.alpha_c > p.alpha_h) std::swap(p.alpha_c, p.alpha_h);
  p.alpha_d = rng.normal(0.0, kCoefPriorSd);
  p.alpha_ft = rng.normal(0.0, kCoefPriorSd);
  p.beta_ch = rng.normal(0.0, kCoefPriorSd);
  p.beta_hc = rng.normal(0.0, kCoefPriorSd);
  p.delta_c = rng.uniform();
  p.sigma_a = rng.uniform(0.0, kSdPriorUpper);
  p.sigma_ch = rng.uniform(0.0, kSdPriorUpper);
  p.sigma_hc = rng.uniform(0.0, kSdPriorUpper);
  return p;
}

struct SbcOptions {
  int n_matches = 10;
  int shots_per_match = 40;
  DistanceModel distance_model = DistanceModel::uniform(0.0, 30.0);
  double ft_fraction = 0.2;
  int n_bins = 20;
  double quantile = 0.999;  // uniformity threshold on the chi-square statistic
  int threads = 1;
};

struct SbcParamResult {
  Param param;
  std::vector<int> ranks;      // one per replicate, in 0..n_draws
  std::vector<int> histogram;  // n_bins counts
  double chi_square = 0.0;
  double threshold = 0.0;
  bool uniform() const { return chi_square < threshold; }
};

struct SbcResult {
  int n_replicates = 0;
  int n_draws = 0;  // retained posterior draws per replicate
  std::vector<SbcParamResult> params;

  bool all_uniform() const {
    return std::all_of(params.begin(), params.end(),
                       [](const SbcParamResult& r) { return r.uniform(); });
  }
};

/// Chi-square statistic of rank counts against the uniform distribution on
/// 0..n_draws, binned into n_bins groups of consecutive ranks.
inline std::pair<std::vector<int>, double> rank_histogram(std::span<const int> ranks, int n_draws,
                                                          int n_bins) {
  const int n_ranks = n_draws + 1;
  std::vector<int> counts(static_cast<std::size_t>(n_bins), 0);
  std::vector<double> width(static_cast<std::size_t>(n_bins), 0.0);
  auto bin_of = [&](int r) {
    return static_cast<std::size_t>(static_cast<long long>(r) * n_bins / n_ranks);
  };
  for (int r = 0; r < n_ranks; ++r) width[bin_of(r)] += 1.0;
  for (int r : ranks) ++counts[bin_of(r)];
  double chi = 0.0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    const double expected = static_cast<double>(ranks.size()) * width[b] / n_ranks;
    if (expected > 0.0) chi += (counts[b] - expected) * (counts[b] - expected) / expected;
  }
  return {counts, chi};
}

/// For each replicate: draw theta from the prior, simulate a small season,
/// fit it with `Model`, and record the rank of each true parameter among
/// the retained draws. Replicate r uses seed substream_seed(root, r).
template <class Model = HmmModel>
SbcResult sbc_ranks(int n_replicates, const SamplerConfig& sampler_config, RandomStream& rng,
                    const SbcOptions& options = {}, const Model& model = {}) {
  if (n_replicates < 20) throw InputError("sbc_ranks: need at least 20 replicates");
  validate(sampler_config);
  const std::uint64_t root = rng.next_u64();
  const int n_draws =
      sampler_config.n_chains * (sampler_config.n_iterations / sampler_config.thin);
  std::vector<std::array<int, kNumParams>> ranks(static_cast<std::size_t>(n_replicates));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_replicates));

  auto replicate = [&](int r) {
    try {
      RandomStream rep_rng(substream_seed(root, static_cast<std::uint64_t>(r)));
      SimSpec spec;
      spec.params = draw_from_prior(rep_rng);
      spec.n_matches = options.n_matches;
      spec.shots_per_match = {options.shots_per_match};
      spec.distance_model = options.distance_model;
      spec.ft_fraction = options.ft_fraction;
      spec.seed = rep_rng.next_u64();
      const SimOutput sim = gen_season(spec);
      SamplerConfig cfg = sampler_config;
      cfg.seed = rep_rng.next_u64();
      const ChainSet fit = run_chains(sim.data, cfg, std::nullopt, 1, model);
      auto& out = ranks[static_cast<std::size_t>(r)];
      for (Param p : kAllParams) {
        int below = 0;
        for (const auto& d : fit.draws) below += d.params[p] < spec.params[p] ? 1 : 0;
        out[static_cast<std::size_t>(p)] = below;
      }
    } catch (...) {
      errors[static_cast<std::size_t>(r)] = std::current_exception();
    }
  };
  const int n_threads = std::clamp(options.threads, 1, n_replicates);
  if (n_threads == 1) {
    for (int r = 0; r < n_replicates; ++r) replicate(r);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t)
      pool.emplace_back([&, t] {
        for (int r = t; r < n_replicates; r += n_threads) replicate(r);
      });
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  SbcResult result;
  result.n_replicates = n_replicates;
  result.n_draws = n_draws;
  const double threshold = stats::chi_squared_quantile(options.n_bins - 1, options.quantile);
  for (Param p : kAllParams) {
    SbcParamResult pr;
    pr.param = p;
    for (const auto& rr : ranks) pr.ranks.push_back(rr[static_cast<std::size_t>(p)]);
    auto [hist, chi] = rank_histogram(pr.ranks, n_draws, options.n_bins);
    pr.histogram = std::move(hist);
    pr.chi_square = chi;
    pr.threshold = threshold;
    result.params.push_back(std::move(pr));
  }
  return result;
}

/// Negative control for SBC: the likelihood evaluated with the sign of
/// alpha_d flipped, so the fit targets the wrong posterior.
struct FlippedDistanceModel : HmmModel {
  double match_loglik(const ModelParams& p, const MatchEffects& e, const MatchData& m) const {
    ModelParams flipped = p;
    flipped.alpha_d = -p.alpha_d;
    return blhmm::match_loglik(flipped, e, m);
  }
};

}  // namespace blhmm
