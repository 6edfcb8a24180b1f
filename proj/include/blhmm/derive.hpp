#pragma once

// Posterior distributions of derived quantities: each retained draw is
// mapped through a closed form from markov.hpp or model.hpp.
//
// "Marginal" quantities describe a generic match. The transition
// probabilities are averaged over fresh b ~ N(0, sigma^2) draws and the
// closed forms are applied to that averaged matrix; basket probabilities
// average the emission over a ~ N(0, sigma_a^2). Per-match quantities use
// the draw's own effects for that match instead.

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "blhmm/diagnostics.hpp"
#include "blhmm/error.hpp"
#include "blhmm/markov.hpp"
#include "blhmm/model.hpp"
#include "blhmm/rng.hpp"
#include "blhmm/sampler.hpp"

namespace blhmm {

enum class Direction { CH, HC };
enum class Condition { Cold, Hot, Unknown };

struct DerivedPosterior {
  std::string label;
  std::vector<int> chain;
  std::vector<int> iteration;
  std::vector<double> samples;
  PosteriorSummary summary;
};

struct QuantitySpec {
  enum class Kind { Transition, NStep, Stationary, Occupancy, Sojourn, Streak, Basket };
  Kind kind = Kind::Transition;
  std::optional<std::string> match_id;  // unset: marginal over the effects
  Direction direction = Direction::CH;
  HiddenState from = HiddenState::Cold;
  HiddenState to = HiddenState::Cold;
  HiddenState state = HiddenState::Cold;
  int n = 1;  // steps (nstep, occupancy) or sojourn length
  int k = 3;  // streak length
  Condition condition = Condition::Unknown;
  std::optional<int> shot_index;  // basket, Unknown only; unset = stationary regime
  double distance_ft = 0.0;
  bool is_free_throw = false;
  int n_mc = 200;
};

inline constexpr std::array<std::string_view, 7> kQuantityNames = {
    "transition", "nstep", "stationary", "occupancy", "sojourn", "streak", "basket"};

inline std::optional<QuantitySpec::Kind> quantity_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kQuantityNames.size(); ++i)
    if (kQuantityNames[i] == name) return static_cast<QuantitySpec::Kind>(i);
  return std::nullopt;
}

namespace detail {

inline char state_letter(HiddenState s) { return s == HiddenState::Cold ? 'c' : 'h'; }

inline std::string_view condition_name(Condition c) {
  switch (c) {
    case Condition::Cold: return "cold";
    case Condition::Hot: return "hot";
    default: return "unknown";
  }
}

/// Transition matrix of a generic match: E_b[logistic(beta + b)] per
/// direction, n_mc draws each. Exact when sigma = 0.
inline TransitionMatrix marginal_matrix(const ModelParams& p, int n_mc, RandomStream& rng) {
  auto average = [&](double beta, double sd) {
    if (sd == 0.0) return logistic(beta);
    double acc = 0.0;
    for (int m = 0; m < n_mc; ++m) acc += logistic(beta + sd * rng.normal());
    return acc / n_mc;
  };
  const double p_ch = average(p.beta_ch, p.sigma_ch);
  const double p_hc = average(p.beta_hc, p.sigma_hc);
  return TransitionMatrix::from_switch(p_ch, p_hc);
}

/// Emission probabilities averaged over a ~ N(0, sigma_a^2), with the same
/// a draws for both states.
inline EmissionProbs marginal_emission(const ModelParams& p, double distance_ft, bool is_ft,
                                       int n_mc, RandomStream& rng) {
  if (p.sigma_a == 0.0) return emission_probs(p, {}, distance_ft, is_ft);
  EmissionProbs acc{0.0, 0.0};
  for (int m = 0; m < n_mc; ++m) {
    const auto e = emission_probs(p, {p.sigma_a * rng.normal(), 0.0, 0.0}, distance_ft, is_ft);
    acc.gamma_c += e.gamma_c;
    acc.gamma_h += e.gamma_h;
  }
  return {acc.gamma_c / n_mc, acc.gamma_h / n_mc};
}

/// P(Z_n = Cold) from the initial distribution and the (n-1)-step matrix;
/// the stationary value when n is unset.
inline double cold_weight(const TransitionMatrix& P, double delta_c, std::optional<int> shot_index) {
  if (!shot_index) return stationary(P).delta_c_stat;
  const auto Pn = n_step(P, *shot_index - 1);
  return delta_c * Pn.p_cc + (1.0 - delta_c) * Pn.p_hc;
}

inline double basket_value(const EmissionProbs& e, Condition c, double w_cold) {
  switch (c) {
    case Condition::Cold: return e.gamma_c;
    case Condition::Hot: return e.gamma_h;
    default: return w_cold * e.gamma_c + (1.0 - w_cold) * e.gamma_h;
  }
}

inline double evaluate(const QuantitySpec& q, const PosteriorDraw& d, std::optional<std::size_t> match,
                       RandomStream& rng) {
  const ModelParams& p = d.params;
  if (q.kind == QuantitySpec::Kind::Basket) {
    EmissionProbs e;
    TransitionMatrix P;
    if (match) {
      const MatchEffects& eff = d.effects.at(*match);
      e = emission_probs(p, eff, q.distance_ft, q.is_free_throw);
      if (q.condition == Condition::Unknown) P = transition_matrix(p, eff);
    } else {
      e = marginal_emission(p, q.distance_ft, q.is_free_throw, q.n_mc, rng);
      if (q.condition == Condition::Unknown) P = marginal_matrix(p, q.n_mc, rng);
    }
    const double w = q.condition == Condition::Unknown ? cold_weight(P, p.delta_c, q.shot_index) : 1.0;
    return basket_value(e, q.condition, w);
  }

  const TransitionMatrix P =
      match ? transition_matrix(p, d.effects.at(*match)) : marginal_matrix(p, q.n_mc, rng);
  switch (q.kind) {
    case QuantitySpec::Kind::Transition:
      return q.direction == Direction::CH ? P.p_ch : P.p_hc;
    case QuantitySpec::Kind::NStep:
      return n_step(P, q.n)(q.from, q.to);
    case QuantitySpec::Kind::Stationary:
      return stationary(P)[q.state];
    case QuantitySpec::Kind::Occupancy:
      return occupancy(P, q.n)(q.from, q.to);
    case QuantitySpec::Kind::Sojourn:
      return sojourn_pmf(stay_prob(P, q.state), q.n);
    case QuantitySpec::Kind::Streak:
      return streak_prob(stay_prob(P, q.state), q.k);
    default:
      throw std::logic_error("unhandled quantity");
  }
}

/// Summary of a derived sample. R-hat and ESS need at least 4 draws per
/// chain and equal chain lengths; otherwise they are reported as NaN.
inline PosteriorSummary derived_summary(const std::string& label, const std::vector<int>& chain,
                                        const std::vector<double>& samples) {
  ChainSeries per_chain;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto c = static_cast<std::size_t>(chain[i]);
    if (per_chain.size() <= c) per_chain.resize(c + 1);
    per_chain[c].push_back(samples[i]);
  }
  bool diagnosable = !per_chain.empty();
  for (const auto& c : per_chain)
    diagnosable = diagnosable && c.size() >= 4 && c.size() == per_chain.front().size();
  if (diagnosable) return summarize_series(label, per_chain);

  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  PosteriorSummary s;
  s.name = label;
  s.mean = stats::mean(sorted);
  s.sd = sorted.size() > 1 ? std::sqrt(stats::variance(sorted)) : 0.0;
  s.q025 = stats::quantile_sorted(sorted, 0.025);
  s.q975 = stats::quantile_sorted(sorted, 0.975);
  s.rhat = std::nan("");
  s.ess = std::nan("");
  return s;
}

}  // namespace detail

inline void validate(const QuantitySpec& q) {
  auto fail = [](const std::string& m) { throw InputError("quantity: " + m); };
  if (q.n_mc < 1) fail("n_mc must be positive");
  if (q.n < 0) fail("n must be non-negative");
  if (q.k < 0) fail("k must be non-negative");
  if (q.shot_index && *q.shot_index < 1) fail("shot_index must be at least 1");
  if (!(q.distance_ft >= 0.0)) fail("distance must be non-negative");
}

/// Short label naming the quantity, e.g. "streak_cold_k3" or
/// "transition_ch[m07]".
inline std::string quantity_label(const QuantitySpec& q) {
  using K = QuantitySpec::Kind;
  std::string s(kQuantityNames[static_cast<std::size_t>(q.kind)]);
  const std::string from_to = std::string(1, detail::state_letter(q.from)) + detail::state_letter(q.to);
  switch (q.kind) {
    case K::Transition: s += q.direction == Direction::CH ? "_ch" : "_hc"; break;
    case K::NStep:
    case K::Occupancy: s += "_" + from_to + "_n" + std::to_string(q.n); break;
    case K::Stationary: s += "_" + std::string(to_string(q.state)); break;
    case K::Sojourn: s += "_" + std::string(to_string(q.state)) + "_n" + std::to_string(q.n); break;
    case K::Streak: s += "_" + std::string(to_string(q.state)) + "_k" + std::to_string(q.k); break;
    case K::Basket: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "_%s_d%g%s", std::string(detail::condition_name(q.condition)).c_str(),
                    q.distance_ft, q.is_free_throw ? "_ft" : "");
      s += buf;
      if (q.condition == Condition::Unknown && q.shot_index) s += "_n" + std::to_string(*q.shot_index);
      break;
    }
  }
  if (q.match_id) s += "[" + *q.match_id + "]";
  return s;
}

/// Maps every retained draw through the quantity. Draw k uses the random
/// stream substream_seed(root, k) with root taken from `rng`, so results do
/// not depend on `threads`.
inline DerivedPosterior posterior_derive(const ChainSet& chains, const QuantitySpec& q,
                                         RandomStream& rng, int threads = 1) {
  validate(q);
  if (chains.draws.empty()) throw InputError("posterior_derive: no draws");
  std::optional<std::size_t> match;
  if (q.match_id) {
    const auto it = std::find(chains.match_ids.begin(), chains.match_ids.end(), *q.match_id);
    if (it == chains.match_ids.end())
      throw InputError("match_id '" + *q.match_id + "' is not in the fitted data");
    match = static_cast<std::size_t>(it - chains.match_ids.begin());
  }
  const std::uint64_t root = rng.next_u64();
  DerivedPosterior out;
  out.label = quantity_label(q);
  const std::size_t n = chains.draws.size();
  out.samples.resize(n);
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t k = begin; k < n; k += step) {
      try {
        RandomStream stream(substream_seed(root, k));
        out.samples[k] = detail::evaluate(q, chains.draws[k], match, stream);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const auto n_threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, n);
  if (n_threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work, t, n_threads);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (const auto& d : chains.draws) {
    out.chain.push_back(d.chain_id);
    out.iteration.push_back(d.iteration);
  }
  out.summary = detail::derived_summary(out.label, out.chain, out.samples);
  return out;
}

inline DerivedPosterior marginal_transition(const ChainSet& chains, Direction direction, int n_mc,
                                            RandomStream& rng) {
  QuantitySpec q;
  q.kind = QuantitySpec::Kind::Transition;
  q.direction = direction;
  q.n_mc = n_mc;
  return posterior_derive(chains, q, rng);
}

inline DerivedPosterior basket_prob(const ChainSet& chains, Condition condition,
                                    std::optional<int> shot_index, double distance_ft,
                                    bool is_free_throw, int n_mc, RandomStream& rng) {
  QuantitySpec q;
  q.kind = QuantitySpec::Kind::Basket;
  q.condition = condition;
  q.shot_index = shot_index;
  q.distance_ft = distance_ft;
  q.is_free_throw = is_free_throw;
  q.n_mc = n_mc;
  return posterior_derive(chains, q, rng);
}

inline void write_derived_csv(std::ostream& out, const DerivedPosterior& d) {
  out << "chain,iteration,value\n";
  for (std::size_t i = 0; i < d.samples.size(); ++i)
    out << d.chain[i] << ',' << d.iteration[i] << ',' << detail::fmt_double(d.samples[i]) << '\n';
}

inline nlohmann::json to_json(const DerivedPosterior& d) {
  auto j = to_json(d.summary);
  j["quantity"] = d.label;
  j["n_draws"] = d.samples.size();
  if (!std::isfinite(d.summary.ess)) j["ess"] = nullptr;
  return j;
}

struct HistogramBin {
  double left = 0.0;
  double right = 0.0;
  std::size_t count = 0;
};

/// Equal-width bins over [min, max]; the last bin is closed. A constant
/// sample yields one degenerate bin.
inline std::vector<HistogramBin> histogram(std::span<const double> values, int n_bins) {
  if (n_bins < 1) throw InputError("histogram: bins must be positive");
  if (values.empty()) return {};
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (lo == hi) return {{lo, hi, values.size()}};
  std::vector<HistogramBin> bins(static_cast<std::size_t>(n_bins));
  const double width = (hi - lo) / n_bins;
  for (int b = 0; b < n_bins; ++b) {
    bins[static_cast<std::size_t>(b)].left = lo + b * width;
    bins[static_cast<std::size_t>(b)].right = b + 1 == n_bins ? hi : lo + (b + 1) * width;
  }
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    ++bins[std::min(b, bins.size() - 1)].count;
  }
  return bins;
}

inline void write_histogram_csv(std::ostream& out, std::span<const HistogramBin> bins) {
  out << "bin_left,bin_right,count\n";
  for (const auto& b : bins)
    out << detail::fmt_double(b.left) << ',' << detail::fmt_double(b.right) << ',' << b.count << '\n';
}

}  // namespace blhmm
