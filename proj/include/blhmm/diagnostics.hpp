#pragma once

// Posterior summaries and convergence diagnostics: split R-hat and
// rank-normalized bulk effective sample size.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blhmm/data.hpp"
#include "blhmm/error.hpp"
#include "blhmm/sampler.hpp"
#include "blhmm/stats.hpp"

namespace blhmm {

using ChainSeries = std::vector<std::vector<double>>;

struct PosteriorSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double rhat = 1.0;
  double ess = 0.0;
};

namespace detail {

/// Each chain cut into two halves; the middle draw of an odd-length chain
/// is dropped.
inline ChainSeries split_chains(const ChainSeries& chains) {
  ChainSeries out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

inline void check_chains(const ChainSeries& chains, std::size_t min_len) {
  if (chains.empty()) throw std::invalid_argument("diagnostics: no chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw std::invalid_argument("diagnostics: chains differ in length");
  if (n < min_len)
    throw std::invalid_argument("diagnostics: need at least " + std::to_string(min_len) +
                                " draws per chain");
}

/// Classic potential scale reduction on equal-length chains.
inline double psrf(const ChainSeries& chains) {
  const auto m = static_cast<double>(chains.size());
  const auto n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(stats::mean(c));
    vars.push_back(stats::variance(c));
  }
  const double w = stats::mean(vars);
  const double b_over_n = m > 1 ? stats::variance(means) : 0.0;
  if (w == 0.0) {
    const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
    return *lo == *hi ? 1.0 : std::numeric_limits<double>::infinity();
  }
  const double var_plus = (n - 1.0) / n * w + b_over_n;
  return std::sqrt(var_plus / w);
}

/// Normal scores of the pooled ranks (average ranks for ties),
/// z = Phi^-1((r - 3/8) / (S + 1/4)).
inline ChainSeries rank_normalize(const ChainSeries& chains) {
  std::vector<std::pair<double, std::size_t>> pooled;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (double x : chains[c]) pooled.emplace_back(x, pooled.size());
  std::vector<double> flat(pooled.size());
  std::sort(pooled.begin(), pooled.end());
  const auto s = static_cast<double>(pooled.size());
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    const double z = stats::normal_quantile((rank - 0.375) / (s + 0.25));
    for (std::size_t k = i; k < j; ++k) flat[pooled[k].second] = z;
    i = j;
  }
  ChainSeries out;
  std::size_t pos = 0;
  for (const auto& c : chains) {
    out.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                     flat.begin() + static_cast<std::ptrdiff_t>(pos + c.size()));
    pos += c.size();
  }
  return out;
}

/// Effective sample size of equal-length chains from Geyer's initial
/// monotone sequence of multi-chain autocorrelations.
inline double ess_geyer(const ChainSeries& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  const double total = static_cast<double>(m * n);
  if (n < 4) return total;

  std::vector<double> means(m), acov0(m);
  for (std::size_t c = 0; c < m; ++c) means[c] = stats::mean(chains[c]);
  auto mean_acov = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i)
        s += (chains[c][i] - means[c]) * (chains[c][i + lag] - means[c]);
      acc += s / static_cast<double>(n);
    }
    return acc / static_cast<double>(m);
  };
  double w = 0.0;
  for (std::size_t c = 0; c < m; ++c) w += stats::variance(chains[c]);
  w /= static_cast<double>(m);
  const double var_plus =
      w * (static_cast<double>(n) - 1.0) / static_cast<double>(n) +
      (m > 1 ? stats::variance(means) : 0.0);
  if (!(var_plus > 0.0)) return total;
  // Within-chain variance in the acov normalization (1/n).
  const double w_n = w * (static_cast<double>(n) - 1.0) / static_cast<double>(n);
  auto rho = [&](std::size_t lag) { return 1.0 - (w_n - mean_acov(lag)) / var_plus; };

  std::vector<double> r(n, 0.0);
  r[0] = 1.0;
  double even = 1.0;
  double odd = rho(1);
  r[1] = odd;
  std::size_t t = 1;
  while (t + 5 < n && even + odd > 0.0) {
    even = rho(t + 1);
    odd = rho(t + 2);
    if (even + odd >= 0.0) {
      r[t + 1] = even;
      r[t + 2] = odd;
    }
    t += 2;
  }
  const std::size_t max_t = t;
  if (even > 0.0 && max_t + 1 < n) r[max_t + 1] = even;
  for (std::size_t k = 1; k + 2 <= max_t; k += 2) {
    if (r[k + 1] + r[k + 2] > r[k - 1] + r[k]) {
      r[k + 1] = (r[k - 1] + r[k]) / 2.0;
      r[k + 2] = r[k + 1];
    }
  }
  double tau = -1.0;
  for (std::size_t k = 0; k <= max_t && k < n; ++k) tau += 2.0 * r[k];
  if (max_t + 1 < n) tau += r[max_t + 1];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

}  // namespace detail

/// Split R-hat. 1 when every draw of every chain is the same constant;
/// +infinity when each half-chain is constant but the constants differ.
inline double rhat(const ChainSeries& per_chain_series) {
  detail::check_chains(per_chain_series, 2);
  return detail::psrf(detail::split_chains(per_chain_series));
}

/// Rank-normalized bulk ESS over split chains, capped at 1.5 times the
/// number of draws. A constant series reports the number of draws.
inline double ess(const ChainSeries& per_chain_series) {
  detail::check_chains(per_chain_series, 2);
  std::size_t total = 0;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& c : per_chain_series) {
    total += c.size();
    for (double x : c) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  if (lo == hi) return static_cast<double>(total);
  const auto split = detail::split_chains(per_chain_series);
  const double value = detail::ess_geyer(detail::rank_normalize(split));
  return std::min(value, 1.5 * static_cast<double>(total));
}

inline PosteriorSummary summarize_series(const std::string& name, const ChainSeries& per_chain) {
  detail::check_chains(per_chain, 4);
  std::vector<double> pooled;
  for (const auto& c : per_chain) pooled.insert(pooled.end(), c.begin(), c.end());
  std::sort(pooled.begin(), pooled.end());
  PosteriorSummary s;
  s.name = name;
  s.mean = stats::mean(pooled);
  s.sd = std::sqrt(stats::variance(pooled));
  s.q025 = stats::quantile_sorted(pooled, 0.025);
  s.q975 = stats::quantile_sorted(pooled, 0.975);
  s.rhat = rhat(per_chain);
  s.ess = ess(per_chain);
  return s;
}

inline PosteriorSummary summarize(const ChainSet& chains, std::string_view name) {
  const auto p = param_from_name(name);
  if (!p) throw InputError("unknown parameter '" + std::string(name) + "'");
  return summarize_series(std::string(name), chains.per_chain(*p));
}

/// One summary per global parameter, in draws-file column order.
inline std::vector<PosteriorSummary> summarize_all(const ChainSet& chains) {
  std::vector<PosteriorSummary> out;
  for (auto name : kParamNames) out.push_back(summarize(chains, name));
  return out;
}

inline void write_summary_csv(std::ostream& out, std::span<const PosteriorSummary> rows) {
  out << "parameter,mean,sd,q025,q975,rhat,ess\n";
  for (const auto& s : rows)
    out << s.name << ',' << detail::fmt_double(s.mean) << ',' << detail::fmt_double(s.sd) << ','
        << detail::fmt_double(s.q025) << ',' << detail::fmt_double(s.q975) << ','
        << detail::fmt_double(s.rhat) << ',' << detail::fmt_double(s.ess) << '\n';
}

inline nlohmann::json to_json(const PosteriorSummary& s) {
  auto finite_or_null = [](double x) -> nlohmann::json {
    if (std::isfinite(x)) return x;
    return nullptr;
  };
  return {{"parameter", s.name}, {"mean", s.mean},       {"sd", s.sd},
          {"q025", s.q025},      {"q975", s.q975},       {"rhat", finite_or_null(s.rhat)},
          {"ess", s.ess}};
}

inline nlohmann::json to_json(std::span<const PosteriorSummary> rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : rows) arr.push_back(to_json(s));
  return arr;
}

}  // namespace blhmm
