#pragma once

// Two-state (Cold/Hot) hidden Markov model for made/missed shots.
//
//   logit p_ch    = beta_ch + b_ch[i]
//   logit p_hc    = beta_hc + b_hc[i]
//   logit gamma_s = alpha_s + alpha_d * distance + alpha_ft * free_throw + a[i]
//
// with a[i] ~ N(0, sigma_a^2), b_ch[i] ~ N(0, sigma_ch^2), b_hc[i] ~ N(0, sigma_hc^2),
// Z_1 ~ (delta_c, 1 - delta_c). Priors: N(0, 10^2) on the six coefficients with
// alpha_c <= alpha_h, Beta(1, 1) on delta_c, U(0, 10) on the three SDs.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "blhmm/data.hpp"

namespace blhmm {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class HiddenState : int { Cold = 0, Hot = 1 };

inline constexpr std::string_view to_string(HiddenState s) {
  return s == HiddenState::Cold ? "cold" : "hot";
}

/// Global parameters, in draws-file column order.
enum class Param : int {
  AlphaC,
  AlphaH,
  AlphaD,
  AlphaFT,
  BetaCH,
  BetaHC,
  DeltaC,
  SigmaA,
  SigmaCH,
  SigmaHC,
};
inline constexpr std::size_t kNumParams = 10;

inline constexpr std::array<std::string_view, kNumParams> kParamNames = {
    "alpha_c", "alpha_h", "alpha_d",  "alpha_ft", "beta_ch",
    "beta_hc", "delta_c", "sigma_a", "sigma_ch", "sigma_hc"};

inline constexpr std::array<Param, kNumParams> kAllParams = {
    Param::AlphaC, Param::AlphaH, Param::AlphaD,  Param::AlphaFT, Param::BetaCH,
    Param::BetaHC, Param::DeltaC, Param::SigmaA, Param::SigmaCH, Param::SigmaHC};

inline constexpr std::string_view name_of(Param p) { return kParamNames[static_cast<int>(p)]; }

inline std::optional<Param> param_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumParams; ++i)
    if (kParamNames[i] == name) return static_cast<Param>(i);
  return std::nullopt;
}

inline constexpr bool is_sd(Param p) {
  return p == Param::SigmaA || p == Param::SigmaCH || p == Param::SigmaHC;
}

struct ModelParams {
  double alpha_c = 0.0;
  double alpha_h = 0.0;
  double alpha_d = 0.0;
  double alpha_ft = 0.0;
  double beta_ch = 0.0;
  double beta_hc = 0.0;
  double delta_c = 0.5;
  double sigma_a = 0.0;
  double sigma_ch = 0.0;
  double sigma_hc = 0.0;

  double& operator[](Param p) {
    switch (p) {
      case Param::AlphaC: return alpha_c;
      case Param::AlphaH: return alpha_h;
      case Param::AlphaD: return alpha_d;
      case Param::AlphaFT: return alpha_ft;
      case Param::BetaCH: return beta_ch;
      case Param::BetaHC: return beta_hc;
      case Param::DeltaC: return delta_c;
      case Param::SigmaA: return sigma_a;
      case Param::SigmaCH: return sigma_ch;
      case Param::SigmaHC: return sigma_hc;
    }
    throw std::out_of_range("bad Param");
  }
  double operator[](Param p) const { return const_cast<ModelParams&>(*this)[p]; }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Posterior means reported for the 2005-06 Miami Heat fit.
inline constexpr ModelParams kMiamiPosteriorMeans{
    .alpha_c = -0.15,
    .alpha_h = 12.59,
    .alpha_d = -0.42,
    .alpha_ft = 6.37,
    .beta_ch = -0.49,
    .beta_hc = 0.38,
    .delta_c = 0.55,
    .sigma_a = 0.15,
    .sigma_ch = 0.07,
    .sigma_hc = 0.10,
};

/// Per-match random effects.
struct MatchEffects {
  double a = 0.0;
  double b_ch = 0.0;
  double b_hc = 0.0;

  friend bool operator==(const MatchEffects&, const MatchEffects&) = default;
};

struct TransitionMatrix {
  double p_cc = 1.0;
  double p_ch = 0.0;
  double p_hc = 0.0;
  double p_hh = 1.0;

  static TransitionMatrix from_switch(double p_ch, double p_hc) {
    return {1.0 - p_ch, p_ch, p_hc, 1.0 - p_hc};
  }
  double operator()(HiddenState from, HiddenState to) const {
    if (from == HiddenState::Cold) return to == HiddenState::Cold ? p_cc : p_ch;
    return to == HiddenState::Cold ? p_hc : p_hh;
  }
};

struct EmissionProbs {
  double gamma_c = 0.5;
  double gamma_h = 0.5;

  double operator[](HiddenState s) const { return s == HiddenState::Cold ? gamma_c : gamma_h; }
};

/// Inverse logit. Evaluated on the side that cannot overflow.
inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline TransitionMatrix transition_matrix(const ModelParams& params, const MatchEffects& effects) {
  return TransitionMatrix::from_switch(logistic(params.beta_ch + effects.b_ch),
                                       logistic(params.beta_hc + effects.b_hc));
}

/// Shared part of both emission logits (everything except the state intercept).
inline double emission_offset(const ModelParams& params, const MatchEffects& effects,
                              double distance_ft, bool is_free_throw) {
  return params.alpha_d * distance_ft + (is_free_throw ? params.alpha_ft : 0.0) + effects.a;
}

inline EmissionProbs emission_probs(const ModelParams& params, const MatchEffects& effects,
                                    double distance_ft, bool is_free_throw) {
  const double off = emission_offset(params, effects, distance_ft, is_free_throw);
  return {logistic(params.alpha_c + off), logistic(params.alpha_h + off)};
}

namespace detail {

inline double normal_logpdf(double x, double sd) {
  constexpr double kLogSqrt2Pi = 0.91893853320467274178;
  const double z = x / sd;
  return -kLogSqrt2Pi - std::log(sd) - 0.5 * z * z;
}

/// Log density of one random effect under N(0, sd^2). sd == 0 is a point
/// mass at zero.
inline double effect_logpdf(double x, double sd) {
  if (sd == 0.0) return x == 0.0 ? 0.0 : kNegInf;
  return normal_logpdf(x, sd);
}

}  // namespace detail

inline constexpr double kCoefPriorSd = 10.0;
inline constexpr double kSdPriorUpper = 10.0;

inline bool in_support(const ModelParams& p) {
  for (Param q : kAllParams)
    if (!std::isfinite(p[q])) return false;
  if (p.alpha_c > p.alpha_h) return false;
  if (p.delta_c < 0.0 || p.delta_c > 1.0) return false;
  for (double sd : {p.sigma_a, p.sigma_ch, p.sigma_hc})
    if (sd < 0.0 || sd > kSdPriorUpper) return false;
  return true;
}

/// Log prior of the global parameters alone. Normal terms carry their
/// normalizing constants; Beta(1,1) and the uniform SD priors contribute a
/// constant that is dropped.
inline double log_prior_params(const ModelParams& p) {
  if (!in_support(p)) return kNegInf;
  double lp = 0.0;
  for (double coef : {p.alpha_c, p.alpha_h, p.alpha_d, p.alpha_ft, p.beta_ch, p.beta_hc})
    lp += detail::normal_logpdf(coef, kCoefPriorSd);
  return lp;
}

inline double log_effects_density(const ModelParams& p, const MatchEffects& e) {
  return detail::effect_logpdf(e.a, p.sigma_a) + detail::effect_logpdf(e.b_ch, p.sigma_ch) +
         detail::effect_logpdf(e.b_hc, p.sigma_hc);
}

/// log pi(theta) + log f(psi | theta), up to an additive constant; -inf
/// exactly when a support constraint is violated.
inline double log_prior(const ModelParams& params, std::span<const MatchEffects> all_effects) {
  double lp = log_prior_params(params);
  if (lp == kNegInf) return lp;
  for (const auto& e : all_effects) {
    if (!std::isfinite(e.a) || !std::isfinite(e.b_ch) || !std::isfinite(e.b_hc)) return kNegInf;
    lp += log_effects_density(params, e);
  }
  return lp;
}

/// Smallest state-conditional shot probability used by the forward recursion.
inline constexpr double kProbFloor = 1e-300;

/// Probability of the observed outcome in each state, floored at kProbFloor.
inline std::array<double, 2> outcome_probs(const ModelParams& params, const MatchEffects& effects,
                                           const ShotRecord& shot) {
  const double off = emission_offset(params, effects, shot.distance_ft, shot.is_free_throw);
  const double sign = shot.made ? 1.0 : -1.0;
  return {std::max(logistic(sign * (params.alpha_c + off)), kProbFloor),
          std::max(logistic(sign * (params.alpha_h + off)), kProbFloor)};
}

struct ForwardOptions {
  /// Renormalize the forward vector every this many shots. Any value gives
  /// the same log-likelihood up to rounding; 1 is safest.
  int rescale_every = 1;
};

/// log f(y_i | theta, psi_i) with the hidden chain summed out by the scaled
/// forward recursion.
inline double match_loglik(const ModelParams& params, const MatchEffects& effects,
                           const MatchData& match, ForwardOptions opts = {}) {
  if (match.shots.empty()) return 0.0;
  const TransitionMatrix P = transition_matrix(params, effects);
  const int every = std::max(1, opts.rescale_every);

  auto e = outcome_probs(params, effects, match.shots[0]);
  double fc = params.delta_c * e[0];
  double fh = (1.0 - params.delta_c) * e[1];
  double log_scale = 0.0;
  auto rescale = [&] {
    const double s = fc + fh;
    if (!(s > 0.0)) {
      fc = fh = 0.0;
      log_scale = kNegInf;
      return;
    }
    fc /= s;
    fh /= s;
    log_scale += std::log(s);
  };
  if (every == 1 || match.shots.size() == 1) rescale();
  for (std::size_t n = 1; n < match.shots.size() && log_scale != kNegInf; ++n) {
    e = outcome_probs(params, effects, match.shots[n]);
    const double next_c = (fc * P.p_cc + fh * P.p_hc) * e[0];
    const double next_h = (fc * P.p_ch + fh * P.p_hh) * e[1];
    fc = next_c;
    fh = next_h;
    if ((n + 1) % static_cast<std::size_t>(every) == 0 || n + 1 == match.shots.size()) rescale();
  }
  return log_scale;
}

inline double season_loglik(const ModelParams& params, std::span<const MatchEffects> all_effects,
                            const SeasonData& data) {
  if (all_effects.size() != data.n_matches())
    throw std::invalid_argument("season_loglik: " + std::to_string(all_effects.size()) +
                                " effect sets for " + std::to_string(data.n_matches()) +
                                " matches");
  double ll = 0.0;
  for (std::size_t i = 0; i < data.n_matches(); ++i)
    ll += match_loglik(params, all_effects[i], data.matches[i]);
  return ll;
}

/// Unnormalized log posterior: sum of per-match log-likelihoods (in match
/// order) plus the log prior.
inline double season_logpost(const ModelParams& params, std::span<const MatchEffects> all_effects,
                             const SeasonData& data) {
  if (all_effects.size() != data.n_matches())
    throw std::invalid_argument("season_logpost: " + std::to_string(all_effects.size()) +
                                " effect sets for " + std::to_string(data.n_matches()) +
                                " matches");
  const double lp = log_prior(params, all_effects);
  if (lp == kNegInf) return kNegInf;
  return season_loglik(params, all_effects, data) + lp;
}

/// Default likelihood/prior policy used by the sampler. A model policy
/// provides log_prior_params, log_effects_density and match_loglik.
struct HmmModel {
  double log_prior_params(const ModelParams& p) const { return blhmm::log_prior_params(p); }
  double log_effects_density(const ModelParams& p, const MatchEffects& e) const {
    return blhmm::log_effects_density(p, e);
  }
  double match_loglik(const ModelParams& p, const MatchEffects& e, const MatchData& m) const {
    return blhmm::match_loglik(p, e, m);
  }
};

}  // namespace blhmm
