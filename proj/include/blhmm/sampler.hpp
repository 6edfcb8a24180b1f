#pragma once

// Adaptive Metropolis-within-Gibbs over (theta, psi) with the hidden states
// summed out, plus forward-filtering backward-sampling for the states.
//
// Blocks, visited in this order every iteration:
//   - one scalar block per global parameter (random walk on log for SDs,
//     logit for delta_c, identity otherwise);
//   - one scale move per SD: a random walk on log(sigma) that rescales the
//     matching effect of every match by sigma'/sigma;
//   - two covariance-adapted joint blocks, one over the emission
//     coefficients (alpha_c, alpha_h, alpha_d, alpha_ft) and one over
//     (beta_ch, beta_hc, logit delta_c);
//   - one 3-d block per match holding (a, b_ch, b_hc).
// Proposal scales adapt by Robbins-Monro on log(scale) once per
// `adapt_window` iterations during burn-in and are frozen afterwards.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "blhmm/data.hpp"
#include "blhmm/error.hpp"
#include "blhmm/model.hpp"
#include "blhmm/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace blhmm {

struct SamplerConfig {
  int n_chains = 3;
  int n_burnin = 30000;
  int n_iterations = 30000;
  int thin = 30;
  std::uint64_t seed = 20060620;
  int adapt_window = 50;
  double target_accept = 0.44;          // scalar blocks
  double target_accept_effects = 0.35;  // 3-d match blocks
  // Multi-start pilot; unused when an explicit starting point is given.
  int n_starts = 10;
  int pilot_sweeps = 200;
};

inline void validate(const SamplerConfig& c) {
  auto fail = [](const std::string& m) { throw InputError("sampler config: " + m); };
  if (c.n_chains < 1) fail("n_chains must be positive");
  if (c.n_burnin < 1) fail("n_burnin must be positive");
  if (c.n_iterations < 1) fail("n_iterations must be positive");
  if (c.thin < 1) fail("thin must be positive");
  if (c.thin > c.n_iterations) fail("thin must not exceed n_iterations");
  if (c.adapt_window < 1) fail("adapt_window must be positive");
  if (c.n_starts < 1) fail("n_starts must be positive");
  if (c.pilot_sweeps < 0) fail("pilot_sweeps must be non-negative");
  for (double t : {c.target_accept, c.target_accept_effects})
    if (!(t > 0.0 && t < 1.0)) fail("target acceptance rates must lie in (0, 1)");
}

struct PosteriorDraw {
  ModelParams params;
  std::vector<MatchEffects> effects;
  int chain_id = 0;
  int iteration = 0;  // 1-based post-burn-in iteration
  double logpost = 0.0;
};

struct BlockStats {
  std::string name;
  double acceptance_rate = 0.0;  // post-burn-in, averaged over chains
  double scale = 0.0;            // frozen proposal scale, averaged over chains
};

struct ChainSet {
  std::vector<PosteriorDraw> draws;  // ordered by (chain_id, iteration)
  SamplerConfig config;
  std::vector<std::string> match_ids;
  std::vector<BlockStats> acceptance_rates;

  std::size_t n_chains() const {
    int n = 0;
    for (const auto& d : draws) n = std::max(n, d.chain_id + 1);
    return static_cast<std::size_t>(n);
  }
  /// Values of one global parameter split by chain.
  std::vector<std::vector<double>> per_chain(Param p) const {
    std::vector<std::vector<double>> out(n_chains());
    for (const auto& d : draws) out[static_cast<std::size_t>(d.chain_id)].push_back(d.params[p]);
    return out;
  }
  std::vector<double> pooled(Param p) const {
    std::vector<double> out;
    out.reserve(draws.size());
    for (const auto& d : draws) out.push_back(d.params[p]);
    return out;
  }
};

struct StateTrajectory {
  std::string match_id;
  std::vector<HiddenState> states;
};

// ---------------------------------------------------------------------------
// Blocks and unconstrained transforms

struct Block {
  enum class Kind { Global, Scale, Effects };
  Kind kind = Kind::Global;
  int index = 0;  // Param index, SD index (0 = a, 1 = b_ch, 2 = b_hc), or match index

  static Block global(Param p) { return {Kind::Global, static_cast<int>(p)}; }
  static Block scale(int sd) { return {Kind::Scale, sd}; }
  static Block effects(int match) { return {Kind::Effects, match}; }
  Param param() const { return static_cast<Param>(index); }
};

inline constexpr std::array<Param, 3> kSdParams = {Param::SigmaA, Param::SigmaCH, Param::SigmaHC};

inline double& effect_component(MatchEffects& e, int sd) {
  return sd == 0 ? e.a : (sd == 1 ? e.b_ch : e.b_hc);
}

inline double to_unconstrained(Param p, double v) {
  if (is_sd(p)) return std::log(v);
  if (p == Param::DeltaC) return logit(v);
  return v;
}

inline double from_unconstrained(Param p, double u) {
  if (is_sd(p)) return std::exp(u);
  if (p == Param::DeltaC) return logistic(u);
  return u;
}

/// log |d value / d unconstrained| at `v`.
inline double log_jacobian(Param p, double v) {
  if (is_sd(p)) return std::log(v);
  if (p == Param::DeltaC) return std::log(v) + std::log1p(-v);
  return 0.0;
}

/// Unnormalized log posterior of a full draw under `model`.
template <class Model = HmmModel>
double draw_logpost(const SeasonData& data, const PosteriorDraw& d, const Model& model = {}) {
  if (d.effects.size() != data.n_matches())
    throw std::invalid_argument("draw_logpost: effects do not match the data");
  double lp = model.log_prior_params(d.params);
  if (lp == kNegInf) return kNegInf;
  for (std::size_t i = 0; i < data.n_matches(); ++i) {
    lp += model.log_effects_density(d.params, d.effects[i]);
    lp += model.match_loglik(d.params, d.effects[i], data.matches[i]);
  }
  return lp;
}

/// Log Metropolis-Hastings ratio for moving `current` to `proposal` under
/// `block`, for proposals that are symmetric on the block's unconstrained
/// scale. Includes the Jacobian of the transform; for a scale move, that is
/// (N + 1) log(sigma'/sigma) since N effects are rescaled along with sigma.
template <class Model = HmmModel>
double block_log_ratio(const SeasonData& data, const Block& block, const PosteriorDraw& current,
                       const PosteriorDraw& proposal, const Model& model = {}) {
  auto logpost = [&](const PosteriorDraw& d) { return draw_logpost(data, d, model); };
  const double new_lp = logpost(proposal);
  if (new_lp == kNegInf || std::isnan(new_lp)) return kNegInf;
  double ratio = new_lp - logpost(current);
  if (block.kind == Block::Kind::Global) {
    ratio += log_jacobian(block.param(), proposal.params[block.param()]) -
             log_jacobian(block.param(), current.params[block.param()]);
  } else if (block.kind == Block::Kind::Scale) {
    const Param p = kSdParams[static_cast<std::size_t>(block.index)];
    ratio += static_cast<double>(data.n_matches() + 1) *
             (std::log(proposal.params[p]) - std::log(current.params[p]));
  }
  return ratio;
}

inline bool metropolis_accept(double log_ratio, RandomStream& rng) {
  if (std::isnan(log_ratio) || log_ratio == kNegInf) return false;
  if (log_ratio >= 0.0) return true;
  return std::log(rng.uniform()) < log_ratio;
}

/// Builds the random-walk proposal for `block` from standard normal
/// increments z (one for scalar blocks, three for match blocks).
inline PosteriorDraw propose(const Block& block, const PosteriorDraw& current, double scale,
                             std::span<const double> z) {
  PosteriorDraw next = current;
  switch (block.kind) {
    case Block::Kind::Global: {
      const Param p = block.param();
      next.params[p] = from_unconstrained(p, to_unconstrained(p, current.params[p]) + scale * z[0]);
      break;
    }
    case Block::Kind::Scale: {
      const Param p = kSdParams[static_cast<std::size_t>(block.index)];
      const double factor = std::exp(scale * z[0]);
      next.params[p] = current.params[p] * factor;
      for (auto& e : next.effects) effect_component(e, block.index) *= factor;
      break;
    }
    case Block::Kind::Effects: {
      auto& e = next.effects[static_cast<std::size_t>(block.index)];
      e.a += scale * z[0];
      e.b_ch += scale * z[1];
      e.b_hc += scale * z[2];
      break;
    }
  }
  return next;
}

/// One Metropolis update of `block`, recomputing the full log posterior.
/// The production sampler caches per-match terms instead; this form is the
/// reference used to check it.
template <class Model = HmmModel>
std::pair<PosteriorDraw, bool> mh_block_update(const SeasonData& data, const Block& block,
                                               const PosteriorDraw& current, double scale,
                                               RandomStream& rng, const Model& model = {}) {
  if (!(scale > 0.0)) throw std::invalid_argument("mh_block_update: scale must be positive");
  std::array<double, 3> z{};
  const int dim = block.kind == Block::Kind::Effects ? 3 : 1;
  for (int k = 0; k < dim; ++k) z[static_cast<std::size_t>(k)] = rng.normal();
  PosteriorDraw proposal = propose(block, current, scale, std::span(z.data(), dim));
  const double ratio = block_log_ratio(data, block, current, proposal, model);
  if (metropolis_accept(ratio, rng)) {
    proposal.logpost = draw_logpost(data, proposal, model);
    return {std::move(proposal), true};
  }
  return {current, false};
}

/// Random-walk Metropolis step on an arbitrary 1-d log density.
template <class LogDensity>
std::pair<double, bool> metropolis_step(const LogDensity& log_density, double x, double scale,
                                        RandomStream& rng) {
  const double y = x + scale * rng.normal();
  if (metropolis_accept(log_density(y) - log_density(x), rng)) return {y, true};
  return {x, false};
}

// ---------------------------------------------------------------------------
// The chain

namespace detail {

inline constexpr double kJointTargetAccept = 0.25;

struct BlockTuner {
  double log_scale = 0.0;
  int window_accepts = 0;
  int window_tries = 0;
  int n_windows = 0;
  long long post_accepts = 0;
  long long post_tries = 0;

  double scale() const { return std::exp(log_scale); }
  void record(bool accepted, bool burnin) {
    if (burnin) {
      ++window_tries;
      window_accepts += accepted ? 1 : 0;
    } else {
      ++post_tries;
      post_accepts += accepted ? 1 : 0;
    }
  }
  void adapt(double target) {
    if (window_tries == 0) return;
    ++n_windows;
    const double rate = static_cast<double>(window_accepts) / window_tries;
    const double gain = std::min(1.0, 2.0 / std::sqrt(static_cast<double>(n_windows)));
    log_scale += gain * (rate - target) * 2.0;
    log_scale = std::clamp(log_scale, -12.0, 3.0);
    window_accepts = window_tries = 0;
  }
};

/// Covariance-adapted random walk over several global parameters on their
/// unconstrained scales. The proposal covariance is 2.38^2/d times the
/// empirical covariance of the burn-in draws seen so far (diagonal fallback
/// until enough draws exist), multiplied by an adapted scale factor.
struct JointTuner {
  std::string name;
  std::vector<Param> params;
  long long n_seen = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd scatter;
  Eigen::MatrixXd factor;  // lower Cholesky factor of the proposal covariance

  JointTuner(std::string n, std::vector<Param> ps) : name(std::move(n)), params(std::move(ps)) {
    const auto d = static_cast<Eigen::Index>(params.size());
    mean = Eigen::VectorXd::Zero(d);
    scatter = Eigen::MatrixXd::Zero(d, d);
    factor = Eigen::MatrixXd::Zero(d, d);
  }

  Eigen::VectorXd unconstrained(const ModelParams& p) const {
    Eigen::VectorXd u(static_cast<Eigen::Index>(params.size()));
    for (std::size_t k = 0; k < params.size(); ++k)
      u[static_cast<Eigen::Index>(k)] = to_unconstrained(params[k], p[params[k]]);
    return u;
  }

  void observe(const ModelParams& p) {
    const Eigen::VectorXd u = unconstrained(p);
    ++n_seen;
    const Eigen::VectorXd delta = u - mean;
    mean += delta / static_cast<double>(n_seen);
    scatter += delta * (u - mean).transpose();
  }

  void refresh(std::span<const double> fallback_sd) {
    const auto d = static_cast<Eigen::Index>(params.size());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    if (n_seen > 10 * d) {
      cov = scatter / static_cast<double>(n_seen - 1);
      cov += 1e-10 * Eigen::MatrixXd::Identity(d, d);
    } else {
      for (Eigen::Index k = 0; k < d; ++k) cov(k, k) = fallback_sd[static_cast<std::size_t>(k)] *
                                                    fallback_sd[static_cast<std::size_t>(k)];
    }
    cov *= 2.38 * 2.38 / static_cast<double>(d);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) factor = llt.matrixL();
  }
};

template <class Model>
class Chain {
 public:
  Chain(const SeasonData& data, const SamplerConfig& config, const Model& model,
        RandomStream rng)
      : data_(data), config_(config), model_(model), rng_(std::move(rng)) {}

  void initialize(const std::optional<ModelParams>& init) {
    const std::size_t n = data_.n_matches();
    for (int attempt = 0; attempt < 100; ++attempt) {
      ModelParams p;
      if (init) {
        p = *init;
      } else {
        for (Param q : {Param::AlphaC, Param::AlphaH, Param::AlphaD, Param::AlphaFT,
                        Param::BetaCH, Param::BetaHC})
          p[q] = rng_.normal();
        if (p.alpha_c > p.alpha_h) std::swap(p.alpha_c, p.alpha_h);
        for (Param q : kSdParams) p[q] = rng_.uniform(0.05, 1.0);
        p.delta_c = rng_.uniform(0.3, 0.7);
      }
      params_ = p;
      effects_.assign(n, MatchEffects{});
      refresh();
      if (std::isfinite(logpost())) return;
      if (init) break;
    }
    throw std::runtime_error("cannot initialize: log posterior is not finite at the starting point");
  }

  void init_tuners() {
    tuners_.clear();
    for (Param p : kAllParams) {
      BlockTuner t;
      t.log_scale = std::log(is_sd(p) ? 0.3 : (p == Param::DeltaC ? 0.5 : 0.1));
      tuners_.push_back(t);
    }
    for (std::size_t s = 0; s < kSdParams.size(); ++s) tuners_.push_back({std::log(0.3)});
    joints_ = default_joint_blocks();
    for (std::size_t j = 0; j < joints_.size(); ++j) tuners_.push_back({0.0});
    for (std::size_t i = 0; i < data_.n_matches(); ++i) tuners_.push_back({std::log(0.1)});
    refresh_joint_factors();
  }

  static std::vector<JointTuner> default_joint_blocks() {
    return {JointTuner("joint:emission",
                       {Param::AlphaC, Param::AlphaH, Param::AlphaD, Param::AlphaFT}),
            JointTuner("joint:transition", {Param::BetaCH, Param::BetaHC, Param::DeltaC})};
  }

  /// Draws n_starts random starting points (or takes the given one). Each
  /// gets pilot_sweeps adaptive sweeps of the coefficients with the match
  /// effects held at zero; the chain continues from the start whose pilot
  /// reached the highest log-likelihood.
  void start(const std::optional<ModelParams>& init) {
    const int n_starts = init ? 1 : config_.n_starts;
    std::optional<Chain> best;
    double best_score = kNegInf;
    for (int k = 0; k < n_starts; ++k) {
      initialize(init);
      init_tuners();
      double score = sum(match_ll_);
      if (!init) {
        for (int it = 1; it <= config_.pilot_sweeps; ++it) {
          pooled_sweep();
          if (it % config_.adapt_window == 0) adapt_all();
          score = std::max(score, sum(match_ll_));
        }
      }
      if (!best || score > best_score) {
        best.emplace(*this);
        best_score = score;
      }
    }
    params_ = best->params_;
    tuners_ = best->tuners_;
    joints_ = best->joints_;
    refresh();
    for (auto& t : tuners_) t.n_windows = 0;
  }

  std::vector<PosteriorDraw> run(int chain_id) {
    std::vector<PosteriorDraw> out;
    out.reserve(static_cast<std::size_t>(config_.n_iterations / config_.thin));
    for (int it = 1; it <= config_.n_burnin; ++it) {
      sweep(true);
      // Covariance learning skips the first quarter of burn-in.
      if (it > config_.n_burnin / 4)
        for (auto& j : joints_) j.observe(params_);
      if (it % config_.adapt_window == 0) adapt_all();
    }
    for (int it = 1; it <= config_.n_iterations; ++it) {
      sweep(false);
      if (it % config_.thin == 0) {
        out.push_back(PosteriorDraw{params_, effects_, chain_id, it, logpost()});
      }
    }
    return out;
  }

  const std::vector<BlockTuner>& tuners() const { return tuners_; }

  double logpost() const {
    double lp = prior_params_;
    for (std::size_t i = 0; i < effects_.size(); ++i) lp += effect_density_[i] + match_ll_[i];
    return lp;
  }

 private:
  void refresh() {
    const std::size_t n = data_.n_matches();
    prior_params_ = model_.log_prior_params(params_);
    effect_density_.resize(n);
    match_ll_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      effect_density_[i] = model_.log_effects_density(params_, effects_[i]);
      match_ll_[i] = model_.match_loglik(params_, effects_[i], data_.matches[i]);
    }
  }

  std::size_t joint_offset() const { return kNumParams + kSdParams.size(); }
  std::size_t effects_offset() const { return joint_offset() + joints_.size(); }

  void adapt_all() {
    for (std::size_t b = 0; b < tuners_.size(); ++b) {
      double target = config_.target_accept_effects;
      if (b < joint_offset()) target = config_.target_accept;
      else if (b < effects_offset()) target = kJointTargetAccept;
      tuners_[b].adapt(target);
    }
    refresh_joint_factors();
  }

  void refresh_joint_factors() {
    for (auto& j : joints_) {
      std::vector<double> sds;
      for (Param p : j.params) sds.push_back(tuners_[static_cast<std::size_t>(p)].scale());
      j.refresh(sds);
    }
  }

  static double sum(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }

  void sweep(bool burnin) {
    for (Param p : kAllParams) update_global(p, burnin);
    for (int s = 0; s < static_cast<int>(kSdParams.size()); ++s) update_scale(s, burnin);
    for (std::size_t j = 0; j < joints_.size(); ++j) update_joint(j, burnin);
    for (std::size_t i = 0; i < data_.n_matches(); ++i) update_effects(i, burnin);
  }

  // Coefficients only, with the match effects held at zero.
  void pooled_sweep() {
    for (Param p : kAllParams)
      if (!is_sd(p)) update_global(p, true);
    for (std::size_t j = 0; j < joints_.size(); ++j) update_joint(j, true);
  }

  void update_joint(std::size_t j, bool burnin) {
    BlockTuner& tuner = tuners_[joint_offset() + j];
    const JointTuner& block = joints_[j];
    const auto d = static_cast<Eigen::Index>(block.params.size());
    Eigen::VectorXd z(d);
    for (Eigen::Index k = 0; k < d; ++k) z[k] = rng_.normal();
    const Eigen::VectorXd u = block.unconstrained(params_) + tuner.scale() * (block.factor * z);
    ModelParams next = params_;
    double log_jac = 0.0;
    for (std::size_t k = 0; k < block.params.size(); ++k) {
      const Param p = block.params[k];
      next[p] = from_unconstrained(p, u[static_cast<Eigen::Index>(k)]);
      log_jac += log_jacobian(p, next[p]) - log_jacobian(p, params_[p]);
    }
    bool accepted = false;
    const double prior = model_.log_prior_params(next);
    if (prior != kNegInf && std::isfinite(log_jac)) {
      const std::size_t n = data_.n_matches();
      std::vector<double> ll(n);
      for (std::size_t i = 0; i < n; ++i)
        ll[i] = model_.match_loglik(next, effects_[i], data_.matches[i]);
      const double ratio = prior - prior_params_ + log_jac + sum(ll) - sum(match_ll_);
      if (metropolis_accept(ratio, rng_)) {
        accepted = true;
        params_ = next;
        prior_params_ = prior;
        match_ll_ = std::move(ll);
      }
    }
    tuner.record(accepted, burnin);
  }

  void update_global(Param p, bool burnin) {
    BlockTuner& tuner = tuners_[static_cast<std::size_t>(p)];
    const double old_value = params_[p];
    const double u = to_unconstrained(p, old_value) + tuner.scale() * rng_.normal();
    ModelParams next = params_;
    next[p] = from_unconstrained(p, u);
    bool accepted = false;
    const double prior = model_.log_prior_params(next);
    if (prior != kNegInf) {
      const std::size_t n = data_.n_matches();
      double ratio = prior - prior_params_ + log_jacobian(p, next[p]) - log_jacobian(p, old_value);
      std::vector<double> density, ll;
      if (is_sd(p)) {
        density.resize(n);
        for (std::size_t i = 0; i < n; ++i)
          density[i] = model_.log_effects_density(next, effects_[i]);
        ratio += sum(density) - sum(effect_density_);
      } else {
        ll.resize(n);
        for (std::size_t i = 0; i < n; ++i)
          ll[i] = model_.match_loglik(next, effects_[i], data_.matches[i]);
        ratio += sum(ll) - sum(match_ll_);
      }
      if (metropolis_accept(ratio, rng_)) {
        accepted = true;
        params_ = next;
        prior_params_ = prior;
        if (is_sd(p)) effect_density_ = std::move(density);
        else match_ll_ = std::move(ll);
      }
    }
    tuner.record(accepted, burnin);
  }

  void update_scale(int sd, bool burnin) {
    BlockTuner& tuner = tuners_[kNumParams + static_cast<std::size_t>(sd)];
    const Param p = kSdParams[static_cast<std::size_t>(sd)];
    const double factor = std::exp(tuner.scale() * rng_.normal());
    ModelParams next = params_;
    next[p] = params_[p] * factor;
    bool accepted = false;
    const double prior = model_.log_prior_params(next);
    if (prior != kNegInf) {
      const std::size_t n = data_.n_matches();
      std::vector<MatchEffects> effects = effects_;
      std::vector<double> density(n), ll(n);
      for (std::size_t i = 0; i < n; ++i) {
        effect_component(effects[i], sd) *= factor;
        density[i] = model_.log_effects_density(next, effects[i]);
        ll[i] = model_.match_loglik(next, effects[i], data_.matches[i]);
      }
      const double ratio = prior - prior_params_ + sum(density) - sum(effect_density_) +
                           sum(ll) - sum(match_ll_) +
                           static_cast<double>(n + 1) * std::log(factor);
      if (metropolis_accept(ratio, rng_)) {
        accepted = true;
        params_ = next;
        prior_params_ = prior;
        effects_ = std::move(effects);
        effect_density_ = std::move(density);
        match_ll_ = std::move(ll);
      }
    }
    tuner.record(accepted, burnin);
  }

  void update_effects(std::size_t i, bool burnin) {
    BlockTuner& tuner = tuners_[effects_offset() + i];
    const double s = tuner.scale();
    MatchEffects next = effects_[i];
    next.a += s * rng_.normal();
    next.b_ch += s * rng_.normal();
    next.b_hc += s * rng_.normal();
    const double density = model_.log_effects_density(params_, next);
    bool accepted = false;
    if (density != kNegInf) {
      const double ll = model_.match_loglik(params_, next, data_.matches[i]);
      const double ratio = density - effect_density_[i] + ll - match_ll_[i];
      if (metropolis_accept(ratio, rng_)) {
        accepted = true;
        effects_[i] = next;
        effect_density_[i] = density;
        match_ll_[i] = ll;
      }
    }
    tuner.record(accepted, burnin);
  }

  const SeasonData& data_;
  SamplerConfig config_;
  const Model& model_;
  RandomStream rng_;
  ModelParams params_;
  std::vector<MatchEffects> effects_;
  double prior_params_ = 0.0;
  std::vector<double> effect_density_;
  std::vector<double> match_ll_;
  std::vector<BlockTuner> tuners_;
  std::vector<JointTuner> joints_;
};

}  // namespace detail

inline std::vector<std::string> block_names(const SeasonData& data) {
  std::vector<std::string> names;
  for (auto n : kParamNames) names.emplace_back(n);
  for (Param p : kSdParams) names.push_back("scale:" + std::string(name_of(p)));
  names.emplace_back("joint:emission");
  names.emplace_back("joint:transition");
  for (const auto& m : data.matches) names.push_back("effects:" + m.match_id);
  return names;
}

/// Runs config.n_chains independent chains (in parallel on up to `threads`
/// threads) and returns every thin-th post-burn-in state. Chain c draws
/// from RandomStream(substream_seed(config.seed, c)), so the result does
/// not depend on `threads`.
template <class Model = HmmModel>
ChainSet run_chains(const SeasonData& data, const SamplerConfig& config,
                    const std::optional<ModelParams>& init = std::nullopt, int threads = 1,
                    const Model& model = {}) {
  validate(config);
  if (data.n_matches() == 0) throw InputError("run_chains: no matches");
  const auto n_chains = static_cast<std::size_t>(config.n_chains);
  std::vector<std::vector<PosteriorDraw>> per_chain(n_chains);
  std::vector<std::vector<detail::BlockTuner>> tuners(n_chains);
  std::vector<std::exception_ptr> errors(n_chains);

  auto work = [&](std::size_t c) {
    try {
      detail::Chain<Model> chain(data, config, model,
                                 RandomStream(substream_seed(config.seed, c)));
      chain.start(init);
      per_chain[c] = chain.run(static_cast<int>(c));
      tuners[c] = chain.tuners();
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  const std::size_t n_threads =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, n_chains);
  if (n_threads == 1) {
    for (std::size_t c = 0; c < n_chains; ++c) work(c);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t c = t; c < n_chains; c += n_threads) work(c);
      });
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ChainSet out;
  out.config = config;
  for (const auto& m : data.matches) out.match_ids.push_back(m.match_id);
  for (auto& chain : per_chain)
    for (auto& d : chain) out.draws.push_back(std::move(d));
  const auto names = block_names(data);
  for (std::size_t b = 0; b < names.size(); ++b) {
    BlockStats s{names[b], 0.0, 0.0};
    for (std::size_t c = 0; c < n_chains; ++c) {
      const auto& t = tuners[c][b];
      s.acceptance_rate += t.post_tries ? static_cast<double>(t.post_accepts) / t.post_tries : 0.0;
      s.scale += t.scale();
    }
    s.acceptance_rate /= static_cast<double>(n_chains);
    s.scale /= static_cast<double>(n_chains);
    out.acceptance_rates.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hidden states

/// log f(y, z | theta, psi) for a fixed state path.
inline double complete_data_loglik(const ModelParams& params, const MatchEffects& effects,
                                   const MatchData& match, std::span<const HiddenState> states) {
  if (states.size() != match.size())
    throw std::invalid_argument("complete_data_loglik: path length differs from match length");
  const TransitionMatrix P = transition_matrix(params, effects);
  double ll = 0.0;
  for (std::size_t n = 0; n < match.size(); ++n) {
    const HiddenState z = states[n];
    if (n == 0) ll += std::log(z == HiddenState::Cold ? params.delta_c : 1.0 - params.delta_c);
    else ll += std::log(P(states[n - 1], z));
    ll += std::log(outcome_probs(params, effects, match.shots[n])[static_cast<int>(z)]);
  }
  return ll;
}

struct FfbsDraw {
  StateTrajectory trajectory;
  double log_prob = 0.0;  // log probability the sampler assigned to this path
};

/// Forward-filtering backward-sampling: an exact draw of the hidden path
/// given the match outcomes, together with its sampling log-probability.
inline FfbsDraw ffbs_draw(const ModelParams& params, const MatchEffects& effects,
                          const MatchData& match, RandomStream& rng) {
  FfbsDraw out;
  out.trajectory.match_id = match.match_id;
  const std::size_t m = match.size();
  if (m == 0) return out;
  const TransitionMatrix P = transition_matrix(params, effects);
  std::vector<std::array<double, 2>> filtered(m);
  for (std::size_t n = 0; n < m; ++n) {
    const auto e = outcome_probs(params, effects, match.shots[n]);
    double fc, fh;
    if (n == 0) {
      fc = params.delta_c * e[0];
      fh = (1.0 - params.delta_c) * e[1];
    } else {
      const auto& prev = filtered[n - 1];
      fc = (prev[0] * P.p_cc + prev[1] * P.p_hc) * e[0];
      fh = (prev[0] * P.p_ch + prev[1] * P.p_hh) * e[1];
    }
    const double s = fc + fh;
    filtered[n] = s > 0.0 ? std::array<double, 2>{fc / s, fh / s} : std::array<double, 2>{0.5, 0.5};
  }
  auto& states = out.trajectory.states;
  states.resize(m);
  auto pick = [&](double w_cold, double w_hot) {
    const double p_cold = w_cold / (w_cold + w_hot);
    const bool cold = rng.uniform() < p_cold;
    out.log_prob += std::log(cold ? p_cold : 1.0 - p_cold);
    return cold ? HiddenState::Cold : HiddenState::Hot;
  };
  states[m - 1] = pick(filtered[m - 1][0], filtered[m - 1][1]);
  for (std::size_t n = m - 1; n-- > 0;) {
    const HiddenState next = states[n + 1];
    states[n] = pick(filtered[n][0] * P(HiddenState::Cold, next),
                     filtered[n][1] * P(HiddenState::Hot, next));
  }
  return out;
}

inline StateTrajectory ffbs_states(const ModelParams& params, const MatchEffects& effects,
                                   const MatchData& match, RandomStream& rng) {
  return ffbs_draw(params, effects, match, rng).trajectory;
}

}  // namespace blhmm
