#pragma once

// Closed forms for a two-state chain with switch probabilities p_ch, p_hc.
// With s = p_ch + p_hc and lambda = 1 - s (the second eigenvalue):
//
//   P^n      = Pi + lambda^n / s * A
//   M(n)     = sum_{t=0..n} P^t = (n + 1) Pi + (1 - lambda^(n+1)) / s^2 * A
//
// where Pi has both rows equal to (p_hc, p_ch) / s and
// A = [[p_ch, -p_ch], [-p_hc, p_hc]].

#include <cmath>
#include <stdexcept>

#include "blhmm/model.hpp"

namespace blhmm {

struct StationaryDist {
  double delta_c_stat = 0.5;
  double delta_h_stat = 0.5;

  double operator[](HiddenState s) const {
    return s == HiddenState::Cold ? delta_c_stat : delta_h_stat;
  }
};

/// Expected visits to each state over times 0..n given the starting state.
struct OccupancyMatrix {
  double m_cc = 0.0;
  double m_ch = 0.0;
  double m_hc = 0.0;
  double m_hh = 0.0;

  double operator()(HiddenState from, HiddenState to) const {
    if (from == HiddenState::Cold) return to == HiddenState::Cold ? m_cc : m_ch;
    return to == HiddenState::Cold ? m_hc : m_hh;
  }
};

inline double switch_rate(const TransitionMatrix& P) { return P.p_ch + P.p_hc; }

/// n-step transition matrix. A chain that never switches (s = 0) is the
/// identity for every n.
inline TransitionMatrix n_step(const TransitionMatrix& P, int n) {
  if (n < 0) throw std::invalid_argument("n_step: n must be non-negative");
  const double s = switch_rate(P);
  if (s == 0.0) return {1.0, 0.0, 0.0, 1.0};
  if (n == 0) return {1.0, 0.0, 0.0, 1.0};
  const double decay = std::pow(1.0 - s, n) / s;
  const double to_h = P.p_ch / s - decay * P.p_ch;
  const double to_c = P.p_hc / s - decay * P.p_hc;
  return {1.0 - to_h, to_h, to_c, 1.0 - to_c};
}

inline StationaryDist stationary(const TransitionMatrix& P) {
  const double s = switch_rate(P);
  if (!(s > 0.0)) throw std::domain_error("stationary distribution not unique: chain never switches");
  return {P.p_hc / s, P.p_ch / s};
}

inline OccupancyMatrix occupancy(const TransitionMatrix& P, int n) {
  if (n < 0) throw std::invalid_argument("occupancy: n must be non-negative");
  const double s = switch_rate(P);
  if (!(s > 0.0)) throw std::domain_error("occupancy: degenerate chain that never switches");
  if (n == 0) return {1.0, 0.0, 0.0, 1.0};
  const double total = n + 1.0;
  const double transient = (1.0 - std::pow(1.0 - s, n + 1)) / (s * s);
  const double m_ch = total * P.p_ch / s - transient * P.p_ch;
  const double m_hc = total * P.p_hc / s - transient * P.p_hc;
  return {total - m_ch, m_ch, m_hc, total - m_hc};
}

/// P(sojourn = n): the chain stays exactly n more steps, then leaves.
inline double sojourn_pmf(double p_stay, int n) {
  if (p_stay < 0.0 || p_stay > 1.0) throw std::invalid_argument("sojourn_pmf: p_stay outside [0, 1]");
  if (p_stay == 1.0) throw std::domain_error("infinite sojourn: p_stay = 1");
  if (n < 0) return 0.0;
  return std::pow(p_stay, n) * (1.0 - p_stay);
}

/// P(sojourn >= k) = p_stay^k: a streak of at least k further shots.
inline double streak_prob(double p_stay, int k) {
  if (p_stay < 0.0 || p_stay > 1.0) throw std::invalid_argument("streak_prob: p_stay outside [0, 1]");
  if (k <= 0) return 1.0;
  return std::pow(p_stay, k);
}

inline double stay_prob(const TransitionMatrix& P, HiddenState s) {
  return s == HiddenState::Cold ? P.p_cc : P.p_hh;
}

}  // namespace blhmm
