#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <sstream>

#include "blhmm/derive.hpp"
#include "oracles.hpp"

using namespace blhmm;

namespace {

/// `per_chain` identical draws at `p` in each of `chains` chains.
ChainSet constant_chains(const ModelParams& p, int chains = 1, int per_chain = 1,
                         std::vector<MatchEffects> effects = {}) {
  ChainSet cs;
  for (std::size_t i = 0; i < effects.size(); ++i) cs.match_ids.push_back("m" + std::to_string(i + 1));
  for (int c = 0; c < chains; ++c)
    for (int it = 1; it <= per_chain; ++it) {
      PosteriorDraw d;
      d.params = p;
      d.effects = effects;
      d.chain_id = c;
      d.iteration = it;
      cs.draws.push_back(d);
    }
  return cs;
}

ModelParams no_effects(ModelParams p) {
  p.sigma_a = p.sigma_ch = p.sigma_hc = 0.0;
  return p;
}

double single(const ChainSet& cs, const QuantitySpec& q, std::uint64_t seed = 1) {
  RandomStream rng(seed);
  return posterior_derive(cs, q, rng).samples.at(0);
}

QuantitySpec basket(Condition c, double distance, std::optional<int> shot = std::nullopt) {
  QuantitySpec q;
  q.kind = QuantitySpec::Kind::Basket;
  q.condition = c;
  q.distance_ft = distance;
  q.shot_index = shot;
  return q;
}

}  // namespace

TEST(MarginalTransition, ZeroScalesGivePlugInLogistic) {
  const auto cs = constant_chains(no_effects(kMiamiPosteriorMeans));
  for (int n_mc : {1, 200}) {
    RandomStream rng(2);
    const auto ch = marginal_transition(cs, Direction::CH, n_mc, rng);
    const auto hc = marginal_transition(cs, Direction::HC, n_mc, rng);
    EXPECT_NEAR(ch.samples[0], oracle::inv_logit(-0.49), 1e-15);
    EXPECT_NEAR(ch.samples[0], 0.380, 0.0005);
    EXPECT_NEAR(hc.samples[0], 0.594, 0.0005);
  }
}

TEST(MarginalTransition, AgreesWithQuadrature) {
  ModelParams p = kMiamiPosteriorMeans;
  p.sigma_ch = 0.5;
  const auto cs = constant_chains(p);
  const int n_mc = 1000000;
  RandomStream rng(3);
  const double mc = marginal_transition(cs, Direction::CH, n_mc, rng).samples[0];

  auto integrand = [&](double b) {
    return oracle::inv_logit(-0.49 + b) * std::exp(-0.5 * b * b / 0.25) / (0.5 * std::sqrt(2 * M_PI));
  };
  const double exact = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -6.0, 6.0, 15, 1e-14);
  auto second = [&](double b) {
    const double v = oracle::inv_logit(-0.49 + b);
    return v * v * std::exp(-0.5 * b * b / 0.25) / (0.5 * std::sqrt(2 * M_PI));
  };
  const double var = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(second, -6.0, 6.0, 15, 1e-14) -
                     exact * exact;
  EXPECT_NEAR(mc, exact, 3.0 * std::sqrt(var / n_mc));
  EXPECT_GT(exact, oracle::inv_logit(-0.49));  // averaging pulls toward 1/2
}

TEST(BasketProb, ReferenceValuesAtPosteriorMeans) {
  const auto cs = constant_chains(kMiamiPosteriorMeans);
  RandomStream rng(4);
  EXPECT_NEAR(basket_prob(cs, Condition::Cold, std::nullopt, 0.0, false, 200, rng).samples[0], 0.46, 0.01);
  EXPECT_GT(basket_prob(cs, Condition::Hot, std::nullopt, 0.25, false, 200, rng).samples[0], 0.999);
  const double three = basket_prob(cs, Condition::Unknown, std::nullopt, 25.0, false, 200, rng).samples[0];
  EXPECT_GE(three, 0.3);
  EXPECT_LE(three, 0.45);
}

TEST(BasketProb, UnknownIsConvexCombination) {
  const auto p = no_effects(kMiamiPosteriorMeans);
  const auto cs = constant_chains(p);
  const double pi_c = oracle::inv_logit(0.38) / (oracle::inv_logit(0.38) + oracle::inv_logit(-0.49));
  for (double d : {0.0, 7.5, 19.0, 28.0}) {
    const double cold = single(cs, basket(Condition::Cold, d));
    const double hot = single(cs, basket(Condition::Hot, d));
    const double unknown = single(cs, basket(Condition::Unknown, d));
    EXPECT_NEAR(unknown, pi_c * cold + (1 - pi_c) * hot, 1e-12);
    EXPECT_GE(unknown, std::min(cold, hot));
    EXPECT_LE(unknown, std::max(cold, hot));
  }
  // First shot: the weight is delta_c itself.
  const double first = single(cs, basket(Condition::Unknown, 10.0, 1));
  EXPECT_NEAR(first,
              p.delta_c * single(cs, basket(Condition::Cold, 10.0)) +
                  (1 - p.delta_c) * single(cs, basket(Condition::Hot, 10.0)),
              1e-12);
  // Later shots approach the stationary mixture.
  EXPECT_NEAR(single(cs, basket(Condition::Unknown, 10.0, 60)), single(cs, basket(Condition::Unknown, 10.0)), 1e-12);
}

TEST(BasketProb, DistanceEffect) {
  ModelParams flat = kMiamiPosteriorMeans;
  flat.alpha_d = 0.0;
  const auto cs_flat = constant_chains(flat);
  for (auto c : {Condition::Cold, Condition::Hot, Condition::Unknown})
    EXPECT_EQ(single(cs_flat, basket(c, 2.0)), single(cs_flat, basket(c, 27.0)));

  const auto cs = constant_chains(kMiamiPosteriorMeans);
  for (auto c : {Condition::Cold, Condition::Hot, Condition::Unknown}) {
    double prev = 2.0;
    for (int d = 0; d <= 30; d += 3) {
      const double v = single(cs, basket(c, d));
      EXPECT_LT(v, prev) << "distance " << d;
      prev = v;
    }
  }
}

TEST(PosteriorDerive, ReferenceQuantitiesAtPosteriorMeans) {
  const auto cs = constant_chains(kMiamiPosteriorMeans, 2, 4);
  RandomStream rng(5);
  QuantitySpec q;
  q.kind = QuantitySpec::Kind::Stationary;
  EXPECT_NEAR(posterior_derive(cs, q, rng).summary.mean, 0.61, 0.01);
  q.kind = QuantitySpec::Kind::Occupancy;
  q.n = 120;
  EXPECT_NEAR(posterior_derive(cs, q, rng).summary.mean, 74.0, 0.5);
  q.to = HiddenState::Hot;
  EXPECT_NEAR(posterior_derive(cs, q, rng).summary.mean, 46.9, 0.5);
  q.kind = QuantitySpec::Kind::Streak;
  q.k = 3;
  EXPECT_NEAR(posterior_derive(cs, q, rng).summary.mean, 0.24, 0.02);
  q.state = HiddenState::Hot;
  EXPECT_LT(posterior_derive(cs, q, rng).summary.mean, 0.1);
}

TEST(PosteriorDerive, IdenticalDrawsHaveNoSpread) {
  const auto p = no_effects(kMiamiPosteriorMeans);
  const auto cs = constant_chains(p, 2, 5);
  RandomStream rng(6);
  QuantitySpec q;
  q.kind = QuantitySpec::Kind::NStep;
  q.n = 4;
  q.from = HiddenState::Hot;
  q.to = HiddenState::Cold;
  const auto d = posterior_derive(cs, q, rng);
  ASSERT_EQ(d.samples.size(), 10u);
  EXPECT_NEAR(d.summary.sd, 0.0, 1e-14);
  const auto P = TransitionMatrix::from_switch(oracle::inv_logit(p.beta_ch), oracle::inv_logit(p.beta_hc));
  const auto M = oracle::power({P.p_cc, P.p_ch, P.p_hc, P.p_hh}, 4);
  EXPECT_NEAR(d.summary.mean, M.c, 1e-12);
  EXPECT_EQ(d.label, "nstep_hc_n4");
}

TEST(PosteriorDerive, PerMatchEffects) {
  const auto p = kMiamiPosteriorMeans;
  const std::vector<MatchEffects> effects = {{0.1, 0.4, -0.3}, {-0.2, -0.5, 0.2}};
  const auto cs = constant_chains(p, 1, 3, effects);
  QuantitySpec q;
  q.kind = QuantitySpec::Kind::Transition;
  q.match_id = "m2";
  EXPECT_NEAR(single(cs, q), oracle::inv_logit(p.beta_ch - 0.5), 1e-15);
  q.direction = Direction::HC;
  EXPECT_NEAR(single(cs, q), oracle::inv_logit(p.beta_hc + 0.2), 1e-15);
  auto b = basket(Condition::Cold, 12.0);
  b.match_id = "m1";
  EXPECT_NEAR(single(cs, b), oracle::inv_logit(p.alpha_c + p.alpha_d * 12.0 + 0.1), 1e-15);
  q.match_id = "m9";
  RandomStream rng(1);
  EXPECT_THROW(posterior_derive(cs, q, rng), InputError);
}

TEST(PosteriorDerive, SojournAndStreakAgree) {
  const auto cs = constant_chains(no_effects(kMiamiPosteriorMeans));
  QuantitySpec q;
  q.kind = QuantitySpec::Kind::Sojourn;
  q.state = HiddenState::Cold;
  double tail = 1.0;
  for (int n = 0; n < 3; ++n) {
    q.n = n;
    tail -= single(cs, q);
  }
  q.kind = QuantitySpec::Kind::Streak;
  q.k = 3;
  EXPECT_NEAR(single(cs, q), tail, 1e-14);
}

TEST(PosteriorDerive, DeterministicAcrossThreads) {
  ChainSet cs = constant_chains(kMiamiPosteriorMeans, 2, 30);
  for (std::size_t k = 0; k < cs.draws.size(); ++k) cs.draws[k].params.beta_ch += 0.01 * static_cast<double>(k);
  QuantitySpec q = basket(Condition::Unknown, 22.0, 5);
  RandomStream a(9), b(9);
  const auto one = posterior_derive(cs, q, a, 1);
  const auto many = posterior_derive(cs, q, b, 4);
  EXPECT_EQ(one.samples, many.samples);
  EXPECT_EQ(one.chain, many.chain);
}

TEST(PosteriorDerive, Validation) {
  const auto cs = constant_chains(kMiamiPosteriorMeans);
  RandomStream rng(1);
  QuantitySpec q;
  q.n_mc = 0;
  EXPECT_THROW(posterior_derive(cs, q, rng), InputError);
  q = basket(Condition::Unknown, 5.0, 0);
  EXPECT_THROW(posterior_derive(cs, q, rng), InputError);
  EXPECT_THROW(posterior_derive(ChainSet{}, QuantitySpec{}, rng), InputError);
  EXPECT_FALSE(quantity_from_name("first_passage"));
  EXPECT_EQ(*quantity_from_name("occupancy"), QuantitySpec::Kind::Occupancy);
}

TEST(DerivedOutput, CsvJsonAndHistogram) {
  const auto cs = constant_chains(kMiamiPosteriorMeans, 2, 4);
  RandomStream rng(7);
  QuantitySpec q;
  q.kind = QuantitySpec::Kind::Transition;
  const auto d = posterior_derive(cs, q, rng);
  std::ostringstream csv;
  write_derived_csv(csv, d);
  const std::string text = csv.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "chain,iteration,value");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 9);
  const auto j = to_json(d);
  EXPECT_EQ(j["quantity"], "transition_ch");
  EXPECT_EQ(j["n_draws"], 8);

  const std::vector<double> xs = {0.0, 0.1, 0.5, 0.9, 1.0};
  const auto bins = histogram(xs, 2);
  ASSERT_EQ(bins.size(), 2u);
  EXPECT_EQ(bins[0].count, 2u);
  EXPECT_EQ(bins[1].count, 3u);
  EXPECT_EQ(bins[1].right, 1.0);
  const std::vector<double> same = {2.0, 2.0, 2.0};
  const auto one = histogram(same, 10);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].count, 3u);
  std::ostringstream h;
  write_histogram_csv(h, bins);
  EXPECT_EQ(h.str().substr(0, h.str().find('\n')), "bin_left,bin_right,count");
}
