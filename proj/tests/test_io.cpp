#include <gtest/gtest.h>

#include <sstream>

#include "blhmm/config.hpp"
#include "blhmm/draws_io.hpp"
#include "blhmm/simulate.hpp"

using namespace blhmm;

namespace {

ChainSet small_fit() {
  SimSpec spec;
  spec.n_matches = 3;
  spec.shots_per_match = {15};
  SamplerConfig c;
  c.n_chains = 2;
  c.n_burnin = 20;
  c.n_iterations = 20;
  c.thin = 4;
  c.n_starts = 1;
  c.pilot_sweeps = 0;
  return run_chains(gen_season(spec).data, c);
}

}  // namespace

TEST(DrawsIo, RoundTripIsExact) {
  const auto fit = small_fit();
  std::stringstream draws, effects;
  write_draws_csv(draws, fit);
  write_effects_csv(effects, fit);
  const auto back = read_draws(draws, &effects);
  ASSERT_EQ(back.draws.size(), fit.draws.size());
  EXPECT_EQ(back.match_ids, fit.match_ids);
  EXPECT_EQ(back.n_chains(), 2u);
  for (std::size_t k = 0; k < fit.draws.size(); ++k) {
    EXPECT_EQ(back.draws[k].params, fit.draws[k].params);
    EXPECT_EQ(back.draws[k].effects, fit.draws[k].effects);
    EXPECT_EQ(back.draws[k].logpost, fit.draws[k].logpost);
    EXPECT_EQ(back.draws[k].chain_id, fit.draws[k].chain_id);
    EXPECT_EQ(back.draws[k].iteration, fit.draws[k].iteration);
  }
  std::stringstream again;
  write_draws_csv(again, back);
  std::stringstream first;
  write_draws_csv(first, fit);
  EXPECT_EQ(again.str(), first.str());
}

TEST(DrawsIo, RowsAreReordered) {
  const auto fit = small_fit();
  std::stringstream draws;
  write_draws_csv(draws, fit);
  std::vector<std::string> lines;
  for (std::string l; std::getline(draws, l);) lines.push_back(l);
  std::reverse(lines.begin() + 1, lines.end());
  std::stringstream shuffled;
  for (const auto& l : lines) shuffled << l << '\n';
  const auto back = read_draws(shuffled);
  for (std::size_t k = 0; k < fit.draws.size(); ++k) EXPECT_EQ(back.draws[k].params, fit.draws[k].params);
}

TEST(DrawsIo, Errors) {
  std::stringstream bad_header("chain,iteration\n");
  EXPECT_THROW(read_draws(bad_header), InputError);
  std::stringstream empty(draws_header() + "\n");
  EXPECT_THROW(read_draws(empty), InputError);
  std::stringstream short_row(draws_header() + "\n0,1,2\n");
  EXPECT_THROW(read_draws(short_row), InputError);

  const auto fit = small_fit();
  std::stringstream draws;
  write_draws_csv(draws, fit);
  const std::string text = draws.str();
  const std::string first_row = text.substr(text.find('\n') + 1, text.find('\n', text.find('\n') + 1) - text.find('\n'));
  std::stringstream dup(text + first_row);
  EXPECT_THROW(read_draws(dup), InputError);

  std::stringstream d2(text), effects(std::string(kEffectsHeader) + "\n0,1,sim0001,0,0,0\n");
  EXPECT_THROW(read_draws(d2, &effects), InputError);
  EXPECT_THROW(read_draws_files("/nonexistent/draws.csv"), InputError);
}

TEST(Config, SamplerKeys) {
  std::stringstream in("# comment\nn_chains = 2\nn_burnin=10  # trailing\n\nthin = 3\nseed = 99\n");
  const auto c = sampler_config_from(parse_config(in));
  EXPECT_EQ(c.n_chains, 2);
  EXPECT_EQ(c.n_burnin, 10);
  EXPECT_EQ(c.thin, 3);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.n_iterations, SamplerConfig{}.n_iterations);
}

TEST(Config, Errors) {
  auto load = [](const std::string& text) {
    std::stringstream in(text);
    return sampler_config_from(parse_config(in));
  };
  EXPECT_THROW(load("n_chains 2\n"), InputError);
  EXPECT_THROW(load("n_chains = 2\nn_chains = 3\n"), InputError);
  EXPECT_THROW(load("n_chain = 2\n"), InputError);
  EXPECT_THROW(load("n_chains = two\n"), InputError);
  EXPECT_THROW(load("thin = 0\n"), InputError);
  try {
    load("seed = 1\nbogus = 3\n");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Config, SimSpec) {
  std::stringstream in(
      "n_matches = 3\nshots_per_match = 5, 6, 7\ndistance_model = fixed:12.5\nft_fraction = 0\n"
      "alpha_d = -0.3\nseed = 4\n");
  const auto s = sim_spec_from(parse_config(in));
  EXPECT_EQ(s.n_matches, 3);
  EXPECT_EQ(s.shots_per_match, (std::vector<int>{5, 6, 7}));
  EXPECT_EQ(s.params.alpha_d, -0.3);
  EXPECT_EQ(s.params.alpha_c, kMiamiPosteriorMeans.alpha_c);
  EXPECT_EQ(s.seed, 4u);
  const auto sim = gen_season(s);
  for (const auto& m : sim.data.matches)
    for (const auto& shot : m.shots) EXPECT_EQ(shot.distance_ft, 12.5);

  std::stringstream bad("distance_model = gaussian:1\n");
  EXPECT_THROW(sim_spec_from(parse_config(bad)), InputError);
  std::stringstream mismatch("n_matches = 3\nshots_per_match = 5, 6\n");
  EXPECT_THROW(sim_spec_from(parse_config(mismatch)), InputError);
}
