#pragma once

// Draws file and per-match effects sidecar.
//
//   draws:   chain,iteration,logpost,alpha_c,...,sigma_hc
//   effects: chain,iteration,match_id,a,b_ch,b_hc

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <utility>

#include "blhmm/data.hpp"
#include "blhmm/error.hpp"
#include "blhmm/sampler.hpp"

namespace blhmm {

inline std::string draws_header() {
  std::string h = "chain,iteration,logpost";
  for (auto name : kParamNames) h += "," + std::string(name);
  return h;
}

inline constexpr const char* kEffectsHeader = "chain,iteration,match_id,a,b_ch,b_hc";

inline void write_draws_csv(std::ostream& out, const ChainSet& chains) {
  out << draws_header() << '\n';
  for (const auto& d : chains.draws) {
    out << d.chain_id << ',' << d.iteration << ',' << detail::fmt_double(d.logpost);
    for (Param p : kAllParams) out << ',' << detail::fmt_double(d.params[p]);
    out << '\n';
  }
}

inline void write_effects_csv(std::ostream& out, const ChainSet& chains) {
  out << kEffectsHeader << '\n';
  for (const auto& d : chains.draws)
    for (std::size_t i = 0; i < d.effects.size(); ++i) {
      const auto& e = d.effects[i];
      out << d.chain_id << ',' << d.iteration << ',' << chains.match_ids.at(i) << ','
          << detail::fmt_double(e.a) << ',' << detail::fmt_double(e.b_ch) << ','
          << detail::fmt_double(e.b_hc) << '\n';
    }
}

namespace detail {

inline void expect_header(std::istream& in, const std::string& header, const std::string& what) {
  std::string line;
  if (!std::getline(in, line)) throw InputError(what + ": empty file");
  if (trim(line) != header)
    throw InputError(what + ": unexpected header '" + std::string(trim(line)) + "'");
}

}  // namespace detail

/// Rebuilds a ChainSet from a draws file and, optionally, its effects
/// sidecar. Draws come back ordered by (chain, iteration); match order is
/// the sidecar's first-appearance order.
inline ChainSet read_draws(std::istream& draws, std::istream* effects = nullptr) {
  detail::expect_header(draws, draws_header(), "draws file");
  ChainSet out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(draws, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 3 + kNumParams)
      throw InputError("draws file: " + detail::line_error(line_no, "expected " +
                                                                    std::to_string(3 + kNumParams) +
                                                                    " fields"));
    PosteriorDraw d;
    d.chain_id = detail::parse_number<int>(f[0], line_no, "chain");
    d.iteration = detail::parse_number<int>(f[1], line_no, "iteration");
    d.logpost = detail::parse_number<double>(f[2], line_no, "logpost");
    for (std::size_t k = 0; k < kNumParams; ++k)
      d.params[kAllParams[k]] =
          detail::parse_number<double>(f[3 + k], line_no, std::string(kParamNames[k]));
    if (d.chain_id < 0) throw InputError("draws file: " + detail::line_error(line_no, "negative chain"));
    out.draws.push_back(std::move(d));
  }
  if (out.draws.empty()) throw InputError("draws file: no draws");
  std::stable_sort(out.draws.begin(), out.draws.end(), [](const auto& x, const auto& y) {
    return std::pair(x.chain_id, x.iteration) < std::pair(y.chain_id, y.iteration);
  });
  for (std::size_t k = 1; k < out.draws.size(); ++k)
    if (out.draws[k].chain_id == out.draws[k - 1].chain_id &&
        out.draws[k].iteration == out.draws[k - 1].iteration)
      throw InputError("draws file: duplicate (chain, iteration) = (" +
                       std::to_string(out.draws[k].chain_id) + ", " +
                       std::to_string(out.draws[k].iteration) + ")");
  out.config.n_chains = static_cast<int>(out.n_chains());

  if (!effects) return out;
  detail::expect_header(*effects, kEffectsHeader, "effects file");
  std::map<std::pair<int, int>, std::map<std::string, MatchEffects>> rows;
  line_no = 1;
  while (std::getline(*effects, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 6)
      throw InputError("effects file: " + detail::line_error(line_no, "expected 6 fields"));
    const int chain = detail::parse_number<int>(f[0], line_no, "chain");
    const int iteration = detail::parse_number<int>(f[1], line_no, "iteration");
    const std::string id(f[2]);
    if (std::find(out.match_ids.begin(), out.match_ids.end(), id) == out.match_ids.end())
      out.match_ids.push_back(id);
    rows[{chain, iteration}][id] = MatchEffects{detail::parse_number<double>(f[3], line_no, "a"),
                                                detail::parse_number<double>(f[4], line_no, "b_ch"),
                                                detail::parse_number<double>(f[5], line_no, "b_hc")};
  }
  for (auto& d : out.draws) {
    const auto it = rows.find({d.chain_id, d.iteration});
    if (it == rows.end() || it->second.size() != out.match_ids.size())
      throw InputError("effects file: incomplete effects for chain " + std::to_string(d.chain_id) +
                       ", iteration " + std::to_string(d.iteration));
    for (const auto& id : out.match_ids) d.effects.push_back(it->second.at(id));
  }
  if (rows.size() != out.draws.size())
    throw InputError("effects file: rows for draws absent from the draws file");
  return out;
}

inline ChainSet read_draws_files(const std::string& draws_path, const std::string& effects_path = {}) {
  std::ifstream draws(draws_path);
  if (!draws) throw InputError("cannot open draws file: " + draws_path);
  if (effects_path.empty()) return read_draws(draws);
  std::ifstream effects(effects_path);
  if (!effects) throw InputError("cannot open effects file: " + effects_path);
  return read_draws(draws, &effects);
}

}  // namespace blhmm
