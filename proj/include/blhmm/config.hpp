#pragma once

// Flat "key = value" config files with '#' comments. Keys are the field
// names of SamplerConfig and SimSpec; the ten global parameters are set by
// their draws-file names (alpha_c, ..., sigma_hc).
//
//   distance_model = fixed:12 | uniform:0:30 | empirical:<season csv>
//   shots_per_match = 100            (or one entry per match: 80,95,110)

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "blhmm/data.hpp"
#include "blhmm/error.hpp"
#include "blhmm/sampler.hpp"
#include "blhmm/simulate.hpp"

namespace blhmm {

struct ConfigEntry {
  std::string value;
  std::size_t line = 0;
};

using ConfigMap = std::map<std::string, ConfigEntry>;

inline ConfigMap parse_config(std::istream& in) {
  ConfigMap out;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw InputError("config " + detail::line_error(line_no, "expected key = value"));
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string value(detail::trim(line.substr(eq + 1)));
    if (key.empty()) throw InputError("config " + detail::line_error(line_no, "empty key"));
    if (out.count(key)) throw InputError("config " + detail::line_error(line_no, "duplicate key '" + key + "'"));
    out[key] = {value, line_no};
  }
  return out;
}

inline ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file: " + path);
  return parse_config(in);
}

namespace detail {

template <class T>
T config_number(const std::string& key, const ConfigEntry& e) {
  T value{};
  const char* end = e.value.data() + e.value.size();
  auto [ptr, ec] = std::from_chars(e.value.data(), end, value);
  if (e.value.empty() || ec != std::errc{} || ptr != end)
    throw InputError("config " + line_error(e.line, "cannot parse '" + e.value + "' for '" + key + "'"));
  return value;
}

inline std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

inline double config_real(std::string_view text, const std::string& key, std::size_t line) {
  return config_number<double>(key, ConfigEntry{std::string(text), line});
}

inline void reject_unknown(const ConfigMap& cfg, const std::vector<std::string>& known) {
  for (const auto& [key, entry] : cfg)
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw InputError("config " + line_error(entry.line, "unknown key '" + key + "'"));
}

inline std::vector<std::string> sampler_keys() {
  return {"n_chains",      "n_burnin",       "n_iterations",          "thin",
          "seed",          "adapt_window",   "target_accept",         "target_accept_effects",
          "n_starts",      "pilot_sweeps"};
}

inline std::vector<std::string> sim_keys() {
  std::vector<std::string> keys = {"n_matches", "shots_per_match", "distance_model", "ft_fraction",
                                   "seed"};
  for (auto name : kParamNames) keys.emplace_back(name);
  return keys;
}

}  // namespace detail

/// Applies the sampler keys present in `cfg` over the defaults. Keys outside
/// the sampler set are rejected unless `allow_other` is set.
inline SamplerConfig sampler_config_from(const ConfigMap& cfg, bool allow_other = false) {
  if (!allow_other) detail::reject_unknown(cfg, detail::sampler_keys());
  SamplerConfig c;
  auto set = [&](const char* key, auto& field) {
    if (const auto it = cfg.find(key); it != cfg.end())
      field = detail::config_number<std::decay_t<decltype(field)>>(key, it->second);
  };
  set("n_chains", c.n_chains);
  set("n_burnin", c.n_burnin);
  set("n_iterations", c.n_iterations);
  set("thin", c.thin);
  set("seed", c.seed);
  set("adapt_window", c.adapt_window);
  set("target_accept", c.target_accept);
  set("target_accept_effects", c.target_accept_effects);
  set("n_starts", c.n_starts);
  set("pilot_sweeps", c.pilot_sweeps);
  validate(c);
  return c;
}

/// Empirical distance-model paths are resolved against `base_dir`.
inline SimSpec sim_spec_from(const ConfigMap& cfg, const std::filesystem::path& base_dir = {}) {
  detail::reject_unknown(cfg, detail::sim_keys());
  SimSpec s;
  for (std::size_t k = 0; k < kNumParams; ++k)
    if (const auto it = cfg.find(std::string(kParamNames[k])); it != cfg.end())
      s.params[kAllParams[k]] = detail::config_number<double>(it->first, it->second);
  if (const auto it = cfg.find("n_matches"); it != cfg.end())
    s.n_matches = detail::config_number<int>(it->first, it->second);
  if (const auto it = cfg.find("ft_fraction"); it != cfg.end())
    s.ft_fraction = detail::config_number<double>(it->first, it->second);
  if (const auto it = cfg.find("seed"); it != cfg.end())
    s.seed = detail::config_number<std::uint64_t>(it->first, it->second);
  if (const auto it = cfg.find("shots_per_match"); it != cfg.end()) {
    s.shots_per_match.clear();
    for (auto part : detail::split_on(it->second.value, ','))
      s.shots_per_match.push_back(
          detail::config_number<int>(it->first, ConfigEntry{std::string(part), it->second.line}));
  }
  if (const auto it = cfg.find("distance_model"); it != cfg.end()) {
    const auto& e = it->second;
    const auto parts = detail::split_on(e.value, ':');
    auto bad = [&] {
      return InputError("config " + detail::line_error(e.line, "distance_model must be fixed:<d>, "
                                                                "uniform:<lo>:<hi> or empirical:<path>"));
    };
    if (parts[0] == "fixed" && parts.size() == 2) {
      s.distance_model = DistanceModel::fixed(detail::config_real(parts[1], it->first, e.line));
    } else if (parts[0] == "uniform" && parts.size() == 3) {
      s.distance_model = DistanceModel::uniform(detail::config_real(parts[1], it->first, e.line),
                                                detail::config_real(parts[2], it->first, e.line));
    } else if (parts[0] == "empirical" && parts.size() >= 2) {
      // Paths may contain ':'; everything after the first one is the path.
      std::filesystem::path path(e.value.substr(e.value.find(':') + 1));
      if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
      s.distance_model = DistanceModel::empirical(parse_season_file(path.string()));
    } else {
      throw bad();
    }
  }
  validate(s);
  return s;
}

}  // namespace blhmm
