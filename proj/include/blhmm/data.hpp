#pragma once

// Shot-level play-by-play data grouped into matches.
//
// Canonical CSV schema (header row required, booleans as 0/1):
//
//   match_id,shot_index,distance_ft,is_free_throw,made
//
// Columns may appear in any order; ColumnMapping renames them.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "blhmm/error.hpp"
#include "blhmm/stats.hpp"

namespace blhmm {

struct ShotRecord {
  std::string match_id;
  int shot_index = 1;  // 1-based position within the match
  double distance_ft = 0.0;
  bool is_free_throw = false;
  bool made = false;

  friend bool operator==(const ShotRecord&, const ShotRecord&) = default;
};

struct MatchData {
  std::string match_id;
  std::vector<ShotRecord> shots;  // ordered by shot_index, contiguous 1..M

  std::size_t size() const { return shots.size(); }
  friend bool operator==(const MatchData&, const MatchData&) = default;
};

struct SeasonData {
  std::vector<MatchData> matches;

  std::size_t n_matches() const { return matches.size(); }
  std::size_t n_shots() const {
    std::size_t n = 0;
    for (const auto& m : matches) n += m.size();
    return n;
  }
  std::size_t n_made() const {
    std::size_t n = 0;
    for (const auto& m : matches)
      for (const auto& s : m.shots) n += s.made ? 1 : 0;
    return n;
  }
  friend bool operator==(const SeasonData&, const SeasonData&) = default;
};

struct ColumnMapping {
  std::string match_id = "match_id";
  std::string shot_index = "shot_index";
  std::string distance_ft = "distance_ft";
  std::string is_free_throw = "is_free_throw";
  std::string made = "made";
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

inline std::string line_error(std::size_t line_no, const std::string& msg) {
  return "line " + std::to_string(line_no) + ": " + msg;
}

template <class T>
T parse_number(std::string_view field, std::size_t line_no, const std::string& column) {
  T value{};
  if (field.empty())
    throw InputError(line_error(line_no, "missing value for '" + column + "'"));
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end)
    throw InputError(line_error(line_no, "cannot parse '" + std::string(field) +
                                             "' as a number in column '" + column + "'"));
  return value;
}

inline bool parse_flag(std::string_view field, std::size_t line_no, const std::string& column) {
  if (field == "0") return false;
  if (field == "1") return true;
  throw InputError(line_error(line_no, "expected 0 or 1 in column '" + column + "', got '" +
                                           std::string(field) + "'"));
}

/// 17 significant digits: enough for an exact binary64 round trip.
inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

/// Parses a season from CSV text. Matches are grouped by match_id in
/// first-appearance order; shots within a match are sorted by shot_index,
/// which must then form the sequence 1..M with no gaps or duplicates.
inline SeasonData parse_season(std::istream& source, const ColumnMapping& schema = {}) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (!have_header && std::getline(source, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) have_header = true;
  }
  if (!have_header) throw InputError("empty input: no header row");

  const auto header = detail::split_csv(line);
  auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InputError("header is missing required column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_match = column_of(schema.match_id);
  const std::size_t c_index = column_of(schema.shot_index);
  const std::size_t c_dist = column_of(schema.distance_ft);
  const std::size_t c_ft = column_of(schema.is_free_throw);
  const std::size_t c_made = column_of(schema.made);

  SeasonData season;
  std::unordered_map<std::string, std::size_t> slot;
  std::size_t rows = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != header.size())
      throw InputError(detail::line_error(line_no, "expected " + std::to_string(header.size()) +
                                                       " fields, found " +
                                                       std::to_string(fields.size())));
    ShotRecord shot;
    shot.match_id = std::string(fields[c_match]);
    if (shot.match_id.empty())
      throw InputError(detail::line_error(line_no, "empty " + schema.match_id));
    shot.shot_index = detail::parse_number<int>(fields[c_index], line_no, schema.shot_index);
    if (shot.shot_index < 1)
      throw InputError(detail::line_error(line_no, "shot_index must be >= 1"));
    shot.distance_ft = detail::parse_number<double>(fields[c_dist], line_no, schema.distance_ft);
    if (!std::isfinite(shot.distance_ft) || shot.distance_ft < 0.0)
      throw InputError(detail::line_error(line_no, "distance must be finite and non-negative"));
    shot.is_free_throw = detail::parse_flag(fields[c_ft], line_no, schema.is_free_throw);
    shot.made = detail::parse_flag(fields[c_made], line_no, schema.made);

    auto [it, inserted] = slot.try_emplace(shot.match_id, season.matches.size());
    if (inserted) season.matches.push_back(MatchData{shot.match_id, {}});
    season.matches[it->second].shots.push_back(std::move(shot));
    ++rows;
  }
  if (rows == 0) throw InputError("no data rows");

  for (auto& match : season.matches) {
    std::stable_sort(match.shots.begin(), match.shots.end(),
                     [](const ShotRecord& a, const ShotRecord& b) {
                       return a.shot_index < b.shot_index;
                     });
    for (std::size_t n = 0; n < match.shots.size(); ++n) {
      const int got = match.shots[n].shot_index;
      if (n > 0 && got == match.shots[n - 1].shot_index)
        throw InputError("duplicate shot_index " + std::to_string(got) + " in match '" +
                         match.match_id + "'");
      if (got != static_cast<int>(n + 1))
        throw InputError("match '" + match.match_id + "' has a gap: expected shot_index " +
                         std::to_string(n + 1) + ", found " + std::to_string(got));
    }
  }
  return season;
}

inline SeasonData parse_season_file(const std::string& path, const ColumnMapping& schema = {}) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open data file: " + path);
  return parse_season(in, schema);
}

/// Writes the canonical CSV schema. parse_season(write_season_csv(x)) == x.
inline void write_season_csv(std::ostream& out, const SeasonData& season) {
  out << "match_id,shot_index,distance_ft,is_free_throw,made\n";
  for (const auto& match : season.matches)
    for (const auto& s : match.shots)
      out << s.match_id << ',' << s.shot_index << ',' << detail::fmt_double(s.distance_ft) << ','
          << (s.is_free_throw ? 1 : 0) << ',' << (s.made ? 1 : 0) << '\n';
}

struct MatchSummary {
  std::string match_id;
  std::size_t m_i = 0;
  std::size_t made_i = 0;
};

struct SummaryReport {
  std::size_t n_matches = 0;
  std::size_t n_shots = 0;
  std::size_t n_made = 0;
  double make_rate = 0.0;
  double free_throw_fraction = 0.0;
  double distance_q25 = 0.0;
  double distance_median = 0.0;
  double distance_q75 = 0.0;
  std::vector<MatchSummary> per_match;
};

inline SummaryReport season_summary(const SeasonData& season) {
  SummaryReport r;
  r.n_matches = season.n_matches();
  std::vector<double> distances;
  std::size_t n_ft = 0;
  for (const auto& match : season.matches) {
    MatchSummary ms{match.match_id, match.size(), 0};
    for (const auto& s : match.shots) {
      ms.made_i += s.made ? 1 : 0;
      n_ft += s.is_free_throw ? 1 : 0;
      distances.push_back(s.distance_ft);
    }
    r.n_shots += ms.m_i;
    r.n_made += ms.made_i;
    r.per_match.push_back(std::move(ms));
  }
  if (r.n_shots > 0) {
    r.make_rate = static_cast<double>(r.n_made) / static_cast<double>(r.n_shots);
    r.free_throw_fraction = static_cast<double>(n_ft) / static_cast<double>(r.n_shots);
    std::sort(distances.begin(), distances.end());
    r.distance_q25 = stats::quantile_sorted(distances, 0.25);
    r.distance_median = stats::quantile_sorted(distances, 0.50);
    r.distance_q75 = stats::quantile_sorted(distances, 0.75);
  }
  return r;
}

inline nlohmann::json to_json(const SummaryReport& r) {
  nlohmann::json per_match = nlohmann::json::array();
  for (const auto& m : r.per_match)
    per_match.push_back({{"match_id", m.match_id}, {"m_i", m.m_i}, {"made_i", m.made_i}});
  return {{"n_matches", r.n_matches},
          {"n_shots", r.n_shots},
          {"n_made", r.n_made},
          {"make_rate", r.make_rate},
          {"free_throw_fraction", r.free_throw_fraction},
          {"distance_quartiles", {r.distance_q25, r.distance_median, r.distance_q75}},
          {"per_match", per_match}};
}

}  // namespace blhmm
