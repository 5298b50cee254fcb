#pragma once

// Serialization: experiment configs (versioned JSON, unknown fields
// rejected), process windows (two-row text), interval decompositions and
// factor reports (JSON), couplings (sparse triplet text). Every emitter
// formats numbers deterministically so identical inputs give identical
// bytes.

#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "monojoin/coupling.hpp"
#include "monojoin/dist.hpp"
#include "monojoin/errors.hpp"
#include "monojoin/factorlab.hpp"
#include "monojoin/process.hpp"

namespace monojoin {

using Json = nlohmann::ordered_json;

// shortest form that still round-trips a double
inline std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// process windows: header line "lo hi origin", then the x row and the y row

inline void write_window(std::ostream& os, const ProcessWindow& w) {
  os << w.lo << ' ' << w.hi << ' ' << w.originOffset << '\n';
  for (std::size_t t = 0; t < w.x.size(); ++t)
    os << (t ? " " : "") << static_cast<int>(w.x[t]);
  os << '\n';
  for (std::size_t t = 0; t < w.y.size(); ++t)
    os << (t ? " " : "") << static_cast<int>(w.y[t]);
  os << '\n';
}

inline ProcessWindow read_window(std::istream& is) {
  ProcessWindow w;
  std::string header, xs, ys;
  if (!std::getline(is, header) || !std::getline(is, xs) ||
      !std::getline(is, ys))
    throw PreconditionError("read_window: truncated window file");
  {
    std::istringstream h(header);
    if (!(h >> w.lo >> w.hi >> w.originOffset))
      throw PreconditionError("read_window: malformed header");
  }
  const auto parseRow = [](const std::string& line,
                           std::vector<std::uint8_t>& out) {
    std::istringstream r(line);
    int v = 0;
    while (r >> v) {
      if (v < 0 || v > 255)
        throw PreconditionError("read_window: symbol outside byte range");
      out.push_back(static_cast<std::uint8_t>(v));
    }
  };
  parseRow(xs, w.x);
  parseRow(ys, w.y);
  if (w.x.size() != w.y.size() ||
      static_cast<long long>(w.x.size()) != w.hi - w.lo + 1)
    throw PreconditionError("read_window: row lengths disagree with header");
  return w;
}

// ---------------------------------------------------------------------------
// couplings: one "row col mass" line per sparse cell, key order

inline void write_coupling(std::ostream& os, const Coupling& c) {
  os << c.row_alphabet().base << ' ' << c.row_alphabet().length << ' '
     << c.col_alphabet().base << ' ' << c.col_alphabet().length << '\n';
  for (const auto& [key, v] : c.mass())
    os << key.first << ' ' << key.second << ' ' << g17(v) << '\n';
}

// ---------------------------------------------------------------------------
// decomposition inspection JSON

inline Json span_json(const Span& s) {
  return Json{{"lo", s.lo}, {"hi", s.hi}};
}

inline Json decomposition_json(const IntervalDecomposition& d) {
  Json j;
  j["k"] = d.k;
  j["coveredLo"] = d.coveredLo;
  j["coveredHi"] = d.coveredHi;
  Json markers = Json::array();
  for (const Span& m : d.markers) markers.push_back(span_json(m));
  j["markers"] = std::move(markers);
  Json intervals = Json::array();
  for (std::size_t i = 0; i < d.intervalCount(); ++i) {
    const Interval iv = d.interval(i);
    intervals.push_back(Json{{"lo", iv.lo},
                             {"hi", iv.hi},
                             {"block", iv.isBlock},
                             {"frozen", iv.frozen},
                             {"switch", iv.isSwitch}});
  }
  j["intervals"] = std::move(intervals);
  Json supers = Json::array();
  for (const Span& s : d.superMarkers) supers.push_back(span_json(s));
  j["superMarkers"] = std::move(supers);
  Json blocks = Json::array();
  for (const LargeBlock& blk : d.largeBlocks)
    blocks.push_back(Json{{"lo", blk.span.lo},
                          {"hi", blk.span.hi},
                          {"freeCount", blk.freeCount},
                          {"sizeKCount", blk.sizeKCount},
                          {"action", blk.action},
                          {"inR", blk.inR}});
  j["largeBlocks"] = std::move(blocks);
  return j;
}

// ---------------------------------------------------------------------------
// factor report JSON

inline Json factor_report_json(const FactorReport& r) {
  Json j;
  j["params"] = Json{{"epsilon", r.params.epsilon},
                     {"epsilonPrime", r.params.epsilonPrime},
                     {"eta", r.params.eta},
                     {"a", r.params.a},
                     {"b", r.params.b},
                     {"k", r.params.k},
                     {"n0", r.params.n0},
                     {"nRel", r.params.nRel},
                     {"kSuper", r.params.kSuper},
                     {"n", r.params.n},
                     {"smbEps", r.params.smbEps},
                     {"delta", r.params.delta},
                     {"hGap", r.params.hGap},
                     {"numSymbols", r.params.numSymbols},
                     {"mode", r.params.mode}};
  j["entropies"] = Json{{"hMuFill", r.entropies.hMuFill},
                        {"hNuFill", r.entropies.hNuFill},
                        {"gap", r.entropies.gap},
                        {"paperLowerBound", r.entropies.paperLowerBound},
                        {"printedLowerBound", r.entropies.printedLowerBound}};
  j["search"] = Json{{"frozenEstimate", r.search.frozenEstimate},
                     {"frozenBound", r.search.frozenBound},
                     {"weakStarEstimate", r.search.weakStarEstimate},
                     {"weakStarTruncation", r.search.weakStarTruncation},
                     {"muCoverage", r.search.muCoverage},
                     {"nuCoverage", r.search.nuCoverage},
                     {"coverageTail", r.search.coverageTail},
                     {"coverageExact", r.search.coverageExact},
                     {"coverageHorizon", r.search.coverageHorizon},
                     {"actionCoverage", r.search.actionCoverage},
                     {"rMass", r.search.rMass},
                     {"pMatch", r.search.pMatch}};
  j["frozen"] = Json{{"pFrozen", r.frozen.pFrozen},
                     {"bound", r.frozen.bound},
                     {"se", r.frozen.se},
                     {"coords", r.frozen.coords},
                     {"pass", r.frozen.pass}};
  j["action"] = Json{{"coverage", r.actionCoverage}, {"rMass", r.rMass}};
  j["match"] = Json{{"pMatch", r.pMatch},
                    {"exact", r.pMatchExact},
                    {"collisions", Json{{"draws", r.collisions.draws},
                                        {"repeats", r.collisions.repeats},
                                        {"disagreements",
                                         r.collisions.disagreements},
                                        {"rate", r.collisions.rate}}}};
  Json errors = Json::array(), se = Json::array();
  for (double e : r.prediction.errors) errors.push_back(e);
  for (double s : r.prediction.se) se.push_back(s);
  j["prediction"] = Json{{"m", r.prediction.m},
                         {"epsilon", r.prediction.epsilon},
                         {"errors", std::move(errors)},
                         {"se", std::move(se)},
                         {"maxError", r.prediction.maxError},
                         {"maxErrorSe", r.prediction.maxErrorSe},
                         {"pass", r.prediction.pass}};
  Json tv = Json::array();
  for (double t : r.weakStarDel.tvPerRadius) tv.push_back(t);
  j["weakStarDel"] = Json{{"estimate", r.weakStarDel.estimate},
                          {"truncationBound", r.weakStarDel.truncationBound},
                          {"tvPerRadius", std::move(tv)},
                          {"allowance", r.weakStarDelAllowance}};
  j["monotoneViolations"] = r.monotoneViolations;
  j["windows"] = r.windows;
  j["windowLength"] = r.windowLength;
  j["constraints"] =
      Json{{"prediction", r.prediction.pass},
           {"monotone", r.monotoneViolations == 0},
           {"weakStar", r.weakStarDel.estimate < r.weakStarDelAllowance},
           {"match", !r.pMatchExact || r.pMatch >= 1.0 - r.params.eta}};
  j["pass"] = r.pass;
  return j;
}

// ---------------------------------------------------------------------------
// experiment configuration

struct ExperimentConfig {
  Dist p{std::vector<double>{1.0}};
  Dist q{std::vector<double>{1.0}};
  std::optional<Relation> relation;
  int markerA = 0;
  int markerB = 1;
  std::optional<double> epsilon;
  std::uint64_t seed = 0x6d6f6e6f6a6f696eULL;
  ParamSearch search;
  PipelineConfig pipeline;
  std::vector<int> simulateK{4, 6, 8, 10};
  int simulateIMax = 3;
  long long burnIn = 4096;
};

namespace detail {

inline void require_keys(const Json& obj, const std::string& where,
                         const std::set<std::string>& allowed) {
  if (!obj.is_object())
    throw PreconditionError("config: " + where + " must be an object");
  for (const auto& [key, v] : obj.items())
    if (allowed.count(key) == 0)
      throw PreconditionError("config: unknown field \"" + key + "\" in " +
                              where);
}

inline double num_field(const Json& obj, const std::string& where,
                        const std::string& key) {
  if (!obj.at(key).is_number())
    throw PreconditionError("config: " + where + "." + key +
                            " must be a number");
  return obj.at(key).get<double>();
}

inline long long int_field(const Json& obj, const std::string& where,
                           const std::string& key) {
  if (!obj.at(key).is_number_integer())
    throw PreconditionError("config: " + where + "." + key +
                            " must be an integer");
  return obj.at(key).get<long long>();
}

inline bool bool_field(const Json& obj, const std::string& where,
                       const std::string& key) {
  if (!obj.at(key).is_boolean())
    throw PreconditionError("config: " + where + "." + key +
                            " must be a boolean");
  return obj.at(key).get<bool>();
}

inline Dist dist_field(const Json& obj, const std::string& key) {
  if (!obj.at(key).is_array() || obj.at(key).empty())
    throw PreconditionError("config: " + key +
                            " must be a nonempty array of probabilities");
  std::vector<double> v;
  for (const auto& e : obj.at(key)) {
    if (!e.is_number())
      throw PreconditionError("config: " + key + " entries must be numbers");
    v.push_back(e.get<double>());
  }
  return Dist(v);
}

}  // namespace detail

inline ExperimentConfig parse_config(const Json& j) {
  detail::require_keys(j, "top level",
                       {"version", "p", "q", "relation", "marker", "epsilon",
                        "seeds", "search", "trials", "budgets", "simulate",
                        "factor"});
  if (!j.contains("version") || !j.at("version").is_number_integer() ||
      j.at("version").get<long long>() != 1)
    throw PreconditionError("config: schema version must be the integer 1");
  if (!j.contains("p") || !j.contains("q"))
    throw PreconditionError("config: p and q are required");

  ExperimentConfig cfg;
  cfg.p = detail::dist_field(j, "p");
  cfg.q = detail::dist_field(j, "q");
  if (cfg.p.n() != cfg.q.n())
    throw PreconditionError("config: p and q must share an alphabet");

  if (j.contains("relation")) {
    if (!j.at("relation").is_array())
      throw PreconditionError("config: relation must be an array of pairs");
    std::set<std::pair<int, int>> pairs;
    for (const auto& e : j.at("relation")) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
          !e[1].is_number_integer())
        throw PreconditionError(
            "config: relation entries must be [int, int] pairs");
      pairs.insert({e[0].get<int>(), e[1].get<int>()});
    }
    cfg.relation.emplace(cfg.p.n(), std::move(pairs));
  }

  if (j.contains("marker")) {
    const Json& m = j.at("marker");
    detail::require_keys(m, "marker", {"a", "b"});
    if (m.contains("a")) cfg.markerA = static_cast<int>(detail::int_field(m, "marker", "a"));
    if (m.contains("b")) cfg.markerB = static_cast<int>(detail::int_field(m, "marker", "b"));
    if (cfg.markerA == cfg.markerB || cfg.markerA < 0 || cfg.markerB < 0 ||
        cfg.markerA >= cfg.p.n() || cfg.markerB >= cfg.p.n())
      throw PreconditionError("config: marker symbols must be distinct "
                              "members of the alphabet");
  }

  if (j.contains("epsilon")) {
    cfg.epsilon = detail::num_field(j, "top level", "epsilon");
    if (*cfg.epsilon <= 0.0)
      throw PreconditionError("config: epsilon must be positive");
  }

  if (j.contains("seeds")) {
    const Json& s = j.at("seeds");
    detail::require_keys(s, "seeds", {"master"});
    if (s.contains("master")) {
      if (!s.at("master").is_number_integer())
        throw PreconditionError("config: seeds.master must be an integer");
      cfg.seed = s.at("master").get<std::uint64_t>();
    }
  }

  if (j.contains("search")) {
    const Json& s = j.at("search");
    detail::require_keys(s, "search",
                         {"kMin", "kMax", "n0Max", "nMax", "kSuperMax",
                          "allowDirect", "directN0Max"});
    if (s.contains("kMin"))
      cfg.search.kMin = static_cast<int>(detail::int_field(s, "search", "kMin"));
    if (s.contains("kMax"))
      cfg.search.kMax = static_cast<int>(detail::int_field(s, "search", "kMax"));
    if (s.contains("n0Max")) cfg.search.n0Max = detail::int_field(s, "search", "n0Max");
    if (s.contains("nMax"))
      cfg.search.nMax = static_cast<int>(detail::int_field(s, "search", "nMax"));
    if (s.contains("kSuperMax"))
      cfg.search.kSuperMax =
          static_cast<int>(detail::int_field(s, "search", "kSuperMax"));
    if (s.contains("allowDirect"))
      cfg.search.allowDirect = detail::bool_field(s, "search", "allowDirect");
    if (s.contains("directN0Max"))
      cfg.search.directN0Max = detail::int_field(s, "search", "directN0Max");
  }

  if (j.contains("trials")) {
    const Json& t = j.at("trials");
    detail::require_keys(
        t, "trials",
        {"windowLength", "windows", "coverage", "collisions", "burnIn"});
    if (t.contains("windowLength")) {
      const long long wl = detail::int_field(t, "trials", "windowLength");
      if (wl < 1)
        throw PreconditionError("config: trials.windowLength must be >= 1");
      cfg.search.windowLength = wl;
      cfg.pipeline.windowLength = wl;
    }
    if (t.contains("windows")) {
      const int ws = static_cast<int>(detail::int_field(t, "trials", "windows"));
      if (ws < 1) throw PreconditionError("config: trials.windows must be >= 1");
      cfg.search.windowCount = ws;
      cfg.pipeline.windows = ws;
    }
    if (t.contains("coverage"))
      cfg.search.coverageTrials = detail::int_field(t, "trials", "coverage");
    if (t.contains("collisions"))
      cfg.pipeline.collisionDraws = detail::int_field(t, "trials", "collisions");
    if (t.contains("burnIn")) {
      cfg.burnIn = detail::int_field(t, "trials", "burnIn");
      if (cfg.burnIn < 0)
        throw PreconditionError("config: trials.burnIn must be >= 0");
    }
  }

  if (j.contains("budgets")) {
    const Json& b = j.at("budgets");
    detail::require_keys(b, "budgets", {"table", "enumeration"});
    if (b.contains("table"))
      cfg.search.tableBudget = detail::int_field(b, "budgets", "table");
    if (b.contains("enumeration"))
      cfg.search.enumBudget = detail::int_field(b, "budgets", "enumeration");
  }

  if (j.contains("simulate")) {
    const Json& s = j.at("simulate");
    detail::require_keys(s, "simulate", {"k", "imax"});
    if (s.contains("k")) {
      if (!s.at("k").is_array() || s.at("k").empty())
        throw PreconditionError("config: simulate.k must be a nonempty array");
      cfg.simulateK.clear();
      for (const auto& e : s.at("k")) {
        if (!e.is_number_integer() || e.get<int>() < 1)
          throw PreconditionError("config: simulate.k entries must be "
                                  "positive integers");
        cfg.simulateK.push_back(e.get<int>());
      }
    }
    if (s.contains("imax")) {
      cfg.simulateIMax = static_cast<int>(detail::int_field(s, "simulate", "imax"));
      if (cfg.simulateIMax < 0)
        throw PreconditionError("config: simulate.imax must be >= 0");
    }
  }

  if (j.contains("factor")) {
    const Json& f = j.at("factor");
    detail::require_keys(f, "factor", {"predictRadius", "imaxDel"});
    if (f.contains("predictRadius"))
      cfg.pipeline.predictRadius =
          static_cast<int>(detail::int_field(f, "factor", "predictRadius"));
    if (f.contains("imaxDel"))
      cfg.pipeline.iMaxDel =
          static_cast<int>(detail::int_field(f, "factor", "imaxDel"));
  }

  cfg.search.a = cfg.markerA;
  cfg.search.b = cfg.markerB;
  cfg.search.seed = cfg.seed;
  cfg.pipeline.seed = cfg.seed;
  return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace monojoin
