// Command-line front end: eligibility checks, seeded marker-process
// simulations, the full factor pipeline, and self-contained verification
// suites. All randomness derives from the master seed through labelled
// streams, so identical (config, seed) runs write identical bytes.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "monojoin/coupling.hpp"
#include "monojoin/dist.hpp"
#include "monojoin/errors.hpp"
#include "monojoin/factorlab.hpp"
#include "monojoin/io.hpp"
#include "monojoin/process.hpp"
#include "monojoin/rng.hpp"
#include "monojoin/star.hpp"

namespace {

using namespace monojoin;

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError("cannot write file: " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------
// check: dominance, entropies, gap, optional witness

int cmd_check(const ExperimentConfig& cfg, bool wantWitness) {
  const double hp = entropy(cfg.p), hq = entropy(cfg.q);
  const double gap = hp - hq;
  std::cout << "H(p) = " << g17(hp) << "\n";
  std::cout << "H(q) = " << g17(hq) << "\n";
  std::cout << "entropy gap = " << g17(gap) << "\n";

  bool feasible = false;
  std::optional<Coupling> witness;
  if (cfg.relation) {
    witness = r_dominates(cfg.p, cfg.q, *cfg.relation);
    feasible = witness.has_value();
    std::cout << "relation witness: " << (feasible ? "feasible" : "infeasible")
              << "\n";
  } else {
    feasible = dominates(cfg.p, cfg.q);
    std::cout << "dominance: " << (feasible ? "true" : "false") << "\n";
    if (feasible && wantWitness) witness = quantile_coupling(cfg.p, cfg.q);
  }
  if (wantWitness && witness) {
    std::cout << "witness coupling (row col mass):\n";
    write_coupling(std::cout, *witness);
  }

  const bool eligible = feasible && gap > 0.0;
  std::cout << "factor pipeline eligible: " << (eligible ? "yes" : "no")
            << "\n";
  return eligible ? 0 : 2;
}

// ---------------------------------------------------------------------------
// simulate: windows, decompositions, frozen and weak-star statistics

int cmd_simulate(const ExperimentConfig& cfg, const std::string& outDir) {
  std::filesystem::create_directories(outDir);
  const Coupling seedC = quantile_coupling(cfg.p, cfg.q);

  std::ostringstream csv;
  csv << "k,pFrozen,frozenBound,weakStarEstimate,truncationBound,samples\n";
  for (const int k : cfg.simulateK) {
    MarkerConfig mc;
    mc.a = cfg.markerA;
    mc.b = cfg.markerB;
    mc.k = k;
    const BlockJoining bj =
        build_block_joining(seedC, mc, cfg.search.tableBudget);

    std::vector<ProcessWindow> windows;
    for (int i = 0; i < cfg.pipeline.windows; ++i) {
      RandomStream rng(cfg.seed, "simulate/window",
                       (static_cast<std::uint64_t>(k) << 8) |
                           static_cast<std::uint64_t>(i));
      windows.push_back(sample_alternating(rng, bj, cfg.pipeline.windowLength,
                                           cfg.burnIn, true));
      std::ostringstream w;
      write_window(w, windows.back());
      write_text(std::filesystem::path(outDir) /
                     ("window_k" + std::to_string(k) + "_w" +
                      std::to_string(i) + ".txt"),
                 w.str());
      IntervalDecomposition d;
      try {
        d = decompose(windows.back().x, mc);
      } catch (const DegenerateConstruction&) {
        // markerless window: the empty skeleton is still valid output
      }
      write_text(std::filesystem::path(outDir) /
                     ("decomposition_k" + std::to_string(k) + "_w" +
                      std::to_string(i) + ".json"),
                 decomposition_json(d).dump(2) + "\n");
    }

    const FrozenReport fr = frozen_stats(windows, bj);
    const WeakStarReport ws =
        weak_star_against_product(seedC, windows, cfg.simulateIMax);
    csv << k << ',' << g17(fr.pFrozen) << ',' << g17(fr.bound) << ','
        << g17(ws.estimate) << ',' << g17(ws.truncationBound) << ','
        << fr.coords << "\n";
  }
  write_text(std::filesystem::path(outDir) / "statistics.csv", csv.str());
  std::cout << "wrote " << outDir << "/statistics.csv\n";
  return 0;
}

// ---------------------------------------------------------------------------
// factor: the full pipeline, report as JSON

int cmd_factor(const ExperimentConfig& cfg, const std::string& outDir,
               int psiMode) {
  if (!cfg.epsilon)
    throw PreconditionError("factor: config must set epsilon");
  if (cfg.relation) {
    // the pipeline realizes only pairs with y <= x; a relation containing
    // all such pairs is satisfied for free, anything narrower is not built
    for (int x = 0; x < cfg.p.n(); ++x)
      for (int y = 0; y <= x; ++y)
        if (!cfg.relation->contains(x, y))
          throw PreconditionError(
              "factor: configured relation excludes a monotone pair; only "
              "relations containing the monotone order are supported");
  }
  std::filesystem::create_directories(outDir);

  PipelineConfig pipe = cfg.pipeline;
  pipe.psiMode = psiMode;
  const FactorReport rep =
      run_factor_pipeline(cfg.p, cfg.q, *cfg.epsilon, cfg.search, pipe);

  write_text(std::filesystem::path(outDir) / "factor_report.json",
             factor_report_json(rep).dump(2) + "\n");

  std::cout << "k = " << rep.params.k << ", n0 = " << rep.params.n0
            << ", nRel = " << rep.params.nRel
            << ", kSuper = " << rep.params.kSuper << ", n = " << rep.params.n
            << ", mode = " << rep.params.mode << "\n";
  std::cout << "P(Y = Psi(X)) " << (rep.pMatchExact ? "= " : ">= ")
            << g17(rep.pMatch) << (rep.pMatchExact ? " (exact)" : " (floor)")
            << "\n";
  std::cout << "prediction: " << (rep.prediction.pass ? "pass" : "FAIL")
            << " (max error " << g17(rep.prediction.maxError) << " at epsilon "
            << g17(rep.prediction.epsilon) << ")\n";
  std::cout << "monotone: "
            << (rep.monotoneViolations == 0 ? "pass" : "FAIL") << " ("
            << rep.monotoneViolations << " violations)\n";
  std::cout << "weak-star: "
            << (rep.weakStarDel.estimate < rep.weakStarDelAllowance ? "pass"
                                                                    : "FAIL")
            << " (" << g17(rep.weakStarDel.estimate) << " vs allowance "
            << g17(rep.weakStarDelAllowance) << ")\n";
  std::cout << "report: " << (rep.pass ? "pass" : "FAIL") << "\n";
  std::cout << "wrote " << outDir << "/factor_report.json\n";
  return rep.pass ? 0 : 5;
}

// ---------------------------------------------------------------------------
// verify: self-contained property suites with fixed seeds

Coupling random_coupling_sized(RandomStream& rs, int na, int nb) {
  Coupling::Mass m;
  double total = 0.0;
  for (int a = 0; a < na; ++a)
    for (int b = 0; b < nb; ++b) {
      const double v = rs.uniform() < 0.3 ? 0.0 : rs.uniform();
      if (v > 0.0) {
        m[{a, b}] = v;
        total += v;
      }
    }
  if (m.empty()) {
    m[{0, 0}] = 1.0;
    total = 1.0;
  }
  for (auto& [k, v] : m) v /= total;
  return Coupling({na, 1}, {nb, 1}, std::move(m));
}

Dist random_dist(RandomStream& rs, int n) {
  std::vector<double> v(n);
  double total = 0.0;
  for (double& x : v) {
    x = rs.uniform() + 1e-3;
    total += x;
  }
  for (double& x : v) x /= total;
  return Dist(v);
}

bool suite_dist(std::ostream& log) {
  RandomStream rs(101, "verify/dist");
  long long bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = 2 + static_cast<int>(rs.uniform() * 5);
    const Dist p = random_dist(rs, n);
    const double h = entropy(p);
    if (h < -1e-12 || h > std::log(static_cast<double>(n)) + 1e-12) ++bad;
    if (!dominates(p, p)) ++bad;
  }
  // uniform entropy attains the log bound
  for (int n = 2; n <= 8; ++n) {
    const Dist u(std::vector<double>(n, 1.0 / n));
    if (std::abs(entropy(u) - std::log(static_cast<double>(n))) > 1e-9) ++bad;
  }
  // Strassen equivalence on random small instances: a monotone-relation
  // witness exists exactly when prefix-sum dominance holds
  for (int t = 0; t < 300; ++t) {
    const int n = 2 + static_cast<int>(rs.uniform() * 3);
    const Dist p = random_dist(rs, n), q = random_dist(rs, n);
    std::set<std::pair<int, int>> pairs;
    for (int x = 0; x < n; ++x)
      for (int y = 0; y <= x; ++y) pairs.insert({x, y});
    const auto witness = r_dominates(p, q, Relation(n, std::move(pairs)));
    if (witness.has_value() != dominates(p, q)) ++bad;
    if (witness && !is_monotone(*witness)) ++bad;
  }
  log << "  dist: " << (bad == 0 ? "pass" : "FAIL") << "\n";
  return bad == 0;
}

bool suite_coupling(std::ostream& log) {
  RandomStream rs(202, "verify/coupling");
  long long bad = 0;
  for (int t = 0; t < 10000; ++t) {
    const int na = 2 + static_cast<int>(rs.uniform() * 4);
    const int nb = 2 + static_cast<int>(rs.uniform() * 4);
    const Coupling alpha = random_coupling_sized(rs, na, nb);
    std::set<long long> good;
    for (int b = 0; b < nb; ++b)
      if (rs.uniform() < 0.5) good.insert(b);
    const Coupling refined = marriage_refine(alpha, good);
    if (!is_subordinate(refined, alpha)) ++bad;
    const auto [am1, am2] = marginals(alpha);
    const auto [rm1, rm2] = marginals(refined);
    for (int i = 0; i < am1.n(); ++i)
      if (std::abs(am1[i] - rm1[i]) > 1e-10) ++bad;
    for (int i = 0; i < am2.n(); ++i)
      if (std::abs(am2[i] - rm2[i]) > 1e-10) ++bad;
    const long long bound =
        good.empty() ? 0 : static_cast<long long>(good.size()) - 1;
    if (static_cast<long long>(split_elements(refined, good).size()) > bound)
      ++bad;
  }
  log << "  coupling: " << (bad == 0 ? "pass" : "FAIL") << "\n";
  return bad == 0;
}

bool suite_star(std::ostream& log) {
  RandomStream rs(303, "verify/star");
  long long bad = 0;
  for (int t = 0; t < 300; ++t) {
    const int nE1 = 2 + static_cast<int>(rs.uniform() * 3);
    const int nF1 = 2 + static_cast<int>(rs.uniform() * 3);
    const int nE2 = 2 + static_cast<int>(rs.uniform() * 3);
    const int nF2 = 2 + static_cast<int>(rs.uniform() * 3);
    const Coupling Z1 = random_coupling_sized(rs, nE1, nF1);
    const Coupling Z2 = random_coupling_sized(rs, nE2, nF2);
    const StarJoint W = star_couple(Z1, Z2);

    // projections reproduce the inputs
    const Coupling p12 = star_project_12(W), p34 = star_project_34(W);
    for (const auto& [k, v] : Z1.mass())
      if (std::abs(p12.at(k.first, k.second) - v) > 1e-10) ++bad;
    for (const auto& [k, v] : Z2.mass())
      if (std::abs(p34.at(k.first, k.second) - v) > 1e-10) ++bad;

    // independence of the first Y and the second pair, and vice versa
    if (std::abs(star_mi_y1(W)) > 1e-10) ++bad;
    if (std::abs(star_mi_x2(W)) > 1e-10) ++bad;

    // split bound per (f1, e2) slice: rows hitting two columns number
    // at most |F2| - 1
    std::map<std::pair<long long, long long>,
             std::map<long long, std::set<long long>>>
        slices;
    for (const auto& [k, v] : W.mass) slices[{k[1], k[2]}][k[0]].insert(k[3]);
    for (const auto& [slice, rows] : slices) {
      long long split = 0;
      for (const auto& [e1, f2s] : rows)
        if (f2s.size() > 1) ++split;
      if (split > nF2 - 1) ++bad;
    }
  }
  log << "  star: " << (bad == 0 ? "pass" : "FAIL") << "\n";
  return bad == 0;
}

bool suite_process(std::ostream& log) {
  long long bad = 0;
  const Coupling seedC =
      quantile_coupling(Dist({0.5, 0.5}), Dist({2.0 / 3.0, 1.0 / 3.0}));
  MarkerConfig mc;
  mc.a = 0;
  mc.b = 1;
  mc.k = 4;
  const BlockJoining bj = build_block_joining(seedC, mc);
  std::vector<ProcessWindow> windows;
  for (int i = 0; i < 2; ++i) {
    RandomStream rng(404, "verify/process", static_cast<std::uint64_t>(i));
    windows.push_back(sample_alternating(rng, bj, 40000, 4096, true));
  }
  const FrozenReport fr = frozen_stats(windows, bj);
  if (fr.pFrozen > fr.bound + 4.0 * fr.se) ++bad;

  // lazy product comparison equals the materialized one
  const int base = seedC.row_alphabet().base;
  std::vector<JointLaw> emp, prod;
  for (int i = 0; i <= 2; ++i) {
    JointLaw pooled;
    for (const ProcessWindow& w : windows)
      for (const auto& [key, v] : restricted_empirical_law(w, i, base))
        pooled[key] += v / 2.0;
    emp.push_back(std::move(pooled));
    prod.push_back(restricted_product_law(seedC, i));
  }
  const WeakStarReport direct = weak_star_distance(emp, prod, 2);
  const WeakStarReport lazy = weak_star_against_product(seedC, windows, 2);
  if (std::abs(direct.estimate - lazy.estimate) > 1e-12) ++bad;

  log << "  process: " << (bad == 0 ? "pass" : "FAIL") << "\n";
  return bad == 0;
}

bool suite_factorlab(std::ostream& log) {
  long long bad = 0;
  ParamSearch search;
  search.kMin = 2;
  search.kMax = 3;
  search.n0Max = 3;
  search.nMax = 4;
  search.windowLength = 20000;
  search.windowCount = 4;
  search.blockWindows = 2;
  search.blockWindowCap = 200000;
  search.coverageTrials = 5000;
  search.seed = 505;
  PipelineConfig pipe;
  pipe.windowLength = 40000;
  pipe.windows = 3;
  pipe.predictRadius = 0;
  pipe.iMaxDel = 2;
  pipe.collisionDraws = 3000;
  pipe.seed = 505;
  const FactorReport rep = run_factor_pipeline(
      Dist({0.2, 0.8}), Dist({0.988, 0.012}), 3.0, search, pipe);
  if (!rep.pass) ++bad;
  if (rep.monotoneViolations != 0) ++bad;
  if (!rep.pMatchExact || rep.pMatch < 1.0 - rep.params.eta) ++bad;
  log << "  factorlab: " << (bad == 0 ? "pass" : "FAIL") << "\n";
  return bad == 0;
}

int cmd_verify(const std::vector<std::string>& suites) {
  bool ok = true;
  for (const std::string& s : suites) {
    if (s == "dist")
      ok = suite_dist(std::cout) && ok;
    else if (s == "coupling")
      ok = suite_coupling(std::cout) && ok;
    else if (s == "star")
      ok = suite_star(std::cout) && ok;
    else if (s == "process")
      ok = suite_process(std::cout) && ok;
    else if (s == "factorlab")
      ok = suite_factorlab(std::cout) && ok;
    else if (s == "empty")
      std::cout << "  empty: pass\n";
    else if (s == "all") {
      ok = suite_dist(std::cout) && ok;
      ok = suite_coupling(std::cout) && ok;
      ok = suite_star(std::cout) && ok;
      ok = suite_process(std::cout) && ok;
      ok = suite_factorlab(std::cout) && ok;
    } else {
      throw PreconditionError("verify: unknown suite \"" + s + "\"");
    }
  }
  std::cout << (ok ? "verify: pass" : "verify: FAIL") << "\n";
  if (!ok) throw VerificationFailure("verify: at least one suite failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"monotone joining workbench"};
  app.require_subcommand(1);

  std::string configPath, outDir = "out";
  std::uint64_t seedOverride = 0;
  bool haveSeed = false, wantExact = false, wantSampled = false;
  int imaxOverride = -1;
  long long trialsOverride = -1;
  std::vector<std::string> suites{"all"};

  const auto addCommon = [&](CLI::App* cmd, bool needConfig) {
    auto* c = cmd->add_option("--config", configPath, "JSON config file");
    if (needConfig) c->required();
    cmd->add_option("--seed", seedOverride, "master seed override")
        ->each([&](const std::string&) { haveSeed = true; });
    cmd->add_option("--out", outDir, "output directory");
    auto* ex = cmd->add_flag("--exact", wantExact,
                             "demand exact enumeration / print witness");
    cmd->add_flag("--sampled", wantSampled,
                  "force sampled estimates over exact enumeration")
        ->excludes(ex);
    cmd->add_option("--imax", imaxOverride, "weak-star comparison radius");
    cmd->add_option("--trials", trialsOverride,
                    "Monte Carlo window length override");
  };

  auto* check = app.add_subcommand(
      "check", "dominance, entropies, and pipeline eligibility");
  addCommon(check, true);
  auto* simulate = app.add_subcommand(
      "simulate", "sample marker processes and their statistics");
  addCommon(simulate, true);
  auto* factor =
      app.add_subcommand("factor", "run the full factor pipeline");
  addCommon(factor, true);
  auto* verify =
      app.add_subcommand("verify", "run bundled verification suites");
  verify->add_option("suite", suites, "suites: dist coupling star process "
                                      "factorlab empty all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (verify->parsed()) return cmd_verify(suites);

    ExperimentConfig cfg = load_config(configPath);
    if (haveSeed) {
      cfg.seed = seedOverride;
      cfg.search.seed = seedOverride;
      cfg.pipeline.seed = seedOverride;
    }
    if (imaxOverride >= 0) {
      cfg.simulateIMax = imaxOverride;
      cfg.pipeline.iMaxDel = imaxOverride;
    }
    if (trialsOverride >= 0) {
      if (trialsOverride < 1)
        throw PreconditionError("--trials must be >= 1");
      cfg.search.windowLength = trialsOverride;
      cfg.pipeline.windowLength = trialsOverride;
    }

    if (check->parsed()) return cmd_check(cfg, wantExact);
    if (simulate->parsed()) return cmd_simulate(cfg, outDir);
    if (factor->parsed())
      return cmd_factor(cfg, outDir, wantExact ? 1 : (wantSampled ? 2 : 0));
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DegenerateConstruction& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const SearchExhausted& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const VerificationFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  }
  return 0;
}
