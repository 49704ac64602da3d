// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
// when any of them fails. The desk-scale experiment writes its artifacts to
// ./acceptance_desk in the working directory.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "safeeval/harness.hpp"
#include "support/tabular_mdp.hpp"

using namespace safeeval;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

MeanSd mean_sd(const std::vector<double> &x) {
  MeanSd m;
  for (double v : x) m.mean += v;
  m.mean /= static_cast<double>(x.size());
  for (double v : x) m.sd += (v - m.mean) * (v - m.mean);
  m.sd = std::sqrt(m.sd / static_cast<double>(x.size() - 1));
  return m;
}

OpeSettings tabular_settings(const oracle::TabularMdp &mdp) {
  OpeSettings s;
  s.behavior_bins = mdp.disc.bins_per_dim();
  s.model_bins = mdp.disc.bins_per_dim();
  s.horizon = mdp.horizon;
  return s;
}

// ---------------------------------------------------------------------------

Verdict consistency() {
  const oracle::TabularMdp mdp = oracle::standard_mdp();
  const double exact = oracle::exact_value(mdp, oracle::target_table());
  const PolicyPtr target = oracle::as_policy(mdp, oracle::target_table());
  const OpeSettings settings = tabular_settings(mdp);
  const char *names[] = {"wis", "pdwis", "mb", "wdr"};

  auto estimates = [&](std::size_t n, int reps, std::uint64_t stream) {
    std::vector<std::vector<double>> out(4);
    for (int r = 0; r < reps; ++r) {
      Rng rng(derive_seed(1001, {stream, static_cast<std::uint64_t>(r)}));
      const Dataset d = oracle::sample_dataset(mdp, oracle::behavior_table(), n, rng);
      const EvaluationSuite suite(d, target, settings);
      out[0].push_back(suite.wis());
      out[1].push_back(suite.pdwis());
      out[2].push_back(suite.mb());
      out[3].push_back(suite.wdr());
    }
    return out;
  };
  const int reps_large = 30, reps_small = 300;
  const auto large = estimates(10000, reps_large, 1);
  const auto small = estimates(100, reps_small, 2);

  bool pass = true;
  std::string detail = fmt::format("exact {:.4f};", exact);
  for (int e = 0; e < 4; ++e) {
    // Standard error of a single n = 10000 estimate, from independent replications.
    const MeanSd big = mean_sd(large[e]);
    const double first_dev = std::abs(large[e][0] - exact);
    const double mean_dev = std::abs(big.mean - exact);
    const bool within = first_dev <= 3.0 * big.sd && mean_dev <= 3.0 * big.sd / std::sqrt(reps_large);
    double mae_large = 0.0, mae_small = 0.0;
    for (double v : large[e]) mae_large += std::abs(v - exact);
    for (double v : small[e]) mae_small += std::abs(v - exact);
    mae_large /= reps_large;
    mae_small /= reps_small;
    const double ratio = mae_large / mae_small;
    pass = pass && within && ratio < 0.5;
    detail += fmt::format(" {} est {:.4f} (se {:.4f}, mean dev {:.1f} se/sqrt(R)) mae ratio {:.3f};", names[e],
                          large[e][0], big.sd, mean_dev / (big.sd / std::sqrt(reps_large)), ratio);
  }
  return {pass, detail};
}

Verdict unbiasedness() {
  const oracle::TabularMdp mdp = oracle::standard_mdp();
  const double exact = oracle::exact_value(mdp, oracle::target_table());
  Rng rng(2002);
  const Dataset d = oracle::sample_dataset(mdp, oracle::behavior_table(), 10000, rng);
  const MeanSd m = mean_sd(oracle::ordinary_is_terms(mdp, d, oracle::target_table(), oracle::behavior_table()));
  const double se = m.sd / std::sqrt(10000.0);
  return {std::abs(m.mean - exact) <= 3.0 * se,
          fmt::format("ordinary IS mean {:.4f}, exact {:.4f}, |diff| = {:.2f} SE", m.mean, exact,
                      std::abs(m.mean - exact) / se)};
}

Verdict variance_reduction() {
  const oracle::TabularMdp mdp = oracle::standard_mdp();
  const PolicyPtr target = oracle::as_policy(mdp, oracle::target_table());
  const ModelValueFunctions vf(oracle::exact_model(mdp), *target);
  std::vector<double> wdr, pdwis;
  for (int r = 0; r < 200; ++r) {
    Rng rng(derive_seed(3003, {static_cast<std::uint64_t>(r)}));
    const Dataset d = oracle::sample_dataset(mdp, oracle::behavior_table(), 200, rng);
    const EstimatedBehaviorPolicy pib = estimate_behavior_policy(d, mdp.disc, 1.0);
    const ImportanceWeights w = compute_weights(*target, pib, d);
    pdwis.push_back(pdwis_estimate(w, d, 1.0));
    wdr.push_back(wdr_estimate(w, d, vf, 1.0));
  }
  const double v_wdr = std::pow(mean_sd(wdr).sd, 2), v_pdwis = std::pow(mean_sd(pdwis).sd, 2);
  return {v_wdr <= v_pdwis, fmt::format("var(WDR) {:.5f} vs var(PDWIS) {:.5f} over 200 replications of n = 200",
                                        v_wdr, v_pdwis)};
}

Verdict identities() {
  Rng prng(4004);
  const SoftmaxPolicy pi_b = make_behavior_policy(prng);
  Rng rng(4005);
  const Dataset data = collect(pi_b, 300, EnvConfig{}, rng);
  const auto [train, test] = split(data, {20, 1});

  ImproveConfig ddqn = ImproveConfig::defaults_for(ImproveMethod::DDQN);
  ddqn.seed = 17;
  ImproveConfig bcq = ddqn;
  bcq.method = ImproveMethod::BCQ;
  bcq.bcq_threshold = 0.0;
  auto [sd, pd] = improve(train, ddqn);
  auto [sb, pb] = improve(train, bcq);
  const bool bcq_same = sd.online == sb.online && sd.target == sb.target;

  const EstimatedBehaviorPolicy pib = estimate_behavior_policy(test, StateDiscretizer(32), 1.0);
  const ImportanceWeights w = compute_weights(*pd, pib, test);
  const ModelValueFunctions zero = ModelValueFunctions::zero(StateDiscretizer(32), 250);
  const double wdr0 = wdr_estimate(w, test, zero, 1.0), pd_est = pdwis_estimate(w, test, 1.0);
  const bool wdr_same = wdr0 == pd_est;

  const ImportanceWeights unit = compute_weights(pib, pib, test);
  const double wis_unit = wis_estimate(unit, test, 1.0), mean = behavior_value_estimate(test);
  const bool wis_same = wis_unit == mean;

  return {bcq_same && wdr_same && wis_same,
          fmt::format("BCQ(tau=0) == DDQN weights: {}; WDR(zero) {:a} vs PDWIS {:a}; unit WIS {:a} vs mean {:a}",
                      bcq_same, wdr0, pd_est, wis_unit, mean)};
}

Verdict coverage() {
  const int trials = 500, n = 50;
  const double true_mean = 1.0; // Exponential(1)
  int covered_pct = 0, covered_bca = 0;
  std::vector<double> x(n);
  const ResampleStatistic mean = [&x](std::span<const std::size_t> idx) {
    double s = 0.0;
    for (std::size_t i : idx) s += x[i];
    return s / static_cast<double>(idx.size());
  };
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(5005, {static_cast<std::uint64_t>(t)}));
    for (double &v : x) v = -std::log(1.0 - rng.uniform());
    BootstrapConfig cfg;
    cfg.B = 1000;
    cfg.delta = 0.05;
    cfg.seed = derive_seed(5006, {static_cast<std::uint64_t>(t)});
    cfg.method = BoundMethod::Percentile;
    covered_pct += hcope_lower_bound(mean, x.size(), cfg).lower_bound <= true_mean;
    cfg.method = BoundMethod::BCa;
    covered_bca += hcope_lower_bound(mean, x.size(), cfg).lower_bound <= true_mean;
  }
  const double cp = covered_pct / static_cast<double>(trials), cb = covered_bca / static_cast<double>(trials);
  return {cp >= 0.90 && cb >= 0.90,
          fmt::format("Exponential(1), n = {}, B = 1000: percentile coverage {:.3f}, BCa coverage {:.3f}", n, cp, cb)};
}

// ---------------------------------------------------------------------------

struct DeskResults {
  std::map<ImproveMethod, std::vector<RunRecord>> records;
  AggregateTable table;
  ExperimentConfig cfg;
};

DeskResults desk_experiment() {
  DeskResults out;
  out.cfg = ExperimentConfig::desk();
  std::vector<RunRecord> all;
  for (ImproveMethod m : {ImproveMethod::BC, ImproveMethod::DDQN, ImproveMethod::BCQ}) {
    ExperimentConfig c = out.cfg;
    c.improve = ImproveConfig::defaults_for(m);
    auto recs = run_experiment(c);
    all.insert(all.end(), recs.begin(), recs.end());
    out.records[m] = std::move(recs);
  }
  out.table = aggregate(all, out.cfg);
  emit_outputs(out.table, out.cfg, "acceptance_desk");
  return out;
}

const SummaryRow &summary_at(const AggregateTable &t, const std::string &method, const std::string &est, int it) {
  for (const SummaryRow &s : t.summary)
    if (s.method == method && s.estimator == est && s.iteration == it) return s;
  throw std::runtime_error("missing summary row " + method + "/" + est);
}

Verdict detection(const DeskResults &r) {
  const auto &runs = r.records.at(ImproveMethod::DDQN);
  int detected = 0;
  std::string firsts;
  for (const RunRecord &rec : runs) {
    if (rec.first_pass_iteration && *rec.first_pass_iteration <= 6) ++detected;
    firsts += rec.first_pass_iteration ? std::to_string(*rec.first_pass_iteration) + " " : "- ";
  }
  const double frac = detected / static_cast<double>(runs.size());
  return {frac >= 0.70, fmt::format("DDQN runs with MB bound above vb_hat by iteration 6: {}/{} (first pass: {})",
                                    detected, runs.size(), firsts)};
}

Verdict bc_capped(const DeskResults &r) {
  bool pass = true;
  std::string worst;
  double worst_margin = -1e300;
  for (const SummaryRow &s : r.table.summary) {
    if (s.method != "bc") continue;
    const double ceiling = s.vb_hat.mean + s.vb_hat.se.value_or(0.0);
    const double margin = s.lower_bound.mean - ceiling;
    if (margin > worst_margin) {
      worst_margin = margin;
      worst = fmt::format("{} at iteration {} (mean LB {:.3f} vs vb_hat + 1 SE {:.3f})", s.estimator, s.iteration,
                          s.lower_bound.mean, ceiling);
    }
    if (margin > 0.0) pass = false;
  }
  return {pass, "BC, largest mean lower bound relative to mean vb_hat + 1 SE: " + worst};
}

Verdict wis_below_mb(const DeskResults &r) {
  const int k = r.cfg.max_iterations;
  const SummaryRow &wis = summary_at(r.table, "ddqn", "wis", k), &mb = summary_at(r.table, "ddqn", "mb", k);
  return {wis.lower_bound.mean < mb.lower_bound.mean,
          fmt::format("DDQN iteration {}: mean WIS LB {:.3f}, mean MB LB {:.3f}, mean true value {:.3f}", k,
                      wis.lower_bound.mean, mb.lower_bound.mean, wis.true_value ? wis.true_value->mean : NAN)};
}

Verdict tv_order(const DeskResults &r) {
  const int k = r.cfg.max_iterations;
  const double bc = summary_at(r.table, "bc", "mb", k).tv_distance.mean;
  const double dq = summary_at(r.table, "ddqn", "mb", k).tv_distance.mean;
  const double bq = summary_at(r.table, "bcq", "mb", k).tv_distance.mean;
  return {bc < dq && bc < bq, fmt::format("iteration {} mean TV: bc {:.3f}, ddqn {:.3f}, bcq {:.3f}", k, bc, dq, bq)};
}

// ---------------------------------------------------------------------------

Verdict control_flow() {
  ExperimentConfig c;
  c.improve.updates_per_iteration = 200;
  c.behavior.online_episodes = 20;
  c.estimators.clear();
  c.true_value_episodes = 0;
  c.runs = 3;
  c.gating_estimator = "inject";
  c.threads = 1;

  ExperimentConfig pass_cfg = c;
  pass_cfg.halt_on_pass = true;
  pass_cfg.custom_estimators.push_back({"inject", [](const IterationContext &x) { return x.vb_hat + 1.0; }});
  ExperimentConfig never_cfg = c;
  never_cfg.custom_estimators.push_back({"inject", [](const IterationContext &x) { return x.vb_hat - 1.0; }});
  ExperimentConfig never_halt = never_cfg;
  never_halt.halt_on_pass = true;

  bool ok = true;
  std::set<std::uint64_t> seeds;
  std::size_t seen = 0;
  std::string detail;
  for (int run = 0; run < c.runs; ++run) {
    const RunRecord a = run_safe_eval(pass_cfg, run);
    const RunRecord b = run_safe_eval(never_cfg, run);
    const RunRecord bh = run_safe_eval(never_halt, run);
    ok = ok && a.iterations.size() == 1 && a.first_pass_iteration == 1 && a.iterations[0].stopped;
    ok = ok && b.iterations.size() == 10 && bh.iterations.size() == 10 && !b.first_pass_iteration;
    for (const auto &it : b.iterations) {
      seeds.insert(it.dataset_seed);
      ++seen;
    }
    detail += fmt::format("run {}: always-pass {} iteration(s), never-pass {} iterations; ", run, a.iterations.size(),
                          b.iterations.size());
  }
  // Also across the full default grid.
  std::set<std::uint64_t> grid;
  for (int run = 0; run < 40; ++run)
    for (int i = 1; i <= 10; ++i) grid.insert(dataset_seed(c.base_seed, run, i));
  ok = ok && seeds.size() == seen && grid.size() == 400;
  detail += fmt::format("distinct dataset seeds {}/{} in the loop, {}/400 over 40 x 10", seeds.size(), seen, grid.size());
  return {ok, detail};
}

Verdict reproducibility() {
  namespace fs = std::filesystem;
  const fs::path root = fs::absolute("acceptance_repro");
  fs::remove_all(root);
  fs::create_directories(root);
  ExperimentConfig c = ExperimentConfig::desk();
  c.improve = ImproveConfig::defaults_for(ImproveMethod::DDQN);
  c.improve.updates_per_iteration = 500;
  c.runs = 3;
  c.max_iterations = 3;
  c.bootstrap.B = 50;
  c.wdr_B = 30;
  c.true_value_episodes = 20;
  c.base_seed = 77;
  {
    std::ofstream cfg_out(root / "config.json");
    cfg_out << to_json(c).dump(2);
  }
  auto slurp = [](const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  std::vector<std::string> files;
  for (const char *name : {"a", "b"}) {
    const std::string cmd = fmt::format("\"{}\" experiment --config \"{}\" --method ddqn --out \"{}\" > /dev/null 2>&1",
                                        SAFEEVAL_CLI, (root / "config.json").string(), (root / name).string());
    if (std::system(cmd.c_str()) != 0) return {false, "CLI invocation failed: " + cmd};
    files.push_back(slurp(root / name / "results.csv"));
  }
  const bool same = !files[0].empty() && files[0] == files[1];
  return {same, fmt::format("two CLI executions, results.csv of {} bytes each, identical: {}", files[0].size(), same)};
}

Verdict golden() {
  std::ifstream in(SAFEEVAL_TEST_DATA "/inner_tick_golden.txt");
  if (!in) return {false, "golden file missing"};
  std::string line;
  int rows = 0, exact = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string p, v, np, nv;
    int a = 0;
    fields >> p >> v >> a >> np >> nv;
    const State next = inner_tick({std::strtod(p.c_str(), nullptr), std::strtod(v.c_str(), nullptr)}, Action(a));
    ++rows;
    exact += next.position == std::strtod(np.c_str(), nullptr) && next.velocity == std::strtod(nv.c_str(), nullptr);
  }
  return {rows == 100 && exact == 100, fmt::format("{}/{} recorded transitions reproduced bit for bit", exact, rows)};
}

} // namespace

int main() {
  int failures = 0;
  auto report = [&](const std::string &label, const std::function<Verdict()> &check) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception &e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += v.pass ? 0 : 1;
    std::cout << fmt::format("{} {} ({:.1f} s): {}", v.pass ? "PASS" : "FAIL", label, secs, v.detail) << std::endl;
  };

  report("criterion 1 estimator consistency", consistency);
  report("criterion 2 ordinary IS unbiasedness", unbiasedness);
  report("criterion 3 WDR variance reduction", variance_reduction);
  report("criterion 4 identity reductions", identities);
  report("criterion 5 bootstrap coverage", coverage);

  std::optional<DeskResults> desk;
  const auto start = std::chrono::steady_clock::now();
  try {
    desk = desk_experiment();
  } catch (const std::exception &e) {
    std::cout << "desk experiment failed: " << e.what() << std::endl;
  }
  std::cout << fmt::format("desk experiment: {:.1f} s", std::chrono::duration<double>(
                                                           std::chrono::steady_clock::now() - start)
                                                           .count())
            << std::endl;
  auto on_desk = [&](Verdict (*f)(const DeskResults &)) {
    return [&desk, f] { return desk ? f(*desk) : Verdict{false, "desk experiment did not complete"}; };
  };
  report("criterion 6a DDQN detected by MB", on_desk(detection));
  report("criterion 6b BC bounds stay at the behavior value", on_desk(bc_capped));
  report("criterion 6c WIS below MB for DDQN", on_desk(wis_below_mb));
  report("criterion 7 TV ordering", on_desk(tv_order));
  report("criterion 8 loop control flow", control_flow);
  report("criterion 9 byte-identical results", reproducibility);
  report("criterion 10 dynamics golden file", golden);

  std::cout << (failures == 0 ? "all criteria passed" : fmt::format("{} criterion line(s) failed", failures))
            << std::endl;
  return failures == 0 ? 0 : 1;
}
