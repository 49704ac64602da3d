#include "safeeval/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "safeeval/svg_plot.hpp"

namespace safeeval {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_shipped_estimator(const std::string &name) { return name == "wis" || name == "mb" || name == "wdr"; }

std::uint64_t estimator_stream(const std::string &name, std::size_t custom_index) {
  if (name == "wis") return 1;
  if (name == "mb") return 2;
  if (name == "wdr") return 3;
  return 100 + custom_index;
}

double min_return(const Dataset &d) {
  double m = std::numeric_limits<double>::infinity();
  for (const Trajectory &t : d.trajectories) m = std::min(m, trajectory_return(t, 1.0));
  return m;
}

} // namespace

ExperimentConfig ExperimentConfig::paper() { return ExperimentConfig{}; }

ExperimentConfig ExperimentConfig::desk() {
  ExperimentConfig c;
  c.runs = 10;
  c.bootstrap.B = 500;
  return c;
}

ExperimentConfig ExperimentConfig::preset(const std::string &name) {
  if (name == "paper") return paper();
  if (name == "desk") return desk();
  throw ConfigError("unknown preset '" + name + "' (expected paper or desk)");
}

BoundMethod ExperimentConfig::bound_method_for(const std::string &estimator) const {
  const auto it = bound_methods.find(estimator);
  return it == bound_methods.end() ? bootstrap.method : it->second;
}

int ExperimentConfig::resamples_for(const std::string &estimator) const {
  return estimator == "wdr" ? wdr_B : bootstrap.B;
}

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const std::string &msg) {
    if (!ok) throw ConfigError(msg);
  };
  try {
    improve.validate();
    bootstrap.validate();
    env.validate();
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
  check(n_per_iteration >= 1, "n_per_iteration must be positive");
  check(n_train >= 0 && n_train <= n_per_iteration, "n_train must lie in [0, n_per_iteration]");
  check(n_train < n_per_iteration, "the test split would be empty");
  check(max_iterations >= 1, "max_iterations must be positive");
  check(runs >= 1, "runs must be >= 1");
  check(wdr_B >= 2, "wdr_B must be >= 2");
  check(true_value_episodes >= 0, "true_value_episodes must be >= 0");
  check(threads >= 0, "threads must be >= 0");
  check(ope.alpha > 0.0, "ope.alpha must be positive");
  check(ope.behavior_bins >= 1 && ope.model_bins >= 1, "discretizer bins must be positive");
  check(ope.horizon >= 1, "ope.horizon must be positive");
  check(ope.gamma >= 0.0 && ope.gamma <= 1.0, "ope.gamma must be in [0, 1]");
  std::vector<std::string> names;
  for (const std::string &e : estimators) {
    check(is_shipped_estimator(e), "unknown estimator '" + e + "' (expected wis, mb or wdr)");
    names.push_back(e);
  }
  for (const CustomEstimator &c : custom_estimators) {
    check(!c.name.empty() && static_cast<bool>(c.lower_bound), "custom estimators need a name and a function");
    names.push_back(c.name);
  }
  std::vector<std::string> sorted = names;
  std::sort(sorted.begin(), sorted.end());
  check(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), "estimator names must be unique");
  check(names.empty() || std::find(names.begin(), names.end(), gating_estimator) != names.end(),
        "gating estimator '" + gating_estimator + "' is not among the configured estimators");
}

json to_json(const ExperimentConfig &c) {
  json bounds = json::object();
  for (const auto &[name, m] : c.bound_methods) bounds[name] = to_string(m);
  return {
      {"improve", improve_config_to_json(c.improve)},
      {"estimators", c.estimators},
      {"bootstrap",
       {{"B", c.bootstrap.B},
        {"delta", c.bootstrap.delta},
        {"method", to_string(c.bootstrap.method)},
        {"seed", c.bootstrap.seed},
        {"max_failure_fraction", c.bootstrap.max_failure_fraction}}},
      {"wdr_B", c.wdr_B},
      {"bound_methods", bounds},
      {"gating_estimator", c.gating_estimator},
      {"halt_on_pass", c.halt_on_pass},
      {"n_per_iteration", c.n_per_iteration},
      {"n_train", c.n_train},
      {"max_iterations", c.max_iterations},
      {"runs", c.runs},
      {"base_seed", c.base_seed},
      {"env",
       {{"action_repeat", c.env.action_repeat},
        {"max_macro_steps", c.env.max_macro_steps},
        {"goal_position", c.env.goal_position},
        {"start_position", {c.env.start_position_lo, c.env.start_position_hi}},
        {"start_velocity", {c.env.start_velocity_lo, c.env.start_velocity_hi}}}},
      {"behavior",
       {{"online_episodes", c.behavior.online_episodes},
        {"uniform_mix", c.behavior.uniform_mix},
        {"temperature", c.behavior.temperature},
        {"learning_rate", c.behavior.learning_rate},
        {"epsilon", c.behavior.epsilon},
        {"num_tilings", c.behavior.num_tilings},
        {"tiles_per_dim", c.behavior.tiles_per_dim}}},
      {"ope",
       {{"gamma", c.ope.gamma},
        {"alpha", c.ope.alpha},
        {"behavior_bins", c.ope.behavior_bins},
        {"model_bins", c.ope.model_bins},
        {"horizon", c.ope.horizon},
        {"mb_rollouts", c.ope.mb_rollouts},
        {"wdr_refit_model", c.ope.wdr_refit_model}}},
      {"true_value_episodes", c.true_value_episodes},
      {"threads", c.threads},
      {"output_dir", c.output_dir},
  };
}

ExperimentConfig config_from_json(const json &j, ExperimentConfig c) {
  try {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    if (j.contains("improve")) {
      json imp = j.at("improve");
      if (!imp.contains("method")) imp["method"] = to_string(c.improve.method);
      c.improve = improve_config_from_json(imp);
    }
    c.estimators = j.value("estimators", c.estimators);
    if (j.contains("bootstrap")) {
      const json &b = j.at("bootstrap");
      c.bootstrap.B = b.value("B", c.bootstrap.B);
      c.bootstrap.delta = b.value("delta", c.bootstrap.delta);
      if (b.contains("method")) c.bootstrap.method = parse_bound_method(b.at("method").get<std::string>());
      c.bootstrap.seed = b.value("seed", c.bootstrap.seed);
      c.bootstrap.max_failure_fraction = b.value("max_failure_fraction", c.bootstrap.max_failure_fraction);
    }
    c.wdr_B = j.value("wdr_B", c.wdr_B);
    if (j.contains("bound_methods")) {
      c.bound_methods.clear();
      for (const auto &[name, m] : j.at("bound_methods").items())
        c.bound_methods[name] = parse_bound_method(m.get<std::string>());
    }
    c.gating_estimator = j.value("gating_estimator", c.gating_estimator);
    c.halt_on_pass = j.value("halt_on_pass", c.halt_on_pass);
    c.n_per_iteration = j.value("n_per_iteration", c.n_per_iteration);
    c.n_train = j.value("n_train", c.n_train);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.runs = j.value("runs", c.runs);
    c.base_seed = j.value("base_seed", c.base_seed);
    if (j.contains("env")) {
      const json &e = j.at("env");
      c.env.action_repeat = e.value("action_repeat", c.env.action_repeat);
      c.env.max_macro_steps = e.value("max_macro_steps", c.env.max_macro_steps);
      c.env.goal_position = e.value("goal_position", c.env.goal_position);
      if (e.contains("start_position")) {
        const auto r = e.at("start_position").get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("env.start_position must be [lo, hi]");
        c.env.start_position_lo = r[0];
        c.env.start_position_hi = r[1];
      }
      if (e.contains("start_velocity")) {
        const auto r = e.at("start_velocity").get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("env.start_velocity must be [lo, hi]");
        c.env.start_velocity_lo = r[0];
        c.env.start_velocity_hi = r[1];
      }
    }
    if (j.contains("behavior")) {
      const json &b = j.at("behavior");
      c.behavior.online_episodes = b.value("online_episodes", c.behavior.online_episodes);
      c.behavior.uniform_mix = b.value("uniform_mix", c.behavior.uniform_mix);
      c.behavior.temperature = b.value("temperature", c.behavior.temperature);
      c.behavior.learning_rate = b.value("learning_rate", c.behavior.learning_rate);
      c.behavior.epsilon = b.value("epsilon", c.behavior.epsilon);
      c.behavior.num_tilings = b.value("num_tilings", c.behavior.num_tilings);
      c.behavior.tiles_per_dim = b.value("tiles_per_dim", c.behavior.tiles_per_dim);
    }
    if (j.contains("ope")) {
      const json &o = j.at("ope");
      c.ope.gamma = o.value("gamma", c.ope.gamma);
      c.ope.alpha = o.value("alpha", c.ope.alpha);
      c.ope.behavior_bins = o.value("behavior_bins", c.ope.behavior_bins);
      c.ope.model_bins = o.value("model_bins", c.ope.model_bins);
      c.ope.horizon = o.value("horizon", c.ope.horizon);
      c.ope.mb_rollouts = o.value("mb_rollouts", c.ope.mb_rollouts);
      c.ope.wdr_refit_model = o.value("wdr_refit_model", c.ope.wdr_refit_model);
    }
    c.true_value_episodes = j.value("true_value_episodes", c.true_value_episodes);
    c.threads = j.value("threads", c.threads);
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const json::exception &e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  } catch (const std::invalid_argument &e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  return c;
}

std::uint64_t dataset_seed(std::uint64_t base_seed, int run, int iteration) {
  return derive_seed(base_seed, {static_cast<std::uint64_t>(run), 2, static_cast<std::uint64_t>(iteration)});
}

double true_value_oracle(const DiscretePolicy &policy, const EnvConfig &env, int episodes, Rng &rng) {
  if (episodes < 1) throw std::invalid_argument("true_value_oracle: episodes must be >= 1");
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) total += trajectory_return(rollout(policy, env, rng, false), 1.0);
  return total / episodes;
}

RunRecord run_safe_eval(const ExperimentConfig &cfg, int run) {
  cfg.validate();
  const auto urun = static_cast<std::uint64_t>(run);
  RunRecord record;
  record.run = run;
  record.method = cfg.improve.method;

  Rng behavior_rng(derive_seed(cfg.base_seed, {urun, 1}));
  const auto pi_b = std::make_shared<SoftmaxPolicy>(make_behavior_policy(behavior_rng, cfg.behavior, cfg.env));
  const std::string pi_b_id = fmt::format("softmax-q/run{}/base{}", run, cfg.base_seed);

  ImproveConfig icfg = cfg.improve;
  icfg.seed = derive_seed(cfg.base_seed, {urun, 3, cfg.improve.seed});
  std::optional<ImproverState> learner;

  for (int i = 1; i <= cfg.max_iterations; ++i) {
    const auto ui = static_cast<std::uint64_t>(i);
    IterationRecord row;
    row.iteration = i;
    row.dataset_seed = dataset_seed(cfg.base_seed, run, i);

    Rng data_rng(row.dataset_seed);
    Dataset data = collect(*pi_b, static_cast<std::size_t>(cfg.n_per_iteration), cfg.env, data_rng);
    data.meta.source_seed = row.dataset_seed;
    data.meta.behavior_policy_id = pi_b_id;
    data.meta.collection_time = ui;
    row.vb_hat = behavior_value_estimate(data);

    auto [train, test] =
        split(data, SplitSpec{static_cast<std::size_t>(cfg.n_train), derive_seed(row.dataset_seed, {0})});
    row.n_train = train.size();
    row.n_test = test.size();

    PolicyPtr pi_theta;
    if (train.empty()) {
      pi_theta = learner ? export_policy(*learner, icfg) : std::make_shared<UniformPolicy>();
    } else {
      auto [state, policy] = improve(train, icfg, std::move(learner));
      learner = std::move(state);
      pi_theta = std::move(policy);
    }

    const EvaluationSuite suite(test, pi_theta, cfg.ope);
    for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
      const std::string &name = cfg.estimators[e];
      BootstrapConfig bcfg = cfg.bootstrap;
      bcfg.B = cfg.resamples_for(name);
      bcfg.method = cfg.bound_method_for(name);
      bcfg.seed = derive_seed(cfg.base_seed ^ cfg.bootstrap.seed, {urun, 4, ui, estimator_stream(name, 0)});
      const std::size_t n = test.size();
      ResampleStatistic stat = [&suite, &name, n](std::span<const std::size_t> idx) {
        const std::vector<std::uint32_t> mult = index_counts(idx, n);
        if (name == "wis") return suite.wis(mult);
        if (name == "mb") return suite.mb(mult);
        return suite.wdr(mult);
      };
      EstimatorOutcome out;
      out.estimator = name;
      try {
        out.report = hcope_lower_bound(stat, n, bcfg, name);
      } catch (const EstimatorError &err) {
        out.failure = err.what();
      } catch (const EstimatorUnstable &err) {
        out.failure = err.what();
      }
      if (!out.failure.empty()) {
        out.report.estimator = name;
        out.report.method = bcfg.method;
        out.report.delta = bcfg.delta;
        out.report.B = bcfg.B;
        out.report.n = n;
        out.report.point_estimate = kNaN;
        out.report.lower_bound = min_return(test);
      }
      row.estimates.push_back(std::move(out));
    }
    for (std::size_t c = 0; c < cfg.custom_estimators.size(); ++c) {
      const CustomEstimator &custom = cfg.custom_estimators[c];
      const IterationContext ctx{run, i, row.vb_hat, train, test, *pi_theta};
      EstimatorOutcome out;
      out.estimator = custom.name;
      out.report.estimator = custom.name;
      out.report.method = cfg.bootstrap.method;
      out.report.delta = cfg.bootstrap.delta;
      out.report.n = test.size();
      out.report.lower_bound = custom.lower_bound(ctx);
      out.report.point_estimate = out.report.lower_bound;
      row.estimates.push_back(std::move(out));
    }

    row.tv_distance = tv_distance(suite.behavior_policy(), *pi_theta, test);
    if (cfg.true_value_episodes > 0) {
      Rng oracle_rng(derive_seed(cfg.base_seed, {urun, 5, ui}));
      row.true_value = true_value_oracle(*pi_theta, cfg.env, cfg.true_value_episodes, oracle_rng);
    }

    for (const EstimatorOutcome &out : row.estimates)
      if (out.estimator == cfg.gating_estimator) row.gate_passed = out.report.lower_bound > row.vb_hat;
    const bool first_pass = row.gate_passed && !record.first_pass_iteration;
    if (first_pass) {
      record.first_pass_iteration = i;
      row.stopped = true;
    }
    record.iterations.push_back(std::move(row));
    if (first_pass && cfg.halt_on_pass) break;
  }
  return record;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig &cfg) {
  cfg.validate();
  std::vector<RunRecord> records(static_cast<std::size_t>(cfg.runs));
  unsigned workers = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::thread::hardware_concurrency();
  workers = std::clamp(workers, 1u, static_cast<unsigned>(cfg.runs));

  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](unsigned w) {
    try {
      for (int r = next++; r < cfg.runs; r = next++) records[static_cast<std::size_t>(r)] = run_safe_eval(cfg, r);
    } catch (...) {
      errors[w] = std::current_exception();
      next = cfg.runs;
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (std::thread &t : pool) t.join();
  }
  for (const auto &err : errors)
    if (err) std::rethrow_exception(err);
  return records;
}

SeriesStat mean_se(const std::vector<double> &values) {
  if (values.empty()) throw std::invalid_argument("mean_se: no values");
  SeriesStat s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    s.se = sd / std::sqrt(static_cast<double>(values.size()));
  }
  return s;
}

std::vector<ResultRow> result_rows(const RunRecord &record, const ExperimentConfig &cfg) {
  std::vector<ResultRow> rows;
  if (record.iterations.empty()) return rows;
  const std::string method = to_string(record.method);
  const int k = std::max(cfg.max_iterations, static_cast<int>(record.iterations.size()));
  for (int i = 1; i <= k; ++i) {
    const bool carried = i > static_cast<int>(record.iterations.size());
    const IterationRecord &it = carried ? record.iterations.back() : record.iterations[static_cast<std::size_t>(i - 1)];
    ResultRow base;
    base.run = record.run;
    base.iteration = i;
    base.method = method;
    base.n_train = it.n_train;
    base.n_test = it.n_test;
    base.vb_hat = it.vb_hat;
    base.true_value = it.true_value;
    base.tv_distance = it.tv_distance;
    base.stopped = it.stopped && !carried;
    base.carried_forward = carried;
    if (it.estimates.empty()) {
      ResultRow r = base;
      r.estimator = "none";
      r.bound_method = "none";
      r.delta = cfg.bootstrap.delta;
      r.point_estimate = kNaN;
      r.lower_bound = kNaN;
      rows.push_back(r);
      continue;
    }
    for (const EstimatorOutcome &e : it.estimates) {
      ResultRow r = base;
      r.estimator = e.estimator;
      r.bound_method = to_string(e.report.method);
      r.delta = e.report.delta;
      r.B = e.report.B;
      r.point_estimate = e.report.point_estimate;
      r.lower_bound = e.report.lower_bound;
      rows.push_back(r);
    }
  }
  return rows;
}

namespace {

std::vector<std::string> estimator_names(const RunRecord &r) {
  std::vector<std::string> names;
  if (!r.iterations.empty())
    for (const auto &e : r.iterations.front().estimates) names.push_back(e.estimator);
  return names;
}

} // namespace

AggregateTable aggregate(const std::vector<RunRecord> &records, const ExperimentConfig &cfg) {
  if (records.empty()) throw std::invalid_argument("aggregate: no records");
  std::map<ImproveMethod, std::vector<std::string>> shapes;
  std::vector<ResultRow> rows;
  for (const RunRecord &r : records) {
    if (r.iterations.empty() || static_cast<int>(r.iterations.size()) > cfg.max_iterations)
      throw std::invalid_argument("aggregate: run " + std::to_string(r.run) + " does not match max_iterations");
    const auto names = estimator_names(r);
    for (const IterationRecord &it : r.iterations) {
      std::vector<std::string> here;
      for (const auto &e : it.estimates) here.push_back(e.estimator);
      if (here != names) throw std::invalid_argument("aggregate: estimator set changes within a run");
    }
    const auto [pos, inserted] = shapes.emplace(r.method, names);
    if (!inserted && pos->second != names)
      throw std::invalid_argument("aggregate: runs of " + to_string(r.method) + " use different estimators");
    auto more = result_rows(r, cfg);
    rows.insert(rows.end(), more.begin(), more.end());
  }
  return aggregate_rows(std::move(rows));
}

AggregateTable aggregate_rows(std::vector<ResultRow> rows) {
  if (rows.empty()) throw std::invalid_argument("aggregate: no rows");
  AggregateTable table;
  using Key = std::tuple<std::string, std::string, int>;
  std::map<Key, std::vector<const ResultRow *>> groups;
  for (const ResultRow &r : rows) groups[{r.method, r.estimator, r.iteration}].push_back(&r);

  std::map<std::pair<std::string, std::string>, std::size_t> expected;
  for (const auto &[key, members] : groups) {
    const auto cell = std::make_pair(std::get<0>(key), std::get<1>(key));
    const auto [pos, inserted] = expected.emplace(cell, members.size());
    if (!inserted && pos->second != members.size())
      throw std::invalid_argument("aggregate: runs of " + cell.first + " have different iteration counts");

    SummaryRow s;
    s.method = std::get<0>(key);
    s.estimator = std::get<1>(key);
    s.iteration = std::get<2>(key);
    s.runs = static_cast<int>(members.size());
    std::vector<double> point, lb, vb, tv, truth;
    bool all_truth = true;
    for (const ResultRow *r : members) {
      s.carried_forward += r->carried_forward ? 1 : 0;
      point.push_back(r->point_estimate);
      lb.push_back(r->lower_bound);
      vb.push_back(r->vb_hat);
      tv.push_back(r->tv_distance);
      if (r->true_value)
        truth.push_back(*r->true_value);
      else
        all_truth = false;
    }
    s.point_estimate = mean_se(point);
    s.lower_bound = mean_se(lb);
    s.vb_hat = mean_se(vb);
    s.tv_distance = mean_se(tv);
    if (all_truth) s.true_value = mean_se(truth);
    table.summary.push_back(std::move(s));
  }
  table.rows = std::move(rows);
  return table;
}

namespace {

const char *kResultsHeader = "run,iteration,method,estimator,bound_method,delta,B,n_train,n_test,point_estimate,"
                             "lower_bound,vb_hat,true_value,tv_distance,stopped,carried_forward";

std::string num(double x) { return std::isfinite(x) ? fmt::format("{}", x) : std::string(); }
std::string num(const std::optional<double> &x) { return x ? num(*x) : std::string(); }

double parse_num(const std::string &s) { return s.empty() ? kNaN : std::stod(s); }

std::vector<std::string> split_csv(const std::string &line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

} // namespace

void write_results_csv(std::ostream &out, const std::vector<ResultRow> &rows) {
  out << kResultsHeader << '\n';
  for (const ResultRow &r : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.run, r.iteration, r.method, r.estimator,
                       r.bound_method, num(r.delta), r.B, r.n_train, r.n_test, num(r.point_estimate),
                       num(r.lower_bound), num(r.vb_hat), num(r.true_value), num(r.tv_distance), r.stopped ? 1 : 0,
                       r.carried_forward ? 1 : 0);
  }
}

std::vector<ResultRow> read_results_csv(std::istream &in) {
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader)
    throw std::invalid_argument("read_results_csv: unexpected header");
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 16) throw std::invalid_argument(fmt::format("read_results_csv: line {} has {} fields", lineno, f.size()));
    ResultRow r;
    try {
      r.run = std::stoi(f[0]);
      r.iteration = std::stoi(f[1]);
      r.method = f[2];
      r.estimator = f[3];
      r.bound_method = f[4];
      r.delta = parse_num(f[5]);
      r.B = std::stoi(f[6]);
      r.n_train = std::stoul(f[7]);
      r.n_test = std::stoul(f[8]);
      r.point_estimate = parse_num(f[9]);
      r.lower_bound = parse_num(f[10]);
      r.vb_hat = parse_num(f[11]);
      if (!f[12].empty()) r.true_value = std::stod(f[12]);
      r.tv_distance = parse_num(f[13]);
      r.stopped = f[14] == "1";
      r.carried_forward = f[15] == "1";
    } catch (const std::logic_error &) {
      throw std::invalid_argument(fmt::format("read_results_csv: bad number on line {}", lineno));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_summary_csv(std::ostream &out, const std::vector<SummaryRow> &rows) {
  out << "method,estimator,iteration,runs,carried_forward,point_mean,point_se,lower_bound_mean,lower_bound_se,"
         "vb_hat_mean,vb_hat_se,true_value_mean,true_value_se,tv_mean,tv_se\n";
  for (const SummaryRow &s : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", s.method, s.estimator, s.iteration, s.runs,
                       s.carried_forward, num(s.point_estimate.mean), num(s.point_estimate.se),
                       num(s.lower_bound.mean), num(s.lower_bound.se), num(s.vb_hat.mean), num(s.vb_hat.se),
                       s.true_value ? num(s.true_value->mean) : "", s.true_value ? num(s.true_value->se) : "",
                       num(s.tv_distance.mean), num(s.tv_distance.se));
  }
}

void emit_outputs(const AggregateTable &table, const ExperimentConfig &cfg, const std::string &dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  auto open = [&](const std::string &name) {
    const fs::path path = fs::path(dir) / name;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
  };
  {
    auto out = open("results.csv");
    write_results_csv(out, table.rows);
  }
  {
    auto out = open("summary.csv");
    write_summary_csv(out, table.summary);
  }
  {
    auto out = open("config.json");
    out << to_json(cfg).dump(2) << '\n';
  }
  emit_figures(table, dir);
}

void emit_figures(const AggregateTable &table, const std::string &dir) {
  namespace fs = std::filesystem;
  static const std::vector<std::string> palette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  auto write = [&](const std::string &name, const std::string &text) {
    const fs::path path = fs::path(dir) / name;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
  };
  auto se_or_nan = [](const std::optional<double> &se) { return se ? *se : kNaN; };

  std::map<std::string, std::map<std::string, std::vector<const SummaryRow *>>> by_method;
  for (const SummaryRow &s : table.summary) by_method[s.method][s.estimator].push_back(&s);

  LineChart tv;
  tv.title = "Distance between estimated behavior and target policy";
  tv.x_label = "iteration";
  tv.y_label = "mean total variation distance";
  std::size_t method_index = 0;
  for (const auto &[method, per_estimator] : by_method) {
    LineChart chart;
    chart.title = "Safe evaluation with " + method;
    chart.x_label = "iteration";
    chart.y_label = "return";
    std::size_t color = 0;
    const std::vector<const SummaryRow *> *any = nullptr;
    for (const auto &[estimator, cells] : per_estimator) {
      any = &cells;
      if (estimator == "none") continue;
      PlotSeries s;
      s.label = estimator + " lower bound";
      s.color = palette[color++ % palette.size()];
      for (const SummaryRow *c : cells) {
        s.x.push_back(c->iteration);
        s.y.push_back(c->lower_bound.mean);
        s.band.push_back(se_or_nan(c->lower_bound.se));
      }
      chart.series.push_back(std::move(s));
    }
    if (!any) continue;
    PlotSeries truth{"true value (diagnostic)", "#000000", {}, {}, {}, true};
    PlotSeries distance{method, palette[method_index++ % palette.size()], {}, {}, {}, false};
    double vb_sum = 0.0;
    for (const SummaryRow *c : *any) {
      truth.x.push_back(c->iteration);
      truth.y.push_back(c->true_value ? c->true_value->mean : kNaN);
      truth.band.push_back(c->true_value ? se_or_nan(c->true_value->se) : kNaN);
      distance.x.push_back(c->iteration);
      distance.y.push_back(c->tv_distance.mean);
      distance.band.push_back(se_or_nan(c->tv_distance.se));
      vb_sum += c->vb_hat.mean;
    }
    chart.series.push_back(std::move(truth));
    chart.baselines.push_back({"behavior value estimate", vb_sum / static_cast<double>(any->size()), "#555555"});
    write("figure2_" + method + ".svg", render_svg(chart));
    tv.series.push_back(std::move(distance));
  }
  write("figure3.svg", render_svg(tv));
}

} // namespace safeeval
