// Command-line front end: collect data, train a policy, bound its value, run
// the multi-run experiment and redraw figures from a results file.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "safeeval/harness.hpp"

using namespace safeeval;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitUnstable = 3;

std::vector<std::string> split_list(const std::string &text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void write_snapshot(const std::string &path, const DiscretePolicy &policy) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (const auto *s = dynamic_cast<const SoftmaxPolicy *>(&policy))
    write_policy_snapshot(out, *s);
  else if (const auto *g = dynamic_cast<const GreedyQPolicy *>(&policy))
    write_policy_snapshot(out, *g);
  else
    throw std::runtime_error("policy kind has no snapshot format");
}

PolicyPtr load_snapshot(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open policy file " + path);
  return read_policy_snapshot(in);
}

struct CollectArgs {
  std::size_t n = 300;
  std::uint64_t seed = 1;
  std::string out;
  std::string behavior_out;
  int online_episodes = BehaviorPolicyConfig{}.online_episodes;
};

int run_collect(const CollectArgs &a) {
  BehaviorPolicyConfig bcfg;
  bcfg.online_episodes = a.online_episodes;
  const EnvConfig env;
  Rng train_rng(derive_seed(a.seed, {1}));
  const SoftmaxPolicy pi_b = make_behavior_policy(train_rng, bcfg, env);
  Rng data_rng(derive_seed(a.seed, {2}));
  Dataset data = collect(pi_b, a.n, env, data_rng);
  data.meta.source_seed = a.seed;
  data.meta.behavior_policy_id = fmt::format("softmax-q/seed{}", a.seed);
  data.meta.collection_time = 1;
  save_dataset(a.out, data);
  if (!a.behavior_out.empty()) write_snapshot(a.behavior_out, pi_b);
  std::cout << fmt::format("wrote {} trajectories to {} (mean return {:.3f})\n", data.size(), a.out,
                           behavior_value_estimate(data));
  return 0;
}

struct TrainArgs {
  std::string method = "ddqn";
  std::string data;
  std::string out;
  std::string init;
  std::string policy_out;
  int updates = -1;
  std::uint64_t seed = 1;
};

int run_train(const TrainArgs &a) {
  ImproveConfig cfg = ImproveConfig::defaults_for(parse_improve_method(a.method));
  if (a.updates >= 0) cfg.updates_per_iteration = a.updates;
  cfg.seed = a.seed;
  std::optional<ImproverState> prior;
  if (!a.init.empty()) {
    std::ifstream in(a.init);
    if (!in) throw ConfigError("cannot open checkpoint " + a.init);
    ImproveConfig saved;
    prior = read_checkpoint(in, &saved);
    if (saved.method != cfg.method) throw ConfigError("checkpoint was trained with " + to_string(saved.method));
  }
  const Dataset train = load_dataset(a.data);
  auto [state, policy] = improve(train, cfg, std::move(prior));
  {
    std::ofstream out(a.out);
    if (!out) throw std::runtime_error("cannot write " + a.out);
    write_checkpoint(out, state, cfg);
  }
  if (!a.policy_out.empty()) write_snapshot(a.policy_out, *policy);
  std::cout << fmt::format("{}: {} updates in total, checkpoint {}\n", to_string(cfg.method), state.update_counter,
                           a.out);
  return 0;
}

struct EvaluateArgs {
  std::string policy;
  std::string data;
  std::string estimators = "wis,mb,wdr";
  double delta = 0.05;
  int B = 2000;
  int wdr_B = 224;
  std::string bound;
  std::uint64_t seed = 1;
};

int run_evaluate(const EvaluateArgs &a) {
  const PolicyPtr pi = load_snapshot(a.policy);
  const Dataset test = load_dataset(a.data);
  const ExperimentConfig defaults;
  OpeSettings ope = defaults.ope;
  ope.horizon = test.meta.env.max_macro_steps;
  const EvaluationSuite suite(test, pi, ope);
  const double vb = behavior_value_estimate(test);

  nlohmann::json reports = nlohmann::json::array();
  bool unstable = false;
  for (const std::string &name : split_list(a.estimators)) {
    BootstrapConfig bcfg;
    bcfg.delta = a.delta;
    bcfg.B = name == "wdr" ? a.wdr_B : a.B;
    bcfg.method = a.bound.empty() ? defaults.bound_method_for(name) : parse_bound_method(a.bound);
    bcfg.seed = derive_seed(a.seed, {name == "wis" ? 1u : name == "mb" ? 2u : 3u});
    bcfg.validate();
    const std::size_t n = test.size();
    ResampleStatistic stat;
    if (name == "wis")
      stat = [&](std::span<const std::size_t> idx) { return suite.wis(index_counts(idx, n)); };
    else if (name == "mb")
      stat = [&](std::span<const std::size_t> idx) { return suite.mb(index_counts(idx, n)); };
    else if (name == "wdr")
      stat = [&](std::span<const std::size_t> idx) { return suite.wdr(index_counts(idx, n)); };
    else
      throw ConfigError("unknown estimator '" + name + "'");
    try {
      const LowerBoundReport r = hcope_lower_bound(stat, n, bcfg, name);
      reports.push_back({{"estimator", name},
                         {"point_estimate", r.point_estimate},
                         {"lower_bound", r.lower_bound},
                         {"bound_method", to_string(r.method)},
                         {"delta", r.delta},
                         {"B", r.B},
                         {"n", r.n},
                         {"gamma", ope.gamma},
                         {"passes", r.lower_bound > vb}});
    } catch (const std::runtime_error &e) {
      if (!dynamic_cast<const EstimatorError *>(&e) && !dynamic_cast<const EstimatorUnstable *>(&e)) throw;
      unstable = true;
      reports.push_back({{"estimator", name}, {"error", e.what()}});
    }
  }
  std::cout << nlohmann::json{{"vb_hat", vb}, {"reports", reports}}.dump(2) << '\n';
  return unstable ? kExitUnstable : 0;
}

struct ExperimentArgs {
  std::string preset = "desk";
  std::string config;
  std::string methods = "bc,ddqn,bcq";
  std::string estimators;
  std::string out;
  std::optional<double> delta;
  std::optional<int> B;
  std::optional<int> iterations;
  std::optional<int> runs;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool halt_on_pass = false;
  bool reset_per_iteration = false;
};

int run_experiment_cmd(const ExperimentArgs &a) {
  ExperimentConfig cfg = ExperimentConfig::preset(a.preset);
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw ConfigError("cannot open config " + a.config);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception &e) {
      throw ConfigError(a.config + ": " + e.what());
    }
    cfg = config_from_json(j, cfg);
  }
  if (!a.estimators.empty()) cfg.estimators = split_list(a.estimators);
  if (a.delta) cfg.bootstrap.delta = *a.delta;
  if (a.B) cfg.bootstrap.B = *a.B;
  if (a.iterations) cfg.max_iterations = *a.iterations;
  if (a.runs) cfg.runs = *a.runs;
  if (a.seed) cfg.base_seed = *a.seed;
  if (a.threads) cfg.threads = *a.threads;
  if (a.halt_on_pass) cfg.halt_on_pass = true;
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (!cfg.estimators.empty() &&
      std::find(cfg.estimators.begin(), cfg.estimators.end(), cfg.gating_estimator) == cfg.estimators.end())
    cfg.gating_estimator = cfg.estimators.front();

  std::vector<RunRecord> records;
  ExperimentConfig last = cfg;
  for (const std::string &m : split_list(a.methods)) {
    ExperimentConfig mc = cfg;
    const ImproveMethod method = parse_improve_method(m);
    if (method != cfg.improve.method || a.config.empty()) {
      const std::uint64_t seed = cfg.improve.seed;
      mc.improve = ImproveConfig::defaults_for(method);
      mc.improve.seed = seed;
    }
    if (a.reset_per_iteration) mc.improve.reset_per_iteration = true;
    mc.validate();
    std::cerr << fmt::format("{}: {} runs x {} iterations\n", m, mc.runs, mc.max_iterations);
    auto recs = run_experiment(mc);
    for (const RunRecord &r : recs)
      std::cerr << fmt::format("  run {:>2}: first pass {}\n", r.run,
                               r.first_pass_iteration ? std::to_string(*r.first_pass_iteration) : "none");
    records.insert(records.end(), recs.begin(), recs.end());
    last = mc;
  }
  if (records.empty()) throw ConfigError("no methods given");
  const AggregateTable table = aggregate(records, last);
  emit_outputs(table, last, cfg.output_dir);
  std::cout << "wrote " << cfg.output_dir << '\n';
  return 0;
}

int run_plot(const std::string &in_path, const std::string &out_dir) {
  std::ifstream in(in_path);
  if (!in) throw ConfigError("cannot open " + in_path);
  const AggregateTable table = aggregate_rows(read_results_csv(in));
  emit_figures(table, out_dir);
  std::cout << "wrote figures to " << out_dir << '\n';
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Offline safe policy evaluation on Mountain Car"};
  app.require_subcommand(1);

  CollectArgs collect_args;
  auto *collect_cmd = app.add_subcommand("collect", "Train a behavior policy and log episodes from it");
  collect_cmd->add_option("-n,--collect", collect_args.n, "Number of episodes")->check(CLI::PositiveNumber);
  collect_cmd->add_option("--seed", collect_args.seed, "Seed for the behavior policy and the episodes");
  collect_cmd->add_option("--out", collect_args.out, "Dataset file (JSON lines)")->required();
  collect_cmd->add_option("--behavior-out", collect_args.behavior_out, "Also write the behavior policy snapshot");
  collect_cmd->add_option("--online-episodes", collect_args.online_episodes, "Online training episodes")
      ->check(CLI::NonNegativeNumber);

  TrainArgs train_args;
  auto *train_cmd = app.add_subcommand("train", "Run one improvement step on a dataset");
  train_cmd->add_option("--method", train_args.method, "bc, ddqn or bcq");
  train_cmd->add_option("--data", train_args.data, "Training dataset")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_args.out, "Checkpoint to write")->required();
  train_cmd->add_option("--init", train_args.init, "Checkpoint to continue from")->check(CLI::ExistingFile);
  train_cmd->add_option("--policy-out", train_args.policy_out, "Exported policy snapshot");
  train_cmd->add_option("--updates", train_args.updates, "Gradient updates (method default when omitted)");
  train_cmd->add_option("--seed", train_args.seed, "Minibatch seed");

  EvaluateArgs eval_args;
  auto *eval_cmd = app.add_subcommand("evaluate", "Lower-bound a policy's value on a test dataset");
  eval_cmd->add_option("--policy", eval_args.policy, "Policy snapshot")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_args.data, "Test dataset")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--estimators", eval_args.estimators, "Comma list from wis, mb, wdr");
  eval_cmd->add_option("--delta", eval_args.delta, "Confidence level parameter")->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--B", eval_args.B, "Bootstrap resamples")->check(CLI::Range(2, 1 << 24));
  eval_cmd->add_option("--wdr-B", eval_args.wdr_B, "Bootstrap resamples for WDR")->check(CLI::Range(2, 1 << 24));
  eval_cmd->add_option("--bound", eval_args.bound, "percentile or bca (per-estimator default when omitted)");
  eval_cmd->add_option("--seed", eval_args.seed, "Bootstrap seed");

  ExperimentArgs exp_args;
  auto *exp_cmd = app.add_subcommand("experiment", "Run the evaluation loop over many seeds and write results");
  exp_cmd->add_option("--preset", exp_args.preset, "paper or desk");
  exp_cmd->add_option("--config", exp_args.config, "JSON configuration")->check(CLI::ExistingFile);
  exp_cmd->add_option("--method", exp_args.methods, "Comma list from bc, ddqn, bcq");
  exp_cmd->add_option("--estimators", exp_args.estimators, "Comma list from wis, mb, wdr");
  exp_cmd->add_option("--delta", exp_args.delta, "Confidence level parameter");
  exp_cmd->add_option("--B", exp_args.B, "Bootstrap resamples");
  exp_cmd->add_option("--iterations", exp_args.iterations, "Maximum iterations k");
  exp_cmd->add_option("--runs", exp_args.runs, "Independent runs");
  exp_cmd->add_option("--seed", exp_args.seed, "Base seed");
  exp_cmd->add_option("--threads", exp_args.threads, "Worker threads (0 = all cores)");
  exp_cmd->add_option("--out", exp_args.out, "Output directory");
  exp_cmd->add_flag("--halt-on-pass", exp_args.halt_on_pass, "Stop each run at its first passing iteration");
  exp_cmd->add_flag("--reset-per-iteration", exp_args.reset_per_iteration, "Retrain from scratch every iteration");

  std::string plot_in, plot_out = ".";
  auto *plot_cmd = app.add_subcommand("plot", "Redraw figures from a results.csv");
  plot_cmd->add_option("--in", plot_in, "results.csv")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--out", plot_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*collect_cmd) return run_collect(collect_args);
    if (*train_cmd) return run_train(train_args);
    if (*eval_cmd) return run_evaluate(eval_args);
    if (*exp_cmd) return run_experiment_cmd(exp_args);
    if (*plot_cmd) return run_plot(plot_in, plot_out);
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const EstimatorUnstable &e) {
    std::cerr << e.what() << '\n';
    return kExitUnstable;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
