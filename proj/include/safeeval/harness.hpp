#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "safeeval/bootstrap.hpp"
#include "safeeval/datasource.hpp"
#include "safeeval/improve.hpp"
#include "safeeval/ope.hpp"

namespace safeeval {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// What an injected estimator sees at one iteration of the loop.
struct IterationContext {
  int run = 0;
  int iteration = 0;
  double vb_hat = 0.0;
  const Dataset &train;
  const Dataset &test;
  const DiscretePolicy &policy;
};

/// A lower-bound function plugged into the loop in place of the shipped
/// estimators; used to drive the control flow directly.
struct CustomEstimator {
  std::string name;
  std::function<double(const IterationContext &)> lower_bound;
};

struct ExperimentConfig {
  ImproveConfig improve;
  /// Any of "wis", "mb", "wdr".
  std::vector<std::string> estimators{"wis", "mb", "wdr"};
  std::vector<CustomEstimator> custom_estimators;
  BootstrapConfig bootstrap;
  /// Resample count used for WDR in place of bootstrap.B.
  int wdr_B = 224;
  /// Bound method per estimator name; bootstrap.method applies otherwise.
  std::map<std::string, BoundMethod> bound_methods{{"wis", BoundMethod::BCa}};
  std::string gating_estimator = "mb";
  /// Stop at the first passing iteration instead of running to max_iterations.
  bool halt_on_pass = false;
  int n_per_iteration = 300;
  int n_train = 20;
  int max_iterations = 10;
  int runs = 40;
  std::uint64_t base_seed = 1;
  EnvConfig env;
  BehaviorPolicyConfig behavior;
  OpeSettings ope;
  /// Episodes for the diagnostic true value; 0 turns the oracle off.
  int true_value_episodes = 1000;
  /// 0 uses the hardware concurrency.
  int threads = 0;
  std::string output_dir = "results";

  static ExperimentConfig paper();
  static ExperimentConfig desk();
  static ExperimentConfig preset(const std::string &name);

  BoundMethod bound_method_for(const std::string &estimator) const;
  int resamples_for(const std::string &estimator) const;
  /// Throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig &cfg);
/// Fields missing from `j` keep their values in `base`.
ExperimentConfig config_from_json(const nlohmann::json &j, ExperimentConfig base = {});

struct EstimatorOutcome {
  std::string estimator;
  LowerBoundReport report;
  /// Empty when the bound came from the estimator; otherwise why it did not.
  std::string failure;
};

struct IterationRecord {
  int iteration = 0;
  std::uint64_t dataset_seed = 0;
  double vb_hat = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<EstimatorOutcome> estimates;
  std::optional<double> true_value;
  double tv_distance = 0.0;
  bool gate_passed = false;
  /// The iteration at which the loop stops (or would stop, when running to k).
  bool stopped = false;
};

struct RunRecord {
  int run = 0;
  ImproveMethod method = ImproveMethod::DDQN;
  std::vector<IterationRecord> iterations;
  std::optional<int> first_pass_iteration;
};

std::uint64_t dataset_seed(std::uint64_t base_seed, int run, int iteration);

/// One pass of the offline safe-evaluation loop for run index `run`.
RunRecord run_safe_eval(const ExperimentConfig &cfg, int run);
/// All runs, in parallel over runs; the result is ordered by run index.
std::vector<RunRecord> run_experiment(const ExperimentConfig &cfg);

/// Monte Carlo mean undiscounted return over `episodes` real episodes.
double true_value_oracle(const DiscretePolicy &policy, const EnvConfig &env, int episodes, Rng &rng);

/// One results.csv line.
struct ResultRow {
  int run = 0;
  int iteration = 0;
  std::string method;
  std::string estimator;
  std::string bound_method;
  double delta = 0.0;
  int B = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double point_estimate = 0.0;
  double lower_bound = 0.0;
  double vb_hat = 0.0;
  std::optional<double> true_value;
  double tv_distance = 0.0;
  bool stopped = false;
  bool carried_forward = false;
};

struct SeriesStat {
  double mean = 0.0;
  /// Absent with a single run.
  std::optional<double> se;
};

struct SummaryRow {
  std::string method;
  std::string estimator;
  int iteration = 0;
  int runs = 0;
  int carried_forward = 0;
  SeriesStat point_estimate;
  SeriesStat lower_bound;
  SeriesStat vb_hat;
  std::optional<SeriesStat> true_value;
  SeriesStat tv_distance;
};

struct AggregateTable {
  /// Per-run rows padded to max_iterations by carrying the last row forward.
  std::vector<ResultRow> rows;
  std::vector<SummaryRow> summary;
};

SeriesStat mean_se(const std::vector<double> &values);

std::vector<ResultRow> result_rows(const RunRecord &record, const ExperimentConfig &cfg);
AggregateTable aggregate(const std::vector<RunRecord> &records, const ExperimentConfig &cfg);
/// Summary from already padded rows, as read back from results.csv.
AggregateTable aggregate_rows(std::vector<ResultRow> rows);

void write_results_csv(std::ostream &out, const std::vector<ResultRow> &rows);
std::vector<ResultRow> read_results_csv(std::istream &in);
void write_summary_csv(std::ostream &out, const std::vector<SummaryRow> &rows);

/// Writes results.csv, summary.csv, figure2_<method>.svg, figure3.svg and
/// config.json under `dir`.
void emit_outputs(const AggregateTable &table, const ExperimentConfig &cfg, const std::string &dir);
/// Only the figures.
void emit_figures(const AggregateTable &table, const std::string &dir);

} // namespace safeeval
