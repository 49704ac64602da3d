#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "safeeval/behavior_estimate.hpp"
#include "safeeval/datasource.hpp"

namespace safeeval {

/// Raised when an estimator cannot produce a value (e.g. no overlap).
class EstimatorError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Per-trajectory multiplicities; empty means every trajectory counts once.
/// Bootstrap resamples are expressed this way so the base data is never copied.
using Multiplicity = std::span<const std::uint32_t>;

/// Probability the policy assigns to each logged action, per trajectory and step.
using StepProbTable = std::vector<std::vector<double>>;
StepProbTable action_probabilities(const DiscretePolicy &policy, const Dataset &data);

EstimatedBehaviorPolicy estimate_behavior_policy(const Dataset &data, const StateDiscretizer &disc, double alpha,
                                                 Multiplicity mult);

/// Cumulative ratios rho[i][t] and per-decision normalizers. A trajectory that
/// ended before step t contributes its final ratio to the normalizer at t.
struct ImportanceWeights {
  std::vector<std::vector<double>> rho;
  std::vector<double> multiplicity;
  /// denominators[t] = sum_j m_j * rho_{min(t, L_j - 1)}^j for t < max length.
  std::vector<double> denominators;
  double total_multiplicity = 0.0;

  std::size_t trajectories() const { return rho.size(); }
  double final_rho(std::size_t i) const { return rho[i].back(); }
  /// Normalized weight of one copy of trajectory i at step t. t = -1 gives 1/N.
  double weight(std::size_t i, long t) const;
};

ImportanceWeights compute_weights(const StepProbTable &target, const StepProbTable &behavior,
                                  Multiplicity mult = {});
ImportanceWeights compute_weights(const DiscretePolicy &pi_theta, const DiscretePolicy &pib_hat,
                                  const Dataset &data);

/// Self-normalized trajectory-wise importance sampling.
double wis_estimate(const ImportanceWeights &weights, const Dataset &data, double gamma);
/// Per-decision weighted importance sampling.
double pdwis_estimate(const ImportanceWeights &weights, const Dataset &data, double gamma);

/// Tabular model over discretizer cells plus one absorbing terminal node
/// (index == cell_count). Successors are stored CSR-style per (cell, action).
struct EstimatedModel {
  StateDiscretizer disc;
  double gamma = 1.0;
  int horizon = 250;
  std::size_t cells = 0;
  std::vector<std::uint32_t> offsets;       // size cells * 3 + 1
  std::vector<std::uint32_t> successor;     // next cell, or `cells` for terminal
  std::vector<double> probability;          // P(successor | cell, action)
  std::vector<double> reward;               // mean reward per (cell, action)
  std::vector<std::uint8_t> visited;        // 1 when (cell, action) was observed
  std::vector<std::uint32_t> initial_cells; // support of d0
  std::vector<double> initial_probability;

  std::size_t terminal() const { return cells; }
  std::size_t sa(std::uint32_t cell, std::size_t a) const { return cell * kNumActions + a; }
  /// Dense P(. | cell, action) over cells + terminal. Unvisited pairs self-loop.
  std::vector<double> transition_row(std::uint32_t cell, std::size_t a) const;
};

/// Reward assigned to unvisited (cell, action) pairs, which also self-loop.
inline constexpr double kUnvisitedReward = -1.0;

/// Precomputes the discretized transition records of a base dataset so models
/// for many multiplicity vectors can be built without re-discretizing.
class ModelBuilder {
public:
  ModelBuilder(const Dataset &base, const StateDiscretizer &disc, double gamma, int horizon);

  EstimatedModel build(Multiplicity mult = {}) const;

private:
  struct Record {
    std::uint32_t sa;
    std::uint32_t key; // index into the successor slot list, or npos for truncated tails
    double reward;
  };
  StateDiscretizer disc_;
  double gamma_;
  int horizon_;
  std::vector<std::vector<Record>> records_; // per trajectory
  std::vector<std::uint32_t> initial_cell_;  // per trajectory
  std::vector<std::uint32_t> offsets_;
  std::vector<std::uint32_t> successor_;
};

EstimatedModel build_model(const Dataset &data, const StateDiscretizer &disc, double gamma, int horizon);

/// Finite-horizon action values in a model: q[t](cell, a) and v[t](cell) for
/// t in [0, horizon]; v[horizon] = 0. Only cells the model can reach are
/// solved; other cells are pure unvisited self-loops with a closed form.
class ModelValueFunctions {
public:
  ModelValueFunctions(const EstimatedModel &model, const DiscretePolicy &pi_theta);

  /// q = v = 0 everywhere; turns WDR into PDWIS.
  static ModelValueFunctions zero(const StateDiscretizer &disc, int horizon);

  double q(int t, std::uint32_t cell, std::size_t a) const;
  double v(int t, std::uint32_t cell) const;
  double q(int t, const State &s, Action a) const { return q(t, disc_.cell(s), a.index); }
  double v(int t, const State &s) const { return v(t, disc_.cell(s)); }
  /// Expected return from the model's start distribution.
  double start_value() const { return start_value_; }
  int horizon() const { return horizon_; }

private:
  double unvisited_value(int t) const;

  StateDiscretizer disc_;
  int horizon_;
  double gamma_;
  std::vector<std::int32_t> active_index_; // cell -> row, -1 when inactive
  std::size_t active_count_ = 0;
  std::vector<double> q_; // [t][row][a]
  std::vector<double> v_; // [t][row]
  double start_value_ = 0.0;
  bool zero_ = false;

  ModelValueFunctions(const StateDiscretizer &disc, int horizon) : disc_(disc), horizon_(horizon), gamma_(1.0) {}
};

ModelValueFunctions model_value_functions(const EstimatedModel &model, const DiscretePolicy &pi_theta);

/// Monte Carlo mean return of `rollouts` episodes simulated in the model while
/// following pi_theta at cell centers.
double mb_estimate(const EstimatedModel &model, const DiscretePolicy &pi_theta, int rollouts, Rng &rng);
/// Exact expectation of mb_estimate (the infinite-rollout limit).
double mb_expected_value(const EstimatedModel &model, const DiscretePolicy &pi_theta);

/// PDWIS minus the model control variate, with w_{-1} = 1/N.
double wdr_estimate(const ImportanceWeights &weights, const Dataset &data, const ModelValueFunctions &vf,
                    double gamma);

struct TvDistance {
  double mean = 0.0; // averaged over every visited step
  double sum = 0.0;
};

TvDistance tv_distance_detail(const DiscretePolicy &pib_hat, const DiscretePolicy &pi_theta, const Dataset &test);
double tv_distance(const DiscretePolicy &pib_hat, const DiscretePolicy &pi_theta, const Dataset &test);

struct OpeSettings {
  double gamma = 1.0;
  /// Additive smoothing of the estimated behavior policy.
  double alpha = 1.0;
  int behavior_bins = 32;
  int model_bins = 16;
  /// Model horizon; the environment's macro-step cap.
  int horizon = 250;
  /// 0 evaluates the model exactly by dynamic programming.
  int mb_rollouts = 0;
  /// Refit the WDR model inside every resample; false keeps one model fit on the full test set.
  bool wdr_refit_model = true;
};

/// The three shipped estimators over one test set and one target policy.
/// Target-policy probabilities and discretized records are computed once;
/// every call re-fits the behavior policy (and, for MB, the model) on the
/// sample described by `mult`.
class EvaluationSuite {
public:
  EvaluationSuite(const Dataset &test, PolicyPtr pi_theta, const OpeSettings &settings);

  double wis(Multiplicity mult = {}) const;
  double pdwis(Multiplicity mult = {}) const;
  double mb(Multiplicity mult = {}) const;
  double wdr(Multiplicity mult = {}) const;

  /// pi_hat_b fit on the whole test set.
  EstimatedBehaviorPolicy behavior_policy() const;

private:
  ImportanceWeights weights(Multiplicity mult) const;

  const Dataset &test_;
  PolicyPtr pi_;
  OpeSettings settings_;
  StateDiscretizer behavior_disc_;
  StepProbTable target_;
  std::vector<std::vector<std::uint32_t>> cells_;
  ModelBuilder model_builder_;
  std::optional<ModelValueFunctions> wdr_vf_;
};

} // namespace safeeval
