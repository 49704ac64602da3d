#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "safeeval/datasource.hpp"

namespace safeeval {

enum class BoundMethod { Percentile, BCa };

std::string to_string(BoundMethod m);
BoundMethod parse_bound_method(const std::string &name);

struct BootstrapConfig {
  int B = 2000;
  double delta = 0.05;
  BoundMethod method = BoundMethod::Percentile;
  std::uint64_t seed = 0;
  /// Above this fraction of failed resamples the estimator is declared unstable.
  double max_failure_fraction = 0.1;

  void validate() const;
};

struct BootstrapSummary {
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
  double max = 0.0;
};

struct LowerBoundReport {
  std::string estimator;
  BoundMethod method = BoundMethod::Percentile;
  double delta = 0.05;
  int B = 0;
  std::size_t n = 0;
  double point_estimate = 0.0;
  double lower_bound = 0.0;
  BootstrapSummary stats;
  int failed_resamples = 0;
  /// BCa could not be applied (z0 infinite or a degenerate correction).
  bool bca_fell_back = false;
};

class EstimatorUnstable : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A statistic of a trajectory sample given as indices into a base dataset.
/// Indices may repeat; their order is the draw order.
using ResampleStatistic = std::function<double(std::span<const std::size_t>)>;
using DatasetStatistic = std::function<double(const Dataset &)>;

/// n draws with replacement from [0, n).
std::vector<std::size_t> resample_indices(std::size_t n, Rng &rng);
/// Same-size trajectory-level resample with replacement.
Dataset resample(const Dataset &data, Rng &rng);
/// Counts per base index; the multiplicity form used by the estimators.
std::vector<std::uint32_t> index_counts(std::span<const std::size_t> indices, std::size_t n);

/// Empirical delta-quantile with linear interpolation between order
/// statistics at 1-indexed rank h = (B - 1) * delta + 1.
double percentile_lower_bound(std::span<const double> stats, double delta);

/// Bias-corrected and accelerated lower bound. Falls back to the percentile
/// bound (and sets *fell_back) when every statistic lies on one side of
/// theta_hat or the corrected level is undefined.
double bca_lower_bound(std::span<const double> stats, double theta_hat, std::span<const double> jackknife,
                       double delta, bool *fell_back = nullptr);

BootstrapSummary summarize(std::span<const double> stats);

/// theta_hat from the full sample, B resamples with per-resample derived
/// streams, and the configured lower bound. Resamples whose statistic throws
/// EstimatorError are skipped; too many of them raise EstimatorUnstable.
LowerBoundReport hcope_lower_bound(const ResampleStatistic &estimator, std::size_t n, const BootstrapConfig &cfg,
                                   std::string name = "custom");
LowerBoundReport hcope_lower_bound(const DatasetStatistic &estimator, const Dataset &test, const BootstrapConfig &cfg,
                                   std::string name = "custom");

} // namespace safeeval
