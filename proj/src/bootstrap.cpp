#include "safeeval/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "safeeval/ope.hpp"

namespace safeeval {

std::string to_string(BoundMethod m) { return m == BoundMethod::BCa ? "bca" : "percentile"; }

BoundMethod parse_bound_method(const std::string &name) {
  if (name == "bca") return BoundMethod::BCa;
  if (name == "percentile") return BoundMethod::Percentile;
  throw std::invalid_argument("unknown bound method '" + name + "'");
}

void BootstrapConfig::validate() const {
  if (B < 2) throw std::invalid_argument("bootstrap B must be >= 2");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0, 1)");
  if (!(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0))
    throw std::invalid_argument("max_failure_fraction must be in [0, 1]");
}

std::vector<std::size_t> resample_indices(std::size_t n, Rng &rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t &i : idx) i = rng.below(n);
  return idx;
}

Dataset resample(const Dataset &data, Rng &rng) {
  if (data.empty()) throw std::invalid_argument("resample: empty dataset");
  Dataset out;
  out.meta = data.meta;
  out.trajectories.reserve(data.size());
  for (std::size_t i : resample_indices(data.size(), rng)) out.trajectories.push_back(data.trajectories[i]);
  return out;
}

std::vector<std::uint32_t> index_counts(std::span<const std::size_t> indices, std::size_t n) {
  std::vector<std::uint32_t> counts(n, 0);
  for (std::size_t i : indices) ++counts[i];
  return counts;
}

namespace {

double sorted_quantile(std::span<const double> sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p; // 0-indexed rank
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

std::vector<double> sorted_copy(std::span<const double> stats) {
  if (stats.empty()) throw std::invalid_argument("bootstrap statistics are empty");
  for (double x : stats)
    if (!std::isfinite(x)) throw std::invalid_argument("bootstrap statistic is not finite");
  std::vector<double> s(stats.begin(), stats.end());
  std::sort(s.begin(), s.end());
  return s;
}

} // namespace

double percentile_lower_bound(std::span<const double> stats, double delta) {
  const std::vector<double> s = sorted_copy(stats);
  return sorted_quantile(s, delta);
}

double bca_lower_bound(std::span<const double> stats, double theta_hat, std::span<const double> jackknife,
                       double delta, bool *fell_back) {
  const std::vector<double> s = sorted_copy(stats);
  if (fell_back) *fell_back = false;
  const auto below = static_cast<double>(std::lower_bound(s.begin(), s.end(), theta_hat) - s.begin());
  const double frac = below / static_cast<double>(s.size());
  auto fallback = [&] {
    if (fell_back) *fell_back = true;
    return sorted_quantile(s, delta);
  };
  if (frac <= 0.0 || frac >= 1.0) return fallback();

  const boost::math::normal normal;
  const double z0 = boost::math::quantile(normal, frac);

  double accel = 0.0;
  if (jackknife.size() >= 2) {
    const double mean = std::accumulate(jackknife.begin(), jackknife.end(), 0.0) / static_cast<double>(jackknife.size());
    double num = 0.0, den = 0.0;
    for (double x : jackknife) {
      const double d = mean - x;
      num += d * d * d;
      den += d * d;
    }
    if (den > 0.0) accel = num / (6.0 * std::pow(den, 1.5));
  }
  const double z = z0 + boost::math::quantile(normal, delta);
  const double denom = 1.0 - accel * z;
  if (!(denom > 0.0)) return fallback();
  const double level = boost::math::cdf(normal, z0 + z / denom);
  if (!std::isfinite(level)) return fallback();
  return sorted_quantile(s, level);
}

BootstrapSummary summarize(std::span<const double> stats) {
  const std::vector<double> s = sorted_copy(stats);
  BootstrapSummary out;
  out.mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  double ss = 0.0;
  for (double x : s) ss += (x - out.mean) * (x - out.mean);
  out.sd = s.size() > 1 ? std::sqrt(ss / static_cast<double>(s.size() - 1)) : 0.0;
  out.min = s.front();
  out.max = s.back();
  out.q05 = sorted_quantile(s, 0.05);
  out.q50 = sorted_quantile(s, 0.5);
  out.q95 = sorted_quantile(s, 0.95);
  return out;
}

LowerBoundReport hcope_lower_bound(const ResampleStatistic &estimator, std::size_t n, const BootstrapConfig &cfg,
                                   std::string name) {
  cfg.validate();
  if (n == 0) throw std::invalid_argument("hcope_lower_bound: empty test set");
  LowerBoundReport report;
  report.estimator = std::move(name);
  report.method = cfg.method;
  report.delta = cfg.delta;
  report.B = cfg.B;
  report.n = n;

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  report.point_estimate = estimator(all);

  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(cfg.B));
  for (int b = 0; b < cfg.B; ++b) {
    Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(b)}));
    const std::vector<std::size_t> idx = resample_indices(n, rng);
    try {
      const double x = estimator(idx);
      if (!std::isfinite(x)) throw EstimatorError("non-finite estimate");
      stats.push_back(x);
    } catch (const EstimatorError &) {
      ++report.failed_resamples;
    }
  }
  if (stats.empty() || report.failed_resamples > cfg.max_failure_fraction * cfg.B)
    throw EstimatorUnstable("estimator unstable: " + std::to_string(report.failed_resamples) + " of " +
                            std::to_string(cfg.B) + " resamples failed");
  report.stats = summarize(stats);

  if (cfg.method == BoundMethod::Percentile) {
    report.lower_bound = percentile_lower_bound(stats, cfg.delta);
    return report;
  }
  std::vector<double> jack;
  jack.reserve(n);
  std::vector<std::size_t> loo(n > 0 ? n - 1 : 0);
  for (std::size_t i = 0; i < n && n > 1; ++i) {
    std::copy(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(i), loo.begin());
    std::copy(all.begin() + static_cast<std::ptrdiff_t>(i) + 1, all.end(), loo.begin() + static_cast<std::ptrdiff_t>(i));
    try {
      const double x = estimator(loo);
      if (std::isfinite(x)) jack.push_back(x);
    } catch (const EstimatorError &) {
    }
  }
  report.lower_bound = bca_lower_bound(stats, report.point_estimate, jack, cfg.delta, &report.bca_fell_back);
  return report;
}

LowerBoundReport hcope_lower_bound(const DatasetStatistic &estimator, const Dataset &test, const BootstrapConfig &cfg,
                                   std::string name) {
  auto on_indices = [&](std::span<const std::size_t> idx) {
    Dataset sample;
    sample.meta = test.meta;
    sample.trajectories.reserve(idx.size());
    for (std::size_t i : idx) sample.trajectories.push_back(test.trajectories[i]);
    return estimator(sample);
  };
  return hcope_lower_bound(ResampleStatistic(on_indices), test.size(), cfg, std::move(name));
}

} // namespace safeeval
