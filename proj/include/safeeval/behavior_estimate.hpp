#pragma once

#include <cstdint>
#include <vector>

#include "safeeval/policy.hpp"

namespace safeeval {

struct Dataset;

/// Uniform grid over the state box, bins_per_dim cells per dimension.
class StateDiscretizer {
public:
  explicit StateDiscretizer(int bins_per_dim = 32);

  int bins_per_dim() const { return bins_; }
  std::size_t cell_count() const { return static_cast<std::size_t>(bins_) * static_cast<std::size_t>(bins_); }
  /// Out-of-box states are clamped first.
  std::uint32_t cell(const State &s) const;
  State center(std::uint32_t cell) const;

  bool operator==(const StateDiscretizer &) const = default;

private:
  int bins_;
};

/// Count-based conditional action distribution with additive smoothing:
/// p(a | cell) = (count + alpha) / (cell_total + 3 alpha).
class EstimatedBehaviorPolicy final : public DiscretePolicy {
public:
  EstimatedBehaviorPolicy(StateDiscretizer disc, double alpha);

  void add(std::uint32_t cell, Action a, std::uint64_t multiplicity = 1);
  void add(const State &s, Action a, std::uint64_t multiplicity = 1) { add(disc_.cell(s), a, multiplicity); }

  ActionProbs cell_probs(std::uint32_t cell) const;
  ActionProbs probs(const State &s) const override { return cell_probs(disc_.cell(s)); }

  std::uint64_t count(std::uint32_t cell, Action a) const { return counts_[cell * kNumActions + a.index]; }
  const StateDiscretizer &discretizer() const { return disc_; }
  double alpha() const { return alpha_; }

private:
  StateDiscretizer disc_;
  double alpha_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> totals_;
};

EstimatedBehaviorPolicy estimate_behavior_policy(const Dataset &data, const StateDiscretizer &disc,
                                                 double alpha = 1.0);

} // namespace safeeval
