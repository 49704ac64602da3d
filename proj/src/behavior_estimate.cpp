#include "safeeval/behavior_estimate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "safeeval/datasource.hpp"

namespace safeeval {

StateDiscretizer::StateDiscretizer(int bins_per_dim) : bins_(bins_per_dim) {
  if (bins_per_dim < 1) throw std::invalid_argument("bins_per_dim must be positive");
}

std::uint32_t StateDiscretizer::cell(const State &s) const {
  const double p = std::clamp(s.position, kMinPosition, kMaxPosition);
  const double v = std::clamp(s.velocity, -kMaxSpeed, kMaxSpeed);
  const int last = bins_ - 1;
  const int ix = std::min(static_cast<int>((p - kMinPosition) / (kMaxPosition - kMinPosition) * bins_), last);
  const int iy = std::min(static_cast<int>((v + kMaxSpeed) / (2.0 * kMaxSpeed) * bins_), last);
  return static_cast<std::uint32_t>(ix * bins_ + iy);
}

State StateDiscretizer::center(std::uint32_t cell) const {
  const int ix = static_cast<int>(cell) / bins_;
  const int iy = static_cast<int>(cell) % bins_;
  const double wp = (kMaxPosition - kMinPosition) / bins_;
  const double wv = 2.0 * kMaxSpeed / bins_;
  return {kMinPosition + (ix + 0.5) * wp, -kMaxSpeed + (iy + 0.5) * wv};
}

EstimatedBehaviorPolicy::EstimatedBehaviorPolicy(StateDiscretizer disc, double alpha)
    : disc_(disc), alpha_(alpha), counts_(disc.cell_count() * kNumActions, 0), totals_(disc.cell_count(), 0) {
  if (!(alpha > 0.0)) throw std::invalid_argument("smoothing alpha must be positive");
}

void EstimatedBehaviorPolicy::add(std::uint32_t cell, Action a, std::uint64_t multiplicity) {
  counts_[cell * kNumActions + a.index] += multiplicity;
  totals_[cell] += multiplicity;
}

ActionProbs EstimatedBehaviorPolicy::cell_probs(std::uint32_t cell) const {
  const double denom = static_cast<double>(totals_[cell]) + kNumActions * alpha_;
  ActionProbs p{};
  for (std::size_t a = 0; a < kNumActions; ++a)
    p[a] = (static_cast<double>(counts_[cell * kNumActions + a]) + alpha_) / denom;
  return p;
}

EstimatedBehaviorPolicy estimate_behavior_policy(const Dataset &data, const StateDiscretizer &disc, double alpha) {
  EstimatedBehaviorPolicy pib(disc, alpha);
  for (const Trajectory &t : data.trajectories)
    for (const Step &s : t.steps) pib.add(s.state, s.action);
  return pib;
}

} // namespace safeeval
