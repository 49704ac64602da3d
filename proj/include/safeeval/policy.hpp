#pragma once

#include <array>
#include <functional>
#include <memory>
#include <utility>

#include "safeeval/mountain_car.hpp"

namespace safeeval {

using ActionProbs = std::array<double, kNumActions>;

/// Anything that yields a full distribution over the three actions.
class DiscretePolicy {
public:
  virtual ~DiscretePolicy() = default;
  virtual ActionProbs probs(const State &s) const = 0;
};

using PolicyPtr = std::shared_ptr<const DiscretePolicy>;

class UniformPolicy final : public DiscretePolicy {
public:
  ActionProbs probs(const State &) const override { return {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}; }
};

/// Wraps an arbitrary callable. Mostly for tests and tabular oracles.
class FunctionPolicy final : public DiscretePolicy {
public:
  explicit FunctionPolicy(std::function<ActionProbs(const State &)> fn) : fn_(std::move(fn)) {}
  ActionProbs probs(const State &s) const override { return fn_(s); }

private:
  std::function<ActionProbs(const State &)> fn_;
};

/// Index of the largest entry; ties go to the lowest index.
template <typename Values> std::size_t argmax_lowest(const Values &v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

/// (1 - soften) mass on `best` plus soften/3 spread over every action.
inline ActionProbs softened_one_hot(std::size_t best, double soften) {
  ActionProbs p;
  p.fill(soften / static_cast<double>(kNumActions));
  p[best] += 1.0 - soften;
  return p;
}

} // namespace safeeval
