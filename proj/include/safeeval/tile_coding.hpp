#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "safeeval/policy.hpp"

namespace safeeval {

/// Active feature indices for one state; exactly `num_tilings` entries.
struct FeatureSet {
  static constexpr int kMaxTilings = 32;
  std::array<std::uint32_t, kMaxTilings> index{};
  int count = 0;

  const std::uint32_t *begin() const { return index.data(); }
  const std::uint32_t *end() const { return index.data() + count; }
  bool operator==(const FeatureSet &o) const {
    return count == o.count && std::equal(begin(), end(), o.begin());
  }
};

/// Grid tile coding over the (position, velocity) box. Tiling i is displaced by
/// i/num_tilings of a cell along both dimensions; edge tiles absorb the overhang
/// so the feature count stays num_tilings * tiles_per_dim^2.
class TileCoder {
public:
  explicit TileCoder(int num_tilings = 8, int tiles_per_dim = 8);

  int num_tilings() const { return num_tilings_; }
  int tiles_per_dim() const { return tiles_per_dim_; }
  std::size_t feature_count() const;

  /// States outside the box are clamped to its boundary.
  FeatureSet features(const State &s) const;

  bool operator==(const TileCoder &) const = default;

private:
  int num_tilings_;
  int tiles_per_dim_;
};

/// Linear action values: Q(s, a) = sum of weights[a][i] over active i.
class LinearQ {
public:
  LinearQ() = default;
  explicit LinearQ(std::size_t feature_count, double init = 0.0)
      : features_(feature_count), weights_(kNumActions * feature_count, init) {}

  std::size_t feature_count() const { return features_; }
  std::span<double> row(std::size_t a) { return {weights_.data() + a * features_, features_}; }
  std::span<const double> row(std::size_t a) const { return {weights_.data() + a * features_, features_}; }
  std::vector<double> &data() { return weights_; }
  const std::vector<double> &data() const { return weights_; }

  double value(const FeatureSet &f, std::size_t a) const;
  ActionProbs values(const FeatureSet &f) const;

  bool operator==(const LinearQ &) const = default;

private:
  std::size_t features_ = 0;
  std::vector<double> weights_;
};

ActionProbs q_values(const LinearQ &q, const TileCoder &coder, const State &s);

/// (1 - mix) * softmax(logits / temperature) + mix / 3, max-subtracted.
ActionProbs mixed_softmax(const ActionProbs &logits, double temperature, double uniform_mix);

class SoftmaxPolicy final : public DiscretePolicy {
public:
  SoftmaxPolicy(TileCoder coder, LinearQ weights, double temperature, double uniform_mix);

  ActionProbs probs(const State &s) const override;
  ActionProbs logits(const State &s) const { return weights_.values(coder_.features(s)); }

  const TileCoder &coder() const { return coder_; }
  const LinearQ &weights() const { return weights_; }
  double temperature() const { return temperature_; }
  double uniform_mix() const { return uniform_mix_; }

private:
  TileCoder coder_;
  LinearQ weights_;
  double temperature_;
  double uniform_mix_;
};

/// Softened greedy policy over a linear Q. Ties resolve to the lowest action.
class GreedyQPolicy final : public DiscretePolicy {
public:
  GreedyQPolicy(TileCoder coder, LinearQ q, double soften);

  ActionProbs probs(const State &s) const override;

  const TileCoder &coder() const { return coder_; }
  const LinearQ &q() const { return q_; }
  double soften() const { return soften_; }

private:
  TileCoder coder_;
  LinearQ q_;
  double soften_;
};

ActionProbs policy_probs(const SoftmaxPolicy &policy, const State &s);
GreedyQPolicy greedy_policy(const LinearQ &q, const TileCoder &coder, double soften);

// Snapshot files: one JSON header line, then one JSON array of weights per action.
void write_policy_snapshot(std::ostream &out, const SoftmaxPolicy &policy);
void write_policy_snapshot(std::ostream &out, const GreedyQPolicy &policy);
/// Reads either snapshot kind back. Throws std::runtime_error on malformed input.
PolicyPtr read_policy_snapshot(std::istream &in);

} // namespace safeeval
