#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "safeeval/mountain_car.hpp"
#include "safeeval/tile_coding.hpp"

namespace safeeval {

struct DatasetMeta {
  std::uint64_t source_seed = 0;
  std::string behavior_policy_id;
  /// Logical collection clock: increases with every request to the source.
  std::uint64_t collection_time = 0;
  EnvConfig env;
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  DatasetMeta meta;

  std::size_t size() const { return trajectories.size(); }
  bool empty() const { return trajectories.empty(); }
};

struct SplitSpec {
  std::size_t n_train = 20;
  std::uint64_t shuffle_seed = 0;
};

struct BehaviorPolicyConfig {
  int online_episodes = 150;
  double uniform_mix = 0.3;
  /// Softmax temperature of the exported head; small values approach greedy.
  double temperature = 0.05;
  double learning_rate = 0.1; // divided by the number of tilings
  double epsilon = 0.1;
  int num_tilings = 8;
  int tiles_per_dim = 8;
};

/// Trains a Q-learner online for `cfg.online_episodes` episodes and returns its
/// near-greedy softmax head mixed with uniform at `cfg.uniform_mix`.
SoftmaxPolicy make_behavior_policy(Rng &rng, const BehaviorPolicyConfig &cfg = {},
                                   const EnvConfig &env = {});

/// Collects `n` episodes. Behavior probabilities are never recorded.
Dataset collect(const DiscretePolicy &policy, std::size_t n, const EnvConfig &env, Rng &rng);

/// Shuffled partition into (train, test); throws if n_train exceeds the size.
std::pair<Dataset, Dataset> split(const Dataset &data, const SplitSpec &spec);

/// Per-trajectory mean of undiscounted returns.
double behavior_value_estimate(const Dataset &data);

// Line-delimited dataset files: one header object, then one trajectory per line.
void write_dataset(std::ostream &out, const Dataset &data);
Dataset read_dataset(std::istream &in);
void save_dataset(const std::string &path, const Dataset &data);
Dataset load_dataset(const std::string &path);

} // namespace safeeval
