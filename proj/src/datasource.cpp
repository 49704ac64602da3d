#include "safeeval/datasource.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace safeeval {

SoftmaxPolicy make_behavior_policy(Rng &rng, const BehaviorPolicyConfig &cfg, const EnvConfig &env) {
  const TileCoder coder(cfg.num_tilings, cfg.tiles_per_dim);
  LinearQ q(coder.feature_count());
  const double step_size = cfg.learning_rate / coder.num_tilings();

  for (int episode = 0; episode < cfg.online_episodes; ++episode) {
    State s = env_reset(rng, env);
    while (s.position >= env.goal_position) s = env_reset(rng, env);
    FeatureSet f = coder.features(s);
    for (int t = 0; t < env.max_macro_steps; ++t) {
      std::size_t a = argmax_lowest(q.values(f));
      if (rng.uniform() < cfg.epsilon) a = rng.below(kNumActions);
      const StepResult r = env_step(s, Action{a}, env);
      double target = r.reward;
      FeatureSet next_f;
      if (!r.done) {
        next_f = coder.features(r.next);
        const ActionProbs next_q = q.values(next_f);
        target += *std::max_element(next_q.begin(), next_q.end());
      }
      const double td = target - q.value(f, a);
      auto w = q.row(a);
      for (std::uint32_t i : f) w[i] += step_size * td;
      if (r.done) break;
      s = r.next;
      f = next_f;
    }
  }
  return SoftmaxPolicy(coder, std::move(q), cfg.temperature, cfg.uniform_mix);
}

Dataset collect(const DiscretePolicy &policy, std::size_t n, const EnvConfig &env, Rng &rng) {
  Dataset data;
  data.meta.env = env;
  data.trajectories.reserve(n);
  for (std::size_t i = 0; i < n; ++i) data.trajectories.push_back(rollout(policy, env, rng, false));
  return data;
}

std::pair<Dataset, Dataset> split(const Dataset &data, const SplitSpec &spec) {
  if (spec.n_train > data.size())
    throw std::invalid_argument("split: n_train exceeds the dataset size");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(spec.shuffle_seed);
  // Fisher-Yates with our own integer draws so the permutation is portable.
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  Dataset train, test;
  train.meta = test.meta = data.meta;
  train.trajectories.reserve(spec.n_train);
  test.trajectories.reserve(data.size() - spec.n_train);
  for (std::size_t k = 0; k < order.size(); ++k)
    (k < spec.n_train ? train : test).trajectories.push_back(data.trajectories[order[k]]);
  return {std::move(train), std::move(test)};
}

double behavior_value_estimate(const Dataset &data) {
  if (data.empty()) throw std::invalid_argument("behavior_value_estimate: empty dataset");
  double sum = 0.0;
  for (const Trajectory &t : data.trajectories) sum += trajectory_return(t, 1.0);
  return sum / static_cast<double>(data.size());
}

} // namespace safeeval
