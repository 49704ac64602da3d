#include "safeeval/mountain_car.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "safeeval/policy.hpp"

namespace safeeval {

void EnvConfig::validate() const {
  if (action_repeat < 1) throw std::invalid_argument("action_repeat must be >= 1");
  if (max_macro_steps < 1) throw std::invalid_argument("max_macro_steps must be >= 1");
  if (!(start_position_lo < start_position_hi) || start_position_lo < kMinPosition ||
      start_position_hi > kMaxPosition)
    throw std::invalid_argument("start position range must lie inside the state box");
  if (!(start_velocity_lo < start_velocity_hi) || start_velocity_lo < -kMaxSpeed ||
      start_velocity_hi > kMaxSpeed)
    throw std::invalid_argument("start velocity range must lie inside the state box");
  if (!(start_position_lo < goal_position))
    throw std::invalid_argument("start position range lies entirely past the goal");
}

bool state_in_box(const State &s) {
  return std::isfinite(s.position) && std::isfinite(s.velocity) && s.position >= kMinPosition &&
         s.position <= kMaxPosition && s.velocity >= -kMaxSpeed && s.velocity <= kMaxSpeed;
}

State inner_tick(const State &s, Action a) {
  double v = s.velocity + 0.001 * (static_cast<double>(a.index) - 1.0) - 0.0025 * std::cos(3.0 * s.position);
  v = std::clamp(v, -kMaxSpeed, kMaxSpeed);
  double p = std::clamp(s.position + v, kMinPosition, kMaxPosition);
  if (p <= kMinPosition) v = 0.0;
  return {p, v};
}

State env_reset(Rng &rng, const EnvConfig &cfg) {
  State s;
  s.position = rng.uniform(cfg.start_position_lo, cfg.start_position_hi);
  s.velocity = rng.uniform(cfg.start_velocity_lo, cfg.start_velocity_hi);
  return s;
}

StepResult env_step(const State &s, Action a, const EnvConfig &cfg) {
  if (a.index >= kNumActions) throw std::logic_error("action index out of range");
  if (!state_in_box(s)) throw std::logic_error("state outside the state box");
  if (s.position >= cfg.goal_position) throw std::logic_error("env_step called on a terminal state");
  StepResult out{s, -1.0, false};
  for (int k = 0; k < cfg.action_repeat; ++k) {
    out.next = inner_tick(out.next, a);
    if (out.next.position >= cfg.goal_position) {
      out.done = true;
      out.reward = 0.0;
      break;
    }
  }
  return out;
}

Trajectory rollout(const DiscretePolicy &policy, const EnvConfig &cfg, Rng &rng, bool record_probs) {
  Trajectory traj;
  State s = env_reset(rng, cfg);
  while (s.position >= cfg.goal_position) s = env_reset(rng, cfg);
  traj.steps.reserve(static_cast<std::size_t>(cfg.max_macro_steps));
  for (int t = 0; t < cfg.max_macro_steps; ++t) {
    const ActionProbs p = policy.probs(s);
    const Action a{rng.categorical(p)};
    const StepResult r = env_step(s, a, cfg);
    Step step{s, a, r.reward, std::nullopt};
    if (record_probs) step.behavior_prob = p[a.index];
    traj.steps.push_back(step);
    if (r.done) {
      traj.terminated = true;
      break;
    }
    s = r.next;
  }
  return traj;
}

double trajectory_return(const Trajectory &traj, double gamma) {
  double g = 0.0;
  double discount = 1.0;
  for (const Step &step : traj.steps) {
    g += discount * step.reward;
    discount *= gamma;
  }
  return g;
}

} // namespace safeeval
