#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "safeeval/rng.hpp"

namespace safeeval {

inline constexpr double kMinPosition = -1.2;
inline constexpr double kMaxPosition = 0.6;
inline constexpr double kMaxSpeed = 0.07;
inline constexpr std::size_t kNumActions = 3;

struct State {
  double position = 0.0;
  double velocity = 0.0;

  bool operator==(const State &) const = default;
};

/// 0 = push left, 1 = no-op, 2 = push right.
struct Action {
  std::uint8_t index = 1;

  constexpr Action() = default;
  constexpr explicit Action(std::size_t i) : index(static_cast<std::uint8_t>(i)) {}
  bool operator==(const Action &) const = default;
};

struct Step {
  State state;
  Action action;
  double reward = 0.0;
  std::optional<double> behavior_prob;

  bool operator==(const Step &) const = default;
};

struct Trajectory {
  std::vector<Step> steps;
  bool terminated = false;

  std::size_t size() const { return steps.size(); }
  bool operator==(const Trajectory &) const = default;
};

struct EnvConfig {
  int action_repeat = 4;
  int max_macro_steps = 250;
  double goal_position = 0.5;
  // Start-state box; the default is the full state box.
  double start_position_lo = kMinPosition;
  double start_position_hi = kMaxPosition;
  double start_velocity_lo = -kMaxSpeed;
  double start_velocity_hi = kMaxSpeed;

  void validate() const;
  bool operator==(const EnvConfig &) const = default;
};

struct StepResult {
  State next;
  double reward = -1.0;
  bool done = false;
};

bool state_in_box(const State &s);

/// One classic dynamics update (no action repeat). Bit-exact in binary64.
State inner_tick(const State &s, Action a);

State env_reset(Rng &rng, const EnvConfig &cfg = {});

/// One macro-step: `action_repeat` inner ticks, stopping as soon as the goal
/// is crossed. Throws std::logic_error when called on a terminal state.
StepResult env_step(const State &s, Action a, const EnvConfig &cfg = {});

class DiscretePolicy;

/// Samples one episode. The start state is redrawn until it is non-terminal.
Trajectory rollout(const DiscretePolicy &policy, const EnvConfig &cfg, Rng &rng, bool record_probs);

/// Sum of gamma^t * R_t over the trajectory.
double trajectory_return(const Trajectory &traj, double gamma);

} // namespace safeeval
