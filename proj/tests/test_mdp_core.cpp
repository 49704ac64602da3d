#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "safeeval/mountain_car.hpp"
#include "safeeval/policy.hpp"

using namespace safeeval;

namespace {

// Straight transcription of the classic update, kept apart from the library.
State reference_tick(State s, int a) {
  double v = s.velocity + 0.001 * (a - 1.0) - 0.0025 * std::cos(3.0 * s.position);
  if (v < -0.07) v = -0.07;
  if (v > 0.07) v = 0.07;
  double p = s.position + v;
  if (p < -1.2) p = -1.2;
  if (p > 0.6) p = 0.6;
  if (p <= -1.2) v = 0.0;
  return {p, v};
}

Trajectory with_rewards(std::initializer_list<double> rewards, bool terminated) {
  Trajectory t;
  for (double r : rewards) t.steps.push_back(Step{{-0.5, 0.0}, Action{1}, r, std::nullopt});
  t.terminated = terminated;
  return t;
}

} // namespace

TEST_CASE("inner tick matches the recorded golden transitions bit for bit") {
  std::ifstream in(SAFEEVAL_TEST_DATA "/inner_tick_golden.txt");
  REQUIRE(in.good());
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string p, v, np, nv;
    int a = 0;
    fields >> p >> v >> a >> np >> nv;
    const State next = inner_tick({std::strtod(p.c_str(), nullptr), std::strtod(v.c_str(), nullptr)}, Action(a));
    CHECK(next.position == std::strtod(np.c_str(), nullptr));
    CHECK(next.velocity == std::strtod(nv.c_str(), nullptr));
    ++rows;
  }
  CHECK(rows == 100);
}

TEST_CASE("env_reset is deterministic and covers the full box") {
  Rng a(7), b(7);
  CHECK(env_reset(a) == env_reset(b));

  Rng rng(11);
  const int n = 10000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const State s = env_reset(rng);
    CHECK(s.position >= -1.2);
    CHECK(s.position < 0.6);
    CHECK(s.velocity >= -0.07);
    CHECK(s.velocity < 0.07);
    sum += s.position;
    sumsq += s.position * s.position;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sumsq / n - mean * mean) / n);
  CHECK(std::abs(mean - (-0.3)) < 3 * se);
}

TEST_CASE("env_step applies the repeated action and ends at the goal") {
  SUBCASE("goal reached from just below it") {
    for (int a = 0; a < 3; ++a) {
      const StepResult r = env_step({0.49, 0.07}, Action(a));
      CHECK(r.done);
      CHECK(r.reward == 0.0);
      CHECK(r.next.position >= 0.5);
    }
  }
  SUBCASE("four reference ticks from the valley") {
    State s{-0.5, 0.0};
    for (int k = 0; k < 4; ++k) s = reference_tick(s, 2);
    const StepResult r = env_step({-0.5, 0.0}, Action(2));
    CHECK(r.next == s);
    CHECK(r.next.position > -0.5);
    CHECK_FALSE(r.done);
    CHECK(r.reward == -1.0);
  }
  SUBCASE("pushing right yields more velocity than pushing left") {
    CHECK(env_step({-0.5, 0.0}, Action(0)).next.velocity < env_step({-0.5, 0.0}, Action(2)).next.velocity);
  }
  SUBCASE("stops mid-repeat once the goal is crossed") {
    // One tick from (0.45, 0.07) already lands past 0.5.
    const StepResult r = env_step({0.45, 0.07}, Action(2));
    CHECK(r.done);
    CHECK(r.next == reference_tick({0.45, 0.07}, 2));
  }
  SUBCASE("left wall zeroes velocity") {
    const State wall = inner_tick({-1.19, -0.07}, Action(0));
    CHECK(wall.position == -1.2);
    CHECK(wall.velocity == 0.0);
    CHECK(env_step({-1.19, -0.07}, Action(0)).next.position >= -1.2);
  }
  SUBCASE("terminal and out-of-box states are rejected") {
    CHECK_THROWS_AS(env_step({0.5, 0.0}, Action(1)), std::logic_error);
    CHECK_THROWS_AS(env_step({0.0, 0.5}, Action(1)), std::logic_error);
    CHECK_THROWS_AS(env_step({0.0, 0.0}, Action(3)), std::logic_error);
  }
}

TEST_CASE("env_step keeps every state inside the box") {
  Rng rng(5);
  for (int i = 0; i < 5000; ++i) {
    State s = env_reset(rng);
    if (s.position >= 0.5) continue;
    const StepResult r = env_step(s, Action(rng.below(3)));
    CHECK(state_in_box(r.next));
    CHECK(r.done == (r.next.position >= 0.5));
  }
}

TEST_CASE("rollout") {
  const EnvConfig cfg;
  SUBCASE("pushing with the velocity from the valley reaches the goal") {
    EnvConfig valley = cfg;
    valley.start_position_lo = -0.5;
    valley.start_position_hi = -0.5 + 1e-12;
    valley.start_velocity_lo = 0.0;
    valley.start_velocity_hi = 1e-12;
    FunctionPolicy pump([](const State &s) {
      return s.velocity >= 0.0 ? ActionProbs{0.0, 0.0, 1.0} : ActionProbs{1.0, 0.0, 0.0};
    });
    Rng rng(1);
    const Trajectory t = rollout(pump, valley, rng, false);
    CHECK(t.terminated);
    CHECK(t.size() <= 250);
    // Reference simulation of the same policy.
    State s{t.steps.front().state};
    int steps = 0;
    bool done = false;
    while (!done && steps < 250) {
      const int a = s.velocity >= 0.0 ? 2 : 0;
      for (int k = 0; k < 4 && !done; ++k) {
        s = reference_tick(s, a);
        done = s.position >= 0.5;
      }
      ++steps;
    }
    CHECK(steps == static_cast<int>(t.size()));
  }
  SUBCASE("seeded uniform rollouts repeat exactly") {
    UniformPolicy uniform;
    Rng a(99), b(99);
    CHECK(rollout(uniform, cfg, a, false) == rollout(uniform, cfg, b, false));
  }
  SUBCASE("recorded probabilities agree with the policy") {
    FunctionPolicy tilted([](const State &s) {
      return s.velocity > 0 ? ActionProbs{0.1, 0.2, 0.7} : ActionProbs{0.6, 0.3, 0.1};
    });
    Rng rng(3);
    const Trajectory t = rollout(tilted, cfg, rng, true);
    for (const Step &step : t.steps) {
      REQUIRE(step.behavior_prob.has_value());
      CHECK(*step.behavior_prob == tilted.probs(step.state)[step.action.index]);
    }
  }
  SUBCASE("length cap, termination flag and return bounds") {
    UniformPolicy uniform;
    Rng rng(12);
    for (int i = 0; i < 200; ++i) {
      const Trajectory t = rollout(uniform, cfg, rng, false);
      REQUIRE(t.size() >= 1);
      CHECK(t.size() <= 250);
      const double g = trajectory_return(t, 1.0);
      CHECK(g <= 0.0);
      CHECK(g >= -static_cast<double>(t.size()));
      if (t.terminated) {
        CHECK(g == -static_cast<double>(t.size() - 1));
        CHECK(t.steps.back().reward == 0.0);
      } else {
        CHECK(t.size() == 250);
      }
    }
  }
}

TEST_CASE("trajectory_return") {
  CHECK(trajectory_return(with_rewards({-1, -1, 0}, true), 1.0) == -2.0);
  CHECK(trajectory_return(with_rewards({-1, -1}, false), 0.5) == -1.5);
  CHECK(trajectory_return(with_rewards({-1, -1, -1, -1, 0}, true), 1.0) == -4.0);
}
