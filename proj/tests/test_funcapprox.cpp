#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "safeeval/tile_coding.hpp"

using namespace safeeval;
using doctest::Approx;

TEST_CASE("tile features") {
  SUBCASE("one tiling of 2x2 activates one index at the center") {
    const TileCoder coder(1, 2);
    const FeatureSet f = coder.features({-0.3, 0.0});
    CHECK(f.count == 1);
    CHECK(f.index[0] < coder.feature_count());
  }
  SUBCASE("count, range and determinism") {
    const TileCoder coder;
    CHECK(coder.feature_count() == 8u * 8u * 8u);
    Rng rng(4);
    for (int i = 0; i < 2000; ++i) {
      const State s{rng.uniform(-1.2, 0.6), rng.uniform(-0.07, 0.07)};
      const FeatureSet f = coder.features(s);
      REQUIRE(f.count == 8);
      std::set<std::uint32_t> distinct(f.begin(), f.end());
      CHECK(distinct.size() == 8);
      for (std::uint32_t idx : f) CHECK(idx < coder.feature_count());
      CHECK(coder.features(s) == f);
    }
  }
  SUBCASE("nearby states share every tile") {
    const TileCoder coder;
    CHECK(coder.features({-0.5, 0.01}) == coder.features({-0.5 + 1e-9, 0.01 + 1e-11}));
  }
  SUBCASE("corners and out-of-box states clamp") {
    const TileCoder coder;
    for (State s : {State{-1.2, -0.07}, State{0.6, 0.07}, State{-1.2, 0.07}, State{0.6, -0.07}}) {
      const FeatureSet f = coder.features(s);
      CHECK(f.count == 8);
      for (std::uint32_t idx : f) CHECK(idx < coder.feature_count());
    }
    CHECK(coder.features({-5.0, -1.0}) == coder.features({-1.2, -0.07}));
    CHECK(coder.features({3.0, 1.0}) == coder.features({0.6, 0.07}));
  }
}

TEST_CASE("q_values") {
  const TileCoder coder;
  const State s{-0.4, 0.02};
  LinearQ zero(coder.feature_count());
  CHECK(q_values(zero, coder, s) == ActionProbs{0, 0, 0});

  LinearQ ones(coder.feature_count(), 1.0);
  CHECK(q_values(ones, coder, s) == ActionProbs{8, 8, 8});

  Rng rng(2);
  LinearQ q(coder.feature_count());
  for (double &w : q.data()) w = rng.uniform(-1, 1);
  const ActionProbs before = q_values(q, coder, s);
  const FeatureSet f = coder.features(s);
  std::uint32_t inactive = 0;
  while (std::find(f.begin(), f.end(), inactive) != f.end()) ++inactive;
  q.row(1)[inactive] += 100.0;
  CHECK(q_values(q, coder, s) == before);
}

TEST_CASE("mixed softmax") {
  const ActionProbs u = mixed_softmax({0.3, 0.3, 0.3}, 1.0, 0.0);
  for (double p : u) CHECK(p == Approx(1.0 / 3.0).epsilon(1e-15));

  const ActionProbs greedy = mixed_softmax({1e6, 0.0, 0.0}, 1.0, 0.3);
  CHECK(greedy[0] == Approx(0.8).epsilon(1e-12));
  CHECK(greedy[1] == Approx(0.1).epsilon(1e-12));
  CHECK(greedy[2] == Approx(0.1).epsilon(1e-12));

  const ActionProbs half = mixed_softmax({std::log(2.0), 0.0, 0.0}, 1.0, 0.0);
  CHECK(half[0] == Approx(0.5).epsilon(1e-14));
  CHECK(half[1] == Approx(0.25).epsilon(1e-14));

  SUBCASE("huge logits do not overflow") {
    const ActionProbs p = mixed_softmax({1e308, -1e308, 5.0}, 0.01, 0.0);
    CHECK(std::isfinite(p[0]));
    CHECK(p[0] == 1.0);
  }
}

TEST_CASE("distribution invariants over random policies") {
  const TileCoder coder;
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    LinearQ w(coder.feature_count());
    for (double &x : w.data()) x = rng.uniform(-50, 50);
    const double mix = rng.uniform(0.0, 0.9);
    const double temp = rng.uniform(0.01, 5.0);
    const SoftmaxPolicy pi(coder, w, temp, mix);
    for (int k = 0; k < 20; ++k) {
      const State s{rng.uniform(-1.2, 0.6), rng.uniform(-0.07, 0.07)};
      const ActionProbs p = policy_probs(pi, s);
      double sum = 0.0;
      for (double x : p) {
        CHECK(x >= mix / 3.0 - 1e-15);
        sum += x;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);

      // Scaling logits changes probabilities but not the top action.
      const ActionProbs logits = pi.logits(s);
      CHECK(argmax_lowest(logits) == argmax_lowest(p));
      ActionProbs scaled = logits;
      const double c = rng.uniform(0.1, 10.0);
      for (double &x : scaled) x *= c;
      CHECK(argmax_lowest(mixed_softmax(scaled, temp, mix)) == argmax_lowest(p));
    }
  }
}

TEST_CASE("softened greedy policy") {
  const TileCoder coder(1, 1);
  auto policy_for = [&](ActionProbs q, double soften) {
    LinearQ w(coder.feature_count());
    for (std::size_t a = 0; a < 3; ++a) w.row(a)[0] = q[a];
    return greedy_policy(w, coder, soften).probs({0.0, 0.0});
  };
  CHECK(policy_for({1, 5, 2}, 0.0) == ActionProbs{0, 1, 0});
  const ActionProbs soft = policy_for({1, 5, 2}, 0.05);
  CHECK(soft[0] == Approx(0.05 / 3));
  CHECK(soft[1] == Approx(1 - 0.05 + 0.05 / 3));
  CHECK(soft[2] == Approx(0.05 / 3));
  CHECK(policy_for({5, 5, 2}, 0.0) == ActionProbs{1, 0, 0});
}

TEST_CASE("policy snapshots round-trip") {
  const TileCoder coder(4, 5);
  Rng rng(6);
  LinearQ w(coder.feature_count());
  for (double &x : w.data()) x = rng.uniform(-3, 3);

  std::stringstream soft_io, greedy_io;
  write_policy_snapshot(soft_io, SoftmaxPolicy(coder, w, 0.7, 0.2));
  write_policy_snapshot(greedy_io, GreedyQPolicy(coder, w, 0.05));
  const PolicyPtr soft = read_policy_snapshot(soft_io);
  const PolicyPtr greedy = read_policy_snapshot(greedy_io);
  const SoftmaxPolicy soft_ref(coder, w, 0.7, 0.2);
  const GreedyQPolicy greedy_ref(coder, w, 0.05);
  for (int i = 0; i < 100; ++i) {
    const State s{rng.uniform(-1.2, 0.6), rng.uniform(-0.07, 0.07)};
    CHECK(soft->probs(s) == soft_ref.probs(s));
    CHECK(greedy->probs(s) == greedy_ref.probs(s));
  }

  std::stringstream bad("{\"kind\":\"softmax\"}\n[1,2]\n");
  CHECK_THROWS(read_policy_snapshot(bad));
}
