#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "safeeval/behavior_estimate.hpp"
#include "safeeval/datasource.hpp"
#include "safeeval/tile_coding.hpp"

namespace safeeval {

enum class ImproveMethod { BC, DDQN, BCQ };

std::string to_string(ImproveMethod m);
ImproveMethod parse_improve_method(const std::string &name);

struct ImproveConfig {
  ImproveMethod method = ImproveMethod::DDQN;
  int updates_per_iteration = 10000;
  /// Per-sample step is learning_rate / num_tilings, summed over the batch.
  double learning_rate = 0.05;
  double gamma = 1.0;
  int target_sync_interval = 100;
  double bcq_threshold = 0.3;
  int batch_size = 32;
  std::uint64_t seed = 0;
  /// Uniform mass mixed into exported greedy policies.
  double export_soften = 0.05;
  int num_tilings = 8;
  int tiles_per_dim = 8;
  int bcq_bins_per_dim = 32;
  double bcq_alpha = 1.0;
  bool reset_per_iteration = false;

  static ImproveConfig defaults_for(ImproveMethod method);
  void validate() const;
};

/// One logged decision with cached features. `next_features` is meaningless
/// when `done` is set.
struct Transition {
  FeatureSet features;
  Action action;
  double reward = 0.0;
  FeatureSet next_features;
  State next_state;
  bool done = false;
};

struct ImproverState {
  ImproveMethod method = ImproveMethod::DDQN;
  TileCoder coder;
  /// Q weights for DDQN/BCQ, classifier logits for BC.
  LinearQ online;
  /// Snapshot of `online` taken at the last sync (DDQN/BCQ).
  LinearQ target;
  std::uint64_t update_counter = 0;
  /// Every training transition seen so far; training data only.
  std::vector<Transition> buffer;
  /// BCQ's behavior model, fit on the same training data.
  std::optional<EstimatedBehaviorPolicy> bcq_behavior;

  static ImproverState fresh(const ImproveConfig &cfg);
};

/// Appends the decisions of `train` to the state's buffer. Transitions out of a
/// truncated trajectory's last step have no successor and are dropped for the
/// Q-learners; BC keeps every (state, action) pair.
void append_training_data(ImproverState &state, const Dataset &train, const ImproveConfig &cfg);

/// Mean cross-entropy of the softmax classifier on the batch.
double bc_loss(const LinearQ &logits, std::span<const Transition> batch);
/// Gradient of bc_loss, dense, laid out like LinearQ::data().
std::vector<double> bc_gradient(const LinearQ &logits, std::span<const Transition> batch);

/// Bootstrapped TD target. `allowed` masks the argmax at the successor.
double td_target(const LinearQ &online, const LinearQ &target, const Transition &t, double gamma,
                 const std::array<bool, kNumActions> &allowed = {true, true, true});
/// 1/(2B) sum (y_k - Q(s_k, a_k))^2 with the targets held fixed.
double td_loss(const LinearQ &online, std::span<const Transition> batch, std::span<const double> targets);
std::vector<double> td_gradient(const LinearQ &online, std::span<const Transition> batch,
                                std::span<const double> targets);

/// Actions a with pib(a)/max pib >= threshold.
std::array<bool, kNumActions> bcq_mask(const ActionProbs &pib, double threshold);

void bc_update(ImproverState &state, std::span<const Transition> batch, const ImproveConfig &cfg);
void ddqn_update(ImproverState &state, std::span<const Transition> batch, const ImproveConfig &cfg);
void bcq_update(ImproverState &state, std::span<const Transition> batch, const DiscretePolicy &pib_hat,
                const ImproveConfig &cfg);

/// Policy handed to the estimators: softmax classifier for BC, softened greedy
/// over the online Q otherwise.
PolicyPtr export_policy(const ImproverState &state, const ImproveConfig &cfg);

/// Runs cfg.updates_per_iteration updates on top of `prior` (fresh when absent
/// or when cfg.reset_per_iteration is set), after adding `train` to the buffer.
std::pair<ImproverState, PolicyPtr> improve(const Dataset &train, const ImproveConfig &cfg,
                                            std::optional<ImproverState> prior = std::nullopt);

nlohmann::json improve_config_to_json(const ImproveConfig &cfg);
/// Starts from the method's defaults; absent fields keep them.
ImproveConfig improve_config_from_json(const nlohmann::json &j);

void write_checkpoint(std::ostream &out, const ImproverState &state, const ImproveConfig &cfg);
/// Restores weights and counters; the buffer is not part of a checkpoint.
ImproverState read_checkpoint(std::istream &in, ImproveConfig *cfg_out = nullptr);

} // namespace safeeval
