#include "safeeval/improve.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace safeeval {

using nlohmann::json;

std::string to_string(ImproveMethod m) {
  switch (m) {
  case ImproveMethod::BC: return "bc";
  case ImproveMethod::DDQN: return "ddqn";
  case ImproveMethod::BCQ: return "bcq";
  }
  return "?";
}

ImproveMethod parse_improve_method(const std::string &name) {
  if (name == "bc") return ImproveMethod::BC;
  if (name == "ddqn") return ImproveMethod::DDQN;
  if (name == "bcq") return ImproveMethod::BCQ;
  throw std::invalid_argument("unknown improvement method '" + name + "'");
}

ImproveConfig ImproveConfig::defaults_for(ImproveMethod method) {
  ImproveConfig cfg;
  cfg.method = method;
  cfg.updates_per_iteration = method == ImproveMethod::BC ? 2000 : 10000;
  return cfg;
}

void ImproveConfig::validate() const {
  if (updates_per_iteration < 0) throw std::invalid_argument("updates_per_iteration must be >= 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
  if (target_sync_interval < 1) throw std::invalid_argument("target_sync_interval must be positive");
  if (!(bcq_threshold >= 0.0 && bcq_threshold <= 1.0)) throw std::invalid_argument("bcq_threshold must be in [0, 1]");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(export_soften >= 0.0 && export_soften < 1.0)) throw std::invalid_argument("export_soften must be in [0, 1)");
}

ImproverState ImproverState::fresh(const ImproveConfig &cfg) {
  ImproverState s;
  s.method = cfg.method;
  s.coder = TileCoder(cfg.num_tilings, cfg.tiles_per_dim);
  s.online = LinearQ(s.coder.feature_count());
  s.target = s.online;
  if (cfg.method == ImproveMethod::BCQ)
    s.bcq_behavior.emplace(StateDiscretizer(cfg.bcq_bins_per_dim), cfg.bcq_alpha);
  return s;
}

void append_training_data(ImproverState &state, const Dataset &train, const ImproveConfig &cfg) {
  const bool keep_truncated_tail = state.method == ImproveMethod::BC;
  for (const Trajectory &traj : train.trajectories) {
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const Step &step = traj.steps[t];
      if (state.bcq_behavior) state.bcq_behavior->add(step.state, step.action);
      const bool last = t + 1 == traj.steps.size();
      if (last && !traj.terminated && !keep_truncated_tail) continue;
      Transition tr;
      tr.features = state.coder.features(step.state);
      tr.action = step.action;
      tr.reward = step.reward;
      tr.done = last && traj.terminated;
      if (!last) {
        tr.next_state = traj.steps[t + 1].state;
        tr.next_features = state.coder.features(tr.next_state);
      }
      state.buffer.push_back(tr);
    }
  }
  (void)cfg;
}

namespace {

ActionProbs classifier_probs(const LinearQ &logits, const FeatureSet &f) {
  return mixed_softmax(logits.values(f), 1.0, 0.0);
}

// Sparse accumulation of (action, feature, delta) over a batch, applied after
// every per-sample quantity has been computed from the pre-update weights.
void apply_scaled(LinearQ &w, std::span<const Transition> batch, std::span<const ActionProbs> deltas,
                  double scale) {
  for (std::size_t k = 0; k < batch.size(); ++k)
    for (std::size_t a = 0; a < kNumActions; ++a) {
      if (deltas[k][a] == 0.0) continue;
      auto row = w.row(a);
      const double d = scale * deltas[k][a];
      for (std::uint32_t i : batch[k].features) row[i] += d;
    }
}

void q_update(ImproverState &state, std::span<const Transition> batch, const ImproveConfig &cfg,
              const DiscretePolicy *pib_hat) {
  std::vector<ActionProbs> deltas(batch.size(), ActionProbs{});
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const Transition &tr = batch[k];
    std::array<bool, kNumActions> allowed{true, true, true};
    if (pib_hat && !tr.done) allowed = bcq_mask(pib_hat->probs(tr.next_state), cfg.bcq_threshold);
    const double y = td_target(state.online, state.target, tr, cfg.gamma, allowed);
    deltas[k][tr.action.index] = y - state.online.value(tr.features, tr.action.index);
  }
  apply_scaled(state.online, batch, deltas, cfg.learning_rate / state.coder.num_tilings());
  ++state.update_counter;
  if (state.update_counter % static_cast<std::uint64_t>(cfg.target_sync_interval) == 0)
    state.target = state.online;
}

} // namespace

double bc_loss(const LinearQ &logits, std::span<const Transition> batch) {
  double loss = 0.0;
  for (const Transition &tr : batch) {
    const ActionProbs q = logits.values(tr.features);
    const double hi = *std::max_element(q.begin(), q.end());
    double z = 0.0;
    for (double x : q) z += std::exp(x - hi);
    loss += hi + std::log(z) - q[tr.action.index];
  }
  return loss / static_cast<double>(batch.size());
}

std::vector<double> bc_gradient(const LinearQ &logits, std::span<const Transition> batch) {
  std::vector<double> grad(logits.data().size(), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const Transition &tr : batch) {
    const ActionProbs p = classifier_probs(logits, tr.features);
    for (std::size_t a = 0; a < kNumActions; ++a) {
      const double g = (p[a] - (a == tr.action.index ? 1.0 : 0.0)) * inv;
      for (std::uint32_t i : tr.features) grad[a * logits.feature_count() + i] += g;
    }
  }
  return grad;
}

double td_target(const LinearQ &online, const LinearQ &target, const Transition &t, double gamma,
                 const std::array<bool, kNumActions> &allowed) {
  if (t.done) return t.reward;
  const ActionProbs q_next = online.values(t.next_features);
  std::size_t best = kNumActions;
  for (std::size_t a = 0; a < kNumActions; ++a)
    if (allowed[a] && (best == kNumActions || q_next[a] > q_next[best])) best = a;
  assert(best < kNumActions && "BCQ mask must keep at least one action");
  return t.reward + gamma * target.value(t.next_features, best);
}

double td_loss(const LinearQ &online, std::span<const Transition> batch, std::span<const double> targets) {
  double loss = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const double d = targets[k] - online.value(batch[k].features, batch[k].action.index);
    loss += 0.5 * d * d;
  }
  return loss / static_cast<double>(batch.size());
}

std::vector<double> td_gradient(const LinearQ &online, std::span<const Transition> batch,
                                std::span<const double> targets) {
  std::vector<double> grad(online.data().size(), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const Transition &tr = batch[k];
    const double d = targets[k] - online.value(tr.features, tr.action.index);
    for (std::uint32_t i : tr.features) grad[tr.action.index * online.feature_count() + i] -= d * inv;
  }
  return grad;
}

std::array<bool, kNumActions> bcq_mask(const ActionProbs &pib, double threshold) {
  const double hi = *std::max_element(pib.begin(), pib.end());
  std::array<bool, kNumActions> allowed{};
  for (std::size_t a = 0; a < kNumActions; ++a) allowed[a] = pib[a] / hi >= threshold;
  return allowed;
}

void bc_update(ImproverState &state, std::span<const Transition> batch, const ImproveConfig &cfg) {
  if (batch.empty()) throw std::invalid_argument("bc_update: empty batch");
  std::vector<ActionProbs> deltas(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const ActionProbs p = classifier_probs(state.online, batch[k].features);
    for (std::size_t a = 0; a < kNumActions; ++a)
      deltas[k][a] = (a == batch[k].action.index ? 1.0 : 0.0) - p[a];
  }
  apply_scaled(state.online, batch, deltas, cfg.learning_rate / state.coder.num_tilings());
  ++state.update_counter;
}

void ddqn_update(ImproverState &state, std::span<const Transition> batch, const ImproveConfig &cfg) {
  q_update(state, batch, cfg, nullptr);
}

void bcq_update(ImproverState &state, std::span<const Transition> batch, const DiscretePolicy &pib_hat,
                const ImproveConfig &cfg) {
  q_update(state, batch, cfg, &pib_hat);
}

PolicyPtr export_policy(const ImproverState &state, const ImproveConfig &cfg) {
  if (state.method == ImproveMethod::BC)
    return std::make_shared<SoftmaxPolicy>(state.coder, state.online, 1.0, 0.0);
  return std::make_shared<GreedyQPolicy>(state.coder, state.online, cfg.export_soften);
}

std::pair<ImproverState, PolicyPtr> improve(const Dataset &train, const ImproveConfig &cfg,
                                            std::optional<ImproverState> prior) {
  cfg.validate();
  ImproverState state =
      (prior && !cfg.reset_per_iteration) ? std::move(*prior) : ImproverState::fresh(cfg);
  if (state.method != cfg.method) throw std::invalid_argument("improve: prior state belongs to another method");
  append_training_data(state, train, cfg);
  if (state.buffer.empty() && cfg.updates_per_iteration > 0)
    throw std::invalid_argument("improve: no training transitions");

  std::vector<Transition> batch(static_cast<std::size_t>(cfg.batch_size));
  for (int u = 0; u < cfg.updates_per_iteration; ++u) {
    // One derived stream per update keeps sampling independent of history.
    Rng rng(derive_seed(cfg.seed, {state.update_counter}));
    for (Transition &tr : batch) tr = state.buffer[rng.below(state.buffer.size())];
    switch (cfg.method) {
    case ImproveMethod::BC: bc_update(state, batch, cfg); break;
    case ImproveMethod::DDQN: ddqn_update(state, batch, cfg); break;
    case ImproveMethod::BCQ: bcq_update(state, batch, *state.bcq_behavior, cfg); break;
    }
  }
  PolicyPtr policy = export_policy(state, cfg);
  return {std::move(state), std::move(policy)};
}

json improve_config_to_json(const ImproveConfig &c) {
  return {{"method", to_string(c.method)},
          {"updates_per_iteration", c.updates_per_iteration},
          {"learning_rate", c.learning_rate},
          {"gamma", c.gamma},
          {"target_sync_interval", c.target_sync_interval},
          {"bcq_threshold", c.bcq_threshold},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"export_soften", c.export_soften},
          {"num_tilings", c.num_tilings},
          {"tiles_per_dim", c.tiles_per_dim},
          {"bcq_bins_per_dim", c.bcq_bins_per_dim},
          {"bcq_alpha", c.bcq_alpha},
          {"reset_per_iteration", c.reset_per_iteration}};
}

ImproveConfig improve_config_from_json(const json &j) {
  ImproveConfig c = ImproveConfig::defaults_for(parse_improve_method(j.at("method").get<std::string>()));
  c.updates_per_iteration = j.value("updates_per_iteration", c.updates_per_iteration);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.gamma = j.value("gamma", c.gamma);
  c.target_sync_interval = j.value("target_sync_interval", c.target_sync_interval);
  c.bcq_threshold = j.value("bcq_threshold", c.bcq_threshold);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.export_soften = j.value("export_soften", c.export_soften);
  c.num_tilings = j.value("num_tilings", c.num_tilings);
  c.tiles_per_dim = j.value("tiles_per_dim", c.tiles_per_dim);
  c.bcq_bins_per_dim = j.value("bcq_bins_per_dim", c.bcq_bins_per_dim);
  c.bcq_alpha = j.value("bcq_alpha", c.bcq_alpha);
  c.reset_per_iteration = j.value("reset_per_iteration", c.reset_per_iteration);
  return c;
}

namespace {

void write_rows(std::ostream &out, const LinearQ &w) {
  for (std::size_t a = 0; a < kNumActions; ++a) {
    const auto row = w.row(a);
    out << json(std::vector<double>(row.begin(), row.end())).dump() << '\n';
  }
}

LinearQ read_rows(std::istream &in, std::size_t features) {
  LinearQ w(features);
  std::string line;
  for (std::size_t a = 0; a < kNumActions; ++a) {
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing weight row");
    const auto row = json::parse(line).get<std::vector<double>>();
    if (row.size() != features) throw std::runtime_error("checkpoint: bad row length");
    std::copy(row.begin(), row.end(), w.row(a).begin());
  }
  return w;
}

} // namespace

void write_checkpoint(std::ostream &out, const ImproverState &state, const ImproveConfig &cfg) {
  const bool is_bc = state.method == ImproveMethod::BC;
  json header = {{"kind", is_bc ? "softmax" : "greedy_q"},
                 {"num_tilings", state.coder.num_tilings()},
                 {"tiles_per_dim", state.coder.tiles_per_dim()},
                 {"temperature", is_bc ? json(1.0) : json(nullptr)},
                 {"uniform_mix", is_bc ? 0.0 : cfg.export_soften},
                 {"update_counter", state.update_counter},
                 {"method", to_string(state.method)},
                 {"config", improve_config_to_json(cfg)}};
  out << header.dump() << '\n';
  write_rows(out, state.online);
  if (!is_bc) write_rows(out, state.target);
}

ImproverState read_checkpoint(std::istream &in, ImproveConfig *cfg_out) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing header");
  const json header = json::parse(line);
  const ImproveConfig cfg = improve_config_from_json(header.at("config"));
  ImproverState state = ImproverState::fresh(cfg);
  if (parse_improve_method(header.at("method").get<std::string>()) != cfg.method)
    throw std::runtime_error("checkpoint: method mismatch");
  state.update_counter = header.at("update_counter").get<std::uint64_t>();
  state.online = read_rows(in, state.coder.feature_count());
  state.target = cfg.method == ImproveMethod::BC ? state.online : read_rows(in, state.coder.feature_count());
  if (cfg_out) *cfg_out = cfg;
  return state;
}

} // namespace safeeval
