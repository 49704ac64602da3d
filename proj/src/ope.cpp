#include "safeeval/ope.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace safeeval {

namespace {

double mult_at(Multiplicity mult, std::size_t i) { return mult.empty() ? 1.0 : static_cast<double>(mult[i]); }

void check_multiplicity(Multiplicity mult, std::size_t n) {
  if (!mult.empty() && mult.size() != n) throw std::invalid_argument("multiplicity length mismatch");
}

} // namespace

StepProbTable action_probabilities(const DiscretePolicy &policy, const Dataset &data) {
  StepProbTable table;
  table.reserve(data.size());
  for (const Trajectory &traj : data.trajectories) {
    std::vector<double> row;
    row.reserve(traj.size());
    for (const Step &s : traj.steps) row.push_back(policy.probs(s.state)[s.action.index]);
    table.push_back(std::move(row));
  }
  return table;
}

EstimatedBehaviorPolicy estimate_behavior_policy(const Dataset &data, const StateDiscretizer &disc, double alpha,
                                                 Multiplicity mult) {
  check_multiplicity(mult, data.size());
  EstimatedBehaviorPolicy pib(disc, alpha);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::uint64_t m = mult.empty() ? 1 : mult[i];
    if (m == 0) continue;
    for (const Step &s : data.trajectories[i].steps) pib.add(s.state, s.action, m);
  }
  return pib;
}

// ---------------------------------------------------------------------------
// Importance weights and IS-family estimators

double ImportanceWeights::weight(std::size_t i, long t) const {
  if (t < 0) return 1.0 / total_multiplicity;
  const auto tu = static_cast<std::size_t>(t);
  const double d = denominators[tu];
  if (d == 0.0) return 0.0;
  const std::vector<double> &r = rho[i];
  return r[std::min(tu, r.size() - 1)] / d;
}

ImportanceWeights compute_weights(const StepProbTable &target, const StepProbTable &behavior, Multiplicity mult) {
  if (target.size() != behavior.size()) throw std::invalid_argument("compute_weights: table size mismatch");
  check_multiplicity(mult, target.size());
  ImportanceWeights w;
  w.rho.resize(target.size());
  w.multiplicity.resize(target.size());
  std::size_t longest = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i].size() != behavior[i].size() || target[i].empty())
      throw std::invalid_argument("compute_weights: trajectory length mismatch");
    w.multiplicity[i] = mult_at(mult, i);
    w.total_multiplicity += w.multiplicity[i];
    std::vector<double> &rho = w.rho[i];
    rho.resize(target[i].size());
    double acc = 1.0;
    for (std::size_t t = 0; t < target[i].size(); ++t) {
      if (!(behavior[i][t] > 0.0))
        throw std::invalid_argument("compute_weights: behavior probability must be strictly positive");
      acc *= target[i][t] / behavior[i][t];
      rho[t] = acc;
    }
    longest = std::max(longest, rho.size());
  }
  w.denominators.assign(longest, 0.0);
  for (std::size_t i = 0; i < w.rho.size(); ++i) {
    const double m = w.multiplicity[i];
    if (m == 0.0) continue;
    const std::vector<double> &rho = w.rho[i];
    for (std::size_t t = 0; t < longest; ++t) w.denominators[t] += m * rho[std::min(t, rho.size() - 1)];
  }
  return w;
}

ImportanceWeights compute_weights(const DiscretePolicy &pi_theta, const DiscretePolicy &pib_hat,
                                  const Dataset &data) {
  return compute_weights(action_probabilities(pi_theta, data), action_probabilities(pib_hat, data));
}

namespace {

void require_overlap(const ImportanceWeights &w, const Dataset &data) {
  if (w.trajectories() != data.size()) throw std::invalid_argument("weights do not match the dataset");
  if (w.total_multiplicity <= 0.0) throw EstimatorError("empty sample");
  double total = 0.0;
  for (std::size_t i = 0; i < w.trajectories(); ++i) total += w.multiplicity[i] * w.final_rho(i);
  if (!(total > 0.0)) throw EstimatorError("no overlap: every final importance weight is zero");
}

} // namespace

double wis_estimate(const ImportanceWeights &weights, const Dataset &data, double gamma) {
  require_overlap(weights, data);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double m = weights.multiplicity[i];
    if (m == 0.0) continue;
    const double r = weights.final_rho(i);
    num += m * r * trajectory_return(data.trajectories[i], gamma);
    den += m * r;
  }
  return num / den;
}

double pdwis_estimate(const ImportanceWeights &weights, const Dataset &data, double gamma) {
  require_overlap(weights, data);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double m = weights.multiplicity[i];
    if (m == 0.0) continue;
    const Trajectory &traj = data.trajectories[i];
    double discount = 1.0, sum = 0.0;
    for (std::size_t t = 0; t < traj.size(); ++t) {
      sum += weights.weight(i, static_cast<long>(t)) * discount * traj.steps[t].reward;
      discount *= gamma;
    }
    total += m * sum;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Model estimation

std::vector<double> EstimatedModel::transition_row(std::uint32_t cell, std::size_t a) const {
  std::vector<double> row(cells + 1, 0.0);
  const std::size_t k = sa(cell, a);
  if (visited[k] != 1) {
    row[cell] = 1.0;
    return row;
  }
  for (std::uint32_t s = offsets[k]; s < offsets[k + 1]; ++s) row[successor[s]] += probability[s];
  return row;
}

ModelBuilder::ModelBuilder(const Dataset &base, const StateDiscretizer &disc, double gamma, int horizon)
    : disc_(disc), gamma_(gamma), horizon_(horizon) {
  if (horizon < 1) throw std::invalid_argument("model horizon must be positive");
  const std::size_t cells = disc.cell_count();
  const auto terminal = static_cast<std::uint32_t>(cells);
  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  // Gather (sa, successor) pairs, then lay them out CSR-style.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  records_.resize(base.size());
  initial_cell_.resize(base.size());
  std::vector<std::vector<std::uint32_t>> succ_of(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const Trajectory &traj = base.trajectories[i];
    if (traj.steps.empty()) throw std::invalid_argument("build_model: empty trajectory");
    initial_cell_[i] = disc.cell(traj.steps.front().state);
    records_[i].reserve(traj.size());
    succ_of[i].reserve(traj.size());
    std::uint32_t cell = initial_cell_[i];
    for (std::size_t t = 0; t < traj.size(); ++t) {
      const Step &step = traj.steps[t];
      const auto sa = static_cast<std::uint32_t>(cell * kNumActions + step.action.index);
      std::uint32_t next = kNone;
      if (t + 1 < traj.size()) next = disc.cell(traj.steps[t + 1].state);
      else if (traj.terminated) next = terminal;
      records_[i].push_back({sa, kNone, step.reward});
      succ_of[i].push_back(next);
      if (next != kNone) pairs.emplace_back(sa, next);
      if (t + 1 < traj.size()) cell = next;
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  offsets_.assign(cells * kNumActions + 1, 0);
  successor_.reserve(pairs.size());
  for (const auto &[sa, next] : pairs) {
    ++offsets_[sa + 1];
    successor_.push_back(next);
  }
  std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());

  for (std::size_t i = 0; i < base.size(); ++i)
    for (std::size_t t = 0; t < records_[i].size(); ++t) {
      Record &rec = records_[i][t];
      const std::uint32_t next = succ_of[i][t];
      if (next == kNone) continue;
      const auto first = successor_.begin() + offsets_[rec.sa];
      const auto last = successor_.begin() + offsets_[rec.sa + 1];
      rec.key = static_cast<std::uint32_t>(std::lower_bound(first, last, next) - successor_.begin());
    }
}

EstimatedModel ModelBuilder::build(Multiplicity mult) const {
  check_multiplicity(mult, records_.size());
  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  EstimatedModel m;
  m.disc = disc_;
  m.gamma = gamma_;
  m.horizon = horizon_;
  m.cells = disc_.cell_count();
  m.offsets = offsets_;
  m.successor = successor_;

  const std::size_t n_sa = m.cells * kNumActions;
  std::vector<double> slot_count(successor_.size(), 0.0);
  std::vector<double> trans_count(n_sa, 0.0), reward_sum(n_sa, 0.0), reward_count(n_sa, 0.0);
  std::vector<double> init_count(m.cells, 0.0);
  double init_total = 0.0;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const double w = mult_at(mult, i);
    if (w == 0.0) continue;
    init_count[initial_cell_[i]] += w;
    init_total += w;
    for (const Record &rec : records_[i]) {
      reward_sum[rec.sa] += w * rec.reward;
      reward_count[rec.sa] += w;
      if (rec.key != kNone) {
        slot_count[rec.key] += w;
        trans_count[rec.sa] += w;
      }
    }
  }
  if (init_total == 0.0) throw EstimatorError("build_model: empty sample");

  m.probability.assign(successor_.size(), 0.0);
  m.reward.assign(n_sa, kUnvisitedReward);
  m.visited.assign(n_sa, 0);
  for (std::size_t k = 0; k < n_sa; ++k) {
    if (reward_count[k] == 0.0) continue;
    m.reward[k] = reward_sum[k] / reward_count[k];
    // 2: reward seen only at a truncated tail, so the pair self-loops.
    m.visited[k] = trans_count[k] > 0.0 ? 1 : 2;
    if (trans_count[k] > 0.0)
      for (std::uint32_t s = offsets_[k]; s < offsets_[k + 1]; ++s) m.probability[s] = slot_count[s] / trans_count[k];
  }
  for (std::uint32_t c = 0; c < m.cells; ++c)
    if (init_count[c] > 0.0) {
      m.initial_cells.push_back(c);
      m.initial_probability.push_back(init_count[c] / init_total);
    }
  return m;
}

EstimatedModel build_model(const Dataset &data, const StateDiscretizer &disc, double gamma, int horizon) {
  if (data.empty()) throw std::invalid_argument("build_model: empty dataset");
  return ModelBuilder(data, disc, gamma, horizon).build();
}

// ---------------------------------------------------------------------------
// Dynamic programming in the estimated model

ModelValueFunctions::ModelValueFunctions(const EstimatedModel &model, const DiscretePolicy &pi_theta)
    : disc_(model.disc), horizon_(model.horizon), gamma_(model.gamma) {
  const std::size_t cells = model.cells;
  active_index_.assign(cells, -1);
  std::vector<std::uint32_t> active;
  for (std::uint32_t c = 0; c < cells; ++c) {
    bool any = false;
    for (std::size_t a = 0; a < kNumActions; ++a) any = any || model.visited[model.sa(c, a)] != 0;
    if (any) {
      active_index_[c] = static_cast<std::int32_t>(active.size());
      active.push_back(c);
    }
  }
  for (std::uint32_t c : model.initial_cells)
    if (active_index_[c] < 0) {
      active_index_[c] = static_cast<std::int32_t>(active.size());
      active.push_back(c);
    }
  active_count_ = active.size();

  // Successor rows: >= 0 active row, -1 terminal, -2 inactive cell.
  std::vector<std::int32_t> succ_row(model.successor.size());
  for (std::size_t s = 0; s < model.successor.size(); ++s) {
    const std::uint32_t next = model.successor[s];
    succ_row[s] = next == model.terminal() ? -1 : (active_index_[next] >= 0 ? active_index_[next] : -2);
  }
  std::vector<ActionProbs> pi(active_count_);
  for (std::size_t r = 0; r < active_count_; ++r) pi[r] = pi_theta.probs(disc_.center(active[r]));

  const std::size_t A = active_count_;
  const auto H = static_cast<std::size_t>(horizon_);
  q_.assign(H * A * kNumActions, 0.0);
  v_.assign((H + 1) * A, 0.0);
  for (std::size_t t = H; t-- > 0;) {
    const double *v_next = v_.data() + (t + 1) * A;
    const double inactive_next = unvisited_value(static_cast<int>(t) + 1);
    double *q_t = q_.data() + t * A * kNumActions;
    double *v_t = v_.data() + t * A;
    for (std::size_t r = 0; r < A; ++r) {
      const std::uint32_t c = active[r];
      double v = 0.0;
      for (std::size_t a = 0; a < kNumActions; ++a) {
        const std::size_t k = model.sa(c, a);
        double future = 0.0;
        if (model.visited[k] == 1) {
          for (std::uint32_t s = model.offsets[k]; s < model.offsets[k + 1]; ++s) {
            const double p = model.probability[s];
            if (p == 0.0) continue;
            const std::int32_t row = succ_row[s];
            future += p * (row >= 0 ? v_next[row] : (row == -1 ? 0.0 : inactive_next));
          }
        } else {
          future = v_next[r];
        }
        const double qa = model.reward[k] + gamma_ * future;
        q_t[r * kNumActions + a] = qa;
        v += pi[r][a] * qa;
      }
      v_t[r] = v;
    }
  }
  for (std::size_t k = 0; k < model.initial_cells.size(); ++k)
    start_value_ += model.initial_probability[k] * v_[static_cast<std::size_t>(active_index_[model.initial_cells[k]])];
}

ModelValueFunctions ModelValueFunctions::zero(const StateDiscretizer &disc, int horizon) {
  ModelValueFunctions vf(disc, horizon);
  vf.active_index_.assign(disc.cell_count(), -1);
  vf.zero_ = true;
  return vf;
}

double ModelValueFunctions::unvisited_value(int t) const {
  if (zero_) return 0.0;
  const int remaining = horizon_ - t;
  if (remaining <= 0) return 0.0;
  if (gamma_ == 1.0) return kUnvisitedReward * remaining;
  return kUnvisitedReward * (1.0 - std::pow(gamma_, remaining)) / (1.0 - gamma_);
}

double ModelValueFunctions::q(int t, std::uint32_t cell, std::size_t a) const {
  if (t >= horizon_) return 0.0;
  const std::int32_t r = active_index_[cell];
  if (r < 0) return unvisited_value(t);
  return q_[(static_cast<std::size_t>(t) * active_count_ + static_cast<std::size_t>(r)) * kNumActions + a];
}

double ModelValueFunctions::v(int t, std::uint32_t cell) const {
  if (t >= horizon_) return 0.0;
  const std::int32_t r = active_index_[cell];
  if (r < 0) return unvisited_value(t);
  return v_[static_cast<std::size_t>(t) * active_count_ + static_cast<std::size_t>(r)];
}

ModelValueFunctions model_value_functions(const EstimatedModel &model, const DiscretePolicy &pi_theta) {
  return ModelValueFunctions(model, pi_theta);
}

double mb_expected_value(const EstimatedModel &model, const DiscretePolicy &pi_theta) {
  return ModelValueFunctions(model, pi_theta).start_value();
}

double mb_estimate(const EstimatedModel &model, const DiscretePolicy &pi_theta, int rollouts, Rng &rng) {
  if (rollouts < 1) throw std::invalid_argument("mb_estimate: rollouts must be >= 1");
  if (model.initial_cells.empty()) throw EstimatorError("mb_estimate: model has no start distribution");
  double total = 0.0;
  std::vector<double> slot_probs;
  for (int n = 0; n < rollouts; ++n) {
    std::uint32_t cell = model.initial_cells[rng.categorical(model.initial_probability)];
    double g = 0.0, discount = 1.0;
    for (int t = 0; t < model.horizon; ++t) {
      const std::size_t a = rng.categorical(pi_theta.probs(model.disc.center(cell)));
      const std::size_t k = model.sa(cell, a);
      g += discount * model.reward[k];
      discount *= model.gamma;
      if (model.visited[k] != 1) continue; // self-loop
      slot_probs.assign(model.probability.begin() + model.offsets[k], model.probability.begin() + model.offsets[k + 1]);
      const std::uint32_t next = model.successor[model.offsets[k] + rng.categorical(slot_probs)];
      if (next == model.terminal()) break;
      cell = next;
    }
    total += g;
  }
  return total / rollouts;
}

double wdr_estimate(const ImportanceWeights &weights, const Dataset &data, const ModelValueFunctions &vf,
                    double gamma) {
  const double pdwis = pdwis_estimate(weights, data, gamma);
  double control = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double m = weights.multiplicity[i];
    if (m == 0.0) continue;
    const Trajectory &traj = data.trajectories[i];
    double discount = 1.0, sum = 0.0;
    for (std::size_t t = 0; t < traj.size(); ++t) {
      const Step &s = traj.steps[t];
      const int ti = static_cast<int>(t);
      const double w = weights.weight(i, ti);
      const double w_prev = weights.weight(i, ti - 1);
      sum += discount * (w * vf.q(ti, s.state, s.action) - w_prev * vf.v(ti, s.state));
      discount *= gamma;
    }
    control += m * sum;
  }
  return pdwis - control;
}

// ---------------------------------------------------------------------------

TvDistance tv_distance_detail(const DiscretePolicy &pib_hat, const DiscretePolicy &pi_theta, const Dataset &test) {
  if (test.empty()) throw std::invalid_argument("tv_distance: empty dataset");
  TvDistance out;
  std::size_t count = 0;
  for (const Trajectory &traj : test.trajectories)
    for (const Step &s : traj.steps) {
      const ActionProbs p = pib_hat.probs(s.state);
      const ActionProbs q = pi_theta.probs(s.state);
      double d = 0.0;
      for (std::size_t a = 0; a < kNumActions; ++a) d += std::abs(p[a] - q[a]);
      out.sum += 0.5 * d;
      ++count;
    }
  out.mean = out.sum / static_cast<double>(count);
  return out;
}

double tv_distance(const DiscretePolicy &pib_hat, const DiscretePolicy &pi_theta, const Dataset &test) {
  return tv_distance_detail(pib_hat, pi_theta, test).mean;
}

} // namespace safeeval

namespace safeeval {

EvaluationSuite::EvaluationSuite(const Dataset &test, PolicyPtr pi_theta, const OpeSettings &settings)
    : test_(test), pi_(std::move(pi_theta)), settings_(settings), behavior_disc_(settings.behavior_bins),
      target_(action_probabilities(*pi_, test)),
      model_builder_(test, StateDiscretizer(settings.model_bins), settings.gamma, settings.horizon) {
  if (test.empty()) throw std::invalid_argument("EvaluationSuite: empty test set");
  cells_.reserve(test.size());
  for (const Trajectory &traj : test.trajectories) {
    std::vector<std::uint32_t> row;
    row.reserve(traj.size());
    for (const Step &s : traj.steps) row.push_back(behavior_disc_.cell(s.state));
    cells_.push_back(std::move(row));
  }
  if (!settings.wdr_refit_model) wdr_vf_.emplace(model_builder_.build(), *pi_);
}

EstimatedBehaviorPolicy EvaluationSuite::behavior_policy() const {
  return estimate_behavior_policy(test_, behavior_disc_, settings_.alpha);
}

ImportanceWeights EvaluationSuite::weights(Multiplicity mult) const {
  EstimatedBehaviorPolicy pib(behavior_disc_, settings_.alpha);
  for (std::size_t i = 0; i < test_.size(); ++i) {
    const std::uint64_t m = mult.empty() ? 1 : mult[i];
    if (m == 0) continue;
    const Trajectory &traj = test_.trajectories[i];
    for (std::size_t t = 0; t < traj.size(); ++t) pib.add(cells_[i][t], traj.steps[t].action, m);
  }
  StepProbTable behavior(test_.size());
  for (std::size_t i = 0; i < test_.size(); ++i) {
    const Trajectory &traj = test_.trajectories[i];
    behavior[i].resize(traj.size());
    for (std::size_t t = 0; t < traj.size(); ++t)
      behavior[i][t] = pib.cell_probs(cells_[i][t])[traj.steps[t].action.index];
  }
  return compute_weights(target_, behavior, mult);
}

double EvaluationSuite::wis(Multiplicity mult) const { return wis_estimate(weights(mult), test_, settings_.gamma); }

double EvaluationSuite::pdwis(Multiplicity mult) const {
  return pdwis_estimate(weights(mult), test_, settings_.gamma);
}

double EvaluationSuite::mb(Multiplicity mult) const {
  const EstimatedModel model = model_builder_.build(mult);
  if (settings_.mb_rollouts <= 0) return mb_expected_value(model, *pi_);
  // Seed from the sample itself so the result does not depend on call order.
  std::uint64_t seed = 0x5eed;
  for (std::size_t i = 0; i < mult.size(); ++i) seed = mix_seed(seed ^ (mult[i] + 0x9e37 * i));
  Rng rng(seed);
  return mb_estimate(model, *pi_, settings_.mb_rollouts, rng);
}

double EvaluationSuite::wdr(Multiplicity mult) const {
  const ImportanceWeights w = weights(mult);
  if (wdr_vf_) return wdr_estimate(w, test_, *wdr_vf_, settings_.gamma);
  const ModelValueFunctions vf(model_builder_.build(mult), *pi_);
  return wdr_estimate(w, test_, vf, settings_.gamma);
}

} // namespace safeeval
