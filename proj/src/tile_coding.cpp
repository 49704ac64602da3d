#include "safeeval/tile_coding.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace safeeval {

using nlohmann::json;

TileCoder::TileCoder(int num_tilings, int tiles_per_dim)
    : num_tilings_(num_tilings), tiles_per_dim_(tiles_per_dim) {
  if (num_tilings < 1 || num_tilings > FeatureSet::kMaxTilings)
    throw std::invalid_argument("num_tilings must be in [1, 32]");
  if (tiles_per_dim < 1) throw std::invalid_argument("tiles_per_dim must be positive");
}

std::size_t TileCoder::feature_count() const {
  const auto t = static_cast<std::size_t>(tiles_per_dim_);
  return static_cast<std::size_t>(num_tilings_) * t * t;
}

FeatureSet TileCoder::features(const State &s) const {
  const double p = std::clamp(s.position, kMinPosition, kMaxPosition);
  const double v = std::clamp(s.velocity, -kMaxSpeed, kMaxSpeed);
  const double tiles = tiles_per_dim_;
  const double x = (p - kMinPosition) / (kMaxPosition - kMinPosition) * tiles;
  const double y = (v + kMaxSpeed) / (2.0 * kMaxSpeed) * tiles;
  const int last = tiles_per_dim_ - 1;
  const auto per_tiling = static_cast<std::uint32_t>(tiles_per_dim_ * tiles_per_dim_);

  FeatureSet f;
  f.count = num_tilings_;
  for (int i = 0; i < num_tilings_; ++i) {
    const double offset = static_cast<double>(i) / num_tilings_;
    const int ix = std::min(static_cast<int>(std::floor(x + offset)), last);
    const int iy = std::min(static_cast<int>(std::floor(y + offset)), last);
    f.index[static_cast<std::size_t>(i)] =
        static_cast<std::uint32_t>(i) * per_tiling + static_cast<std::uint32_t>(ix * tiles_per_dim_ + iy);
  }
  return f;
}

double LinearQ::value(const FeatureSet &f, std::size_t a) const {
  const double *w = weights_.data() + a * features_;
  double sum = 0.0;
  for (std::uint32_t i : f) sum += w[i];
  return sum;
}

ActionProbs LinearQ::values(const FeatureSet &f) const {
  ActionProbs q{};
  for (std::size_t a = 0; a < kNumActions; ++a) q[a] = value(f, a);
  return q;
}

ActionProbs q_values(const LinearQ &q, const TileCoder &coder, const State &s) {
  return q.values(coder.features(s));
}

ActionProbs mixed_softmax(const ActionProbs &logits, double temperature, double uniform_mix) {
  const double hi = *std::max_element(logits.begin(), logits.end());
  ActionProbs p{};
  double z = 0.0;
  for (std::size_t a = 0; a < kNumActions; ++a) {
    p[a] = std::exp((logits[a] - hi) / temperature);
    z += p[a];
  }
  const double floor = uniform_mix / static_cast<double>(kNumActions);
  for (double &x : p) x = (1.0 - uniform_mix) * (x / z) + floor;
  return p;
}

SoftmaxPolicy::SoftmaxPolicy(TileCoder coder, LinearQ weights, double temperature, double uniform_mix)
    : coder_(coder), weights_(std::move(weights)), temperature_(temperature), uniform_mix_(uniform_mix) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (!(uniform_mix >= 0.0 && uniform_mix < 1.0)) throw std::invalid_argument("uniform_mix must be in [0, 1)");
  if (weights_.feature_count() != coder_.feature_count())
    throw std::invalid_argument("weight shape does not match the tile coder");
}

ActionProbs SoftmaxPolicy::probs(const State &s) const {
  return mixed_softmax(logits(s), temperature_, uniform_mix_);
}

GreedyQPolicy::GreedyQPolicy(TileCoder coder, LinearQ q, double soften)
    : coder_(coder), q_(std::move(q)), soften_(soften) {
  if (!(soften >= 0.0 && soften < 1.0)) throw std::invalid_argument("soften must be in [0, 1)");
  if (q_.feature_count() != coder_.feature_count())
    throw std::invalid_argument("weight shape does not match the tile coder");
}

ActionProbs GreedyQPolicy::probs(const State &s) const {
  return softened_one_hot(argmax_lowest(q_.values(coder_.features(s))), soften_);
}

ActionProbs policy_probs(const SoftmaxPolicy &policy, const State &s) { return policy.probs(s); }

GreedyQPolicy greedy_policy(const LinearQ &q, const TileCoder &coder, double soften) {
  return GreedyQPolicy(coder, q, soften);
}

namespace {

void write_rows(std::ostream &out, const LinearQ &w) {
  for (std::size_t a = 0; a < kNumActions; ++a) {
    const auto row = w.row(a);
    out << json(std::vector<double>(row.begin(), row.end())).dump() << '\n';
  }
}

} // namespace

void write_policy_snapshot(std::ostream &out, const SoftmaxPolicy &policy) {
  json header = {{"kind", "softmax"},
                 {"num_tilings", policy.coder().num_tilings()},
                 {"tiles_per_dim", policy.coder().tiles_per_dim()},
                 {"temperature", policy.temperature()},
                 {"uniform_mix", policy.uniform_mix()}};
  out << header.dump() << '\n';
  write_rows(out, policy.weights());
}

void write_policy_snapshot(std::ostream &out, const GreedyQPolicy &policy) {
  json header = {{"kind", "greedy_q"},
                 {"num_tilings", policy.coder().num_tilings()},
                 {"tiles_per_dim", policy.coder().tiles_per_dim()},
                 {"temperature", nullptr},
                 {"uniform_mix", policy.soften()}};
  out << header.dump() << '\n';
  write_rows(out, policy.q());
}

PolicyPtr read_policy_snapshot(std::istream &in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("policy snapshot: missing header");
  const json header = json::parse(line);
  const TileCoder coder(header.at("num_tilings").get<int>(), header.at("tiles_per_dim").get<int>());
  LinearQ w(coder.feature_count());
  for (std::size_t a = 0; a < kNumActions; ++a) {
    if (!std::getline(in, line)) throw std::runtime_error("policy snapshot: missing weight row");
    const auto row = json::parse(line).get<std::vector<double>>();
    if (row.size() != coder.feature_count()) throw std::runtime_error("policy snapshot: bad row length");
    std::copy(row.begin(), row.end(), w.row(a).begin());
  }
  const std::string kind = header.at("kind").get<std::string>();
  if (kind == "softmax")
    return std::make_shared<SoftmaxPolicy>(coder, std::move(w), header.at("temperature").get<double>(),
                                           header.at("uniform_mix").get<double>());
  if (kind == "greedy_q")
    return std::make_shared<GreedyQPolicy>(coder, std::move(w), header.at("uniform_mix").get<double>());
  throw std::runtime_error("policy snapshot: unknown kind '" + kind + "'");
}

} // namespace safeeval
