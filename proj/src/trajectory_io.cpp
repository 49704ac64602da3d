#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "safeeval/datasource.hpp"

namespace safeeval {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;
constexpr const char *kEnvName = "mountaincar-mod";

json trajectory_to_json(const Trajectory &traj) {
  json steps = json::array();
  for (const Step &s : traj.steps) {
    json prob = s.behavior_prob ? json(*s.behavior_prob) : json(nullptr);
    steps.push_back(json::array({s.state.position, s.state.velocity, s.action.index, s.reward, prob}));
  }
  return json{{"steps", std::move(steps)}, {"terminated", traj.terminated}};
}

Trajectory trajectory_from_json(const json &j) {
  Trajectory traj;
  traj.terminated = j.at("terminated").get<bool>();
  for (const json &row : j.at("steps")) {
    if (!row.is_array() || row.size() != 5) throw std::runtime_error("dataset: step must have 5 fields");
    Step s;
    s.state = {row[0].get<double>(), row[1].get<double>()};
    const int a = row[2].get<int>();
    if (a < 0 || a >= static_cast<int>(kNumActions)) throw std::runtime_error("dataset: bad action index");
    s.action = Action{static_cast<std::size_t>(a)};
    s.reward = row[3].get<double>();
    if (!row[4].is_null()) s.behavior_prob = row[4].get<double>();
    traj.steps.push_back(s);
  }
  if (traj.steps.empty()) throw std::runtime_error("dataset: empty trajectory");
  return traj;
}

} // namespace

void write_dataset(std::ostream &out, const Dataset &data) {
  const json header = {{"version", kFormatVersion},
                       {"env", kEnvName},
                       {"action_repeat", data.meta.env.action_repeat},
                       {"max_macro_steps", data.meta.env.max_macro_steps},
                       {"seed", data.meta.source_seed},
                       {"goal_position", data.meta.env.goal_position},
                       {"behavior_policy_id", data.meta.behavior_policy_id},
                       {"collection_time", data.meta.collection_time}};
  out << header.dump() << '\n';
  for (const Trajectory &t : data.trajectories) out << trajectory_to_json(t).dump() << '\n';
}

Dataset read_dataset(std::istream &in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset: missing header line");
  const json header = json::parse(line);
  if (header.at("version").get<int>() != kFormatVersion) throw std::runtime_error("dataset: unsupported version");
  if (header.at("env").get<std::string>() != kEnvName) throw std::runtime_error("dataset: unknown env");

  Dataset data;
  data.meta.env.action_repeat = header.at("action_repeat").get<int>();
  data.meta.env.max_macro_steps = header.at("max_macro_steps").get<int>();
  data.meta.source_seed = header.at("seed").get<std::uint64_t>();
  data.meta.env.goal_position = header.value("goal_position", data.meta.env.goal_position);
  data.meta.behavior_policy_id = header.value("behavior_policy_id", std::string{});
  data.meta.collection_time = header.value("collection_time", std::uint64_t{0});
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    data.trajectories.push_back(trajectory_from_json(json::parse(line)));
  }
  return data;
}

void save_dataset(const std::string &path, const Dataset &data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_dataset(out, data);
}

Dataset load_dataset(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_dataset(in);
}

} // namespace safeeval
