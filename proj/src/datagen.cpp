#include "softq/datagen.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "softq/errors.hpp"
#include "softq/parallel.hpp"

namespace softq {

using nlohmann::json;

TabularPolicy make_behavior_policy(const TokenMDP& mdp,
                                   const BehaviorSpec& spec) {
  if (spec.name == "uniform") return TabularPolicy(mdp.action_count());
  if (spec.name == "stale") {
    return make_stale_policy(mdp, spec.seed, spec.noise_scale);
  }
  throw std::invalid_argument("unknown behavior policy: " + spec.name);
}

Dataset generate_dataset(const TokenMDP& mdp, const BehaviorSpec& behavior,
                         int n_prompts, int k_per_prompt, std::uint64_t seed,
                         int threads, int n_test_prompts) {
  const TabularPolicy policy = make_behavior_policy(mdp, behavior);
  return generate_dataset(mdp, policy, behavior, n_prompts, k_per_prompt, seed,
                          threads, n_test_prompts);
}

Dataset generate_dataset(const TokenMDP& mdp, const Policy& behavior_policy,
                         const BehaviorSpec& behavior, int n_prompts,
                         int k_per_prompt, std::uint64_t seed, int threads,
                         int n_test_prompts) {
  if (n_prompts < 1) {
    throw std::invalid_argument("generate_dataset: n_prompts must be >= 1");
  }
  if (k_per_prompt < 1) {
    throw std::invalid_argument("generate_dataset: k_per_prompt must be >= 1");
  }
  if (n_test_prompts < 0) {
    throw std::invalid_argument("generate_dataset: n_test_prompts must be >= 0");
  }
  Dataset dataset;
  dataset.manifest.env = mdp.spec();
  dataset.manifest.behavior = behavior;
  dataset.manifest.n_prompts = n_prompts;
  dataset.manifest.k_per_prompt = k_per_prompt;
  dataset.manifest.seed = seed;

  Rng prompt_rng = make_rng(seed ^ splitmix64(mdp.spec().seed), 0);
  std::vector<std::vector<int>> prompts(n_prompts);
  for (auto& p : prompts) p = mdp.sample_prompt(prompt_rng);

  if (n_test_prompts > 0) {
    std::set<std::vector<int>> train_set(prompts.begin(), prompts.end());
    std::set<std::vector<int>> test_set;
    long attempts = 0;
    const long attempt_cap = 1000L * n_test_prompts + 1000L;
    while (static_cast<int>(test_set.size()) < n_test_prompts) {
      if (++attempts > attempt_cap) {
        throw IoError("generate_dataset: prompt space too small for a "
                      "disjoint test split");
      }
      std::vector<int> p = mdp.sample_prompt(prompt_rng);
      if (!train_set.count(p)) test_set.insert(std::move(p));
    }
    dataset.manifest.test_prompts.assign(test_set.begin(), test_set.end());
  }

  dataset.trajectories.resize(static_cast<std::size_t>(n_prompts) *
                              static_cast<std::size_t>(k_per_prompt));
  parallel_for(prompts.size(), threads, [&](std::size_t i) {
    Rng rng = make_rng(seed, i + 1);
    for (int j = 0; j < k_per_prompt; ++j) {
      dataset.trajectories[i * k_per_prompt + j] =
          rollout(mdp, behavior_policy, prompts[i], rng);
    }
  });
  return dataset;
}

namespace {

json to_json(const EnvSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["seed"] = spec.seed;
  if (spec.name == "modchain") {
    j["base"] = spec.base;
    j["prompt_len"] = spec.prompt_len;
  } else {
    j["vocab_size"] = spec.vocab_size;
    j["depth"] = spec.depth;
  }
  return j;
}

EnvSpec env_from_json(const json& j) {
  EnvSpec spec;
  spec.name = j.at("name").get<std::string>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  if (spec.name == "modchain") {
    spec.base = j.at("base").get<int>();
    spec.prompt_len = j.at("prompt_len").get<int>();
  } else {
    spec.vocab_size = j.at("vocab_size").get<int>();
    spec.depth = j.at("depth").get<int>();
  }
  return spec;
}

json to_json(const BehaviorSpec& spec) {
  json j;
  j["name"] = spec.name;
  if (spec.name == "stale") {
    j["noise_scale"] = spec.noise_scale;
    j["seed"] = spec.seed;
  }
  return j;
}

BehaviorSpec behavior_from_json(const json& j) {
  BehaviorSpec spec;
  spec.name = j.at("name").get<std::string>();
  if (j.contains("noise_scale")) {
    spec.noise_scale = j.at("noise_scale").get<double>();
  }
  if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
  return spec;
}

json to_json(const ProcessSpec& spec) {
  json j;
  j["segmenter"] = spec.segmenter;
  if (spec.segmenter == "width") j["width"] = spec.width;
  j["n_rollouts"] = spec.n_rollouts;
  j["seed"] = spec.seed;
  j["correct_full_per_segment"] = spec.correct_full_per_segment;
  return j;
}

ProcessSpec process_from_json(const json& j) {
  ProcessSpec spec;
  spec.segmenter = j.at("segmenter").get<std::string>();
  if (j.contains("width")) spec.width = j.at("width").get<int>();
  spec.n_rollouts = j.at("n_rollouts").get<int>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.correct_full_per_segment = j.at("correct_full_per_segment").get<bool>();
  return spec;
}

template <typename T>
std::vector<T> required_array(const json& j, const char* field, int line) {
  if (!j.contains(field)) {
    throw ParseError(std::string("record missing field '") + field + "'", line);
  }
  return j.at(field).get<std::vector<T>>();
}

}  // namespace

std::string dataset_to_string(const Dataset& dataset) {
  std::string out;
  json manifest;
  manifest["format_version"] = dataset.manifest.format_version;
  manifest["env"] = to_json(dataset.manifest.env);
  manifest["behavior"] = to_json(dataset.manifest.behavior);
  manifest["n"] = dataset.manifest.n_prompts;
  manifest["k"] = dataset.manifest.k_per_prompt;
  manifest["seed"] = dataset.manifest.seed;
  if (!dataset.manifest.test_prompts.empty()) {
    manifest["test_prompts"] = dataset.manifest.test_prompts;
  }
  if (dataset.manifest.process) {
    manifest["process"] = to_json(*dataset.manifest.process);
  }
  out += manifest.dump();
  out += '\n';
  for (const Trajectory& traj : dataset.trajectories) {
    json j;
    j["prompt"] = traj.prompt;
    j["actions"] = traj.actions;
    j["rewards"] = traj.rewards;
    j["behavior_logprobs"] = traj.behavior_logprobs;
    j["correct"] = traj.correct;
    if (!traj.segment_boundaries.empty()) {
      j["segment_boundaries"] = traj.segment_boundaries;
      j["process_rewards"] = traj.process_rewards;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

Dataset dataset_from_string(const std::string& text) {
  Dataset dataset;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) throw ParseError("missing manifest line", 1);
  ++line_no;
  json manifest;
  try {
    manifest = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad manifest: ") + e.what(), line_no);
  }
  const int version = manifest.at("format_version").get<int>();
  if (version != 1) {
    throw ParseError("unsupported format_version " + std::to_string(version),
                     line_no);
  }
  dataset.manifest.format_version = version;
  dataset.manifest.env = env_from_json(manifest.at("env"));
  dataset.manifest.behavior = behavior_from_json(manifest.at("behavior"));
  dataset.manifest.n_prompts = manifest.at("n").get<int>();
  dataset.manifest.k_per_prompt = manifest.at("k").get<int>();
  dataset.manifest.seed = manifest.at("seed").get<std::uint64_t>();
  if (manifest.contains("test_prompts")) {
    dataset.manifest.test_prompts =
        manifest.at("test_prompts").get<std::vector<std::vector<int>>>();
  }
  if (manifest.contains("process")) {
    dataset.manifest.process = process_from_json(manifest.at("process"));
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad record: ") + e.what(), line_no);
    }
    Trajectory traj;
    traj.prompt = required_array<int>(j, "prompt", line_no);
    traj.actions = required_array<int>(j, "actions", line_no);
    traj.rewards = required_array<double>(j, "rewards", line_no);
    traj.behavior_logprobs =
        required_array<double>(j, "behavior_logprobs", line_no);
    if (!j.contains("correct")) {
      throw ParseError("record missing field 'correct'", line_no);
    }
    traj.correct = j.at("correct").get<bool>();
    if (j.contains("segment_boundaries")) {
      traj.segment_boundaries =
          j.at("segment_boundaries").get<std::vector<int>>();
      traj.process_rewards =
          required_array<double>(j, "process_rewards", line_no);
    }
    dataset.trajectories.push_back(std::move(traj));
  }
  return dataset;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << dataset_to_string(dataset);
  if (!out) throw IoError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  Dataset dataset = dataset_from_string(buf.str());
  std::unique_ptr<TokenMDP> mdp = make_env(dataset.manifest.env);
  for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
    try {
      validate_trajectory(dataset.trajectories[i], *mdp);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), static_cast<int>(i) + 2);
    }
  }
  return dataset;
}

std::vector<std::vector<int>> unique_prompts(const Dataset& dataset) {
  std::vector<std::vector<int>> prompts;
  prompts.reserve(dataset.trajectories.size());
  for (const Trajectory& traj : dataset.trajectories) {
    prompts.push_back(traj.prompt);
  }
  std::sort(prompts.begin(), prompts.end());
  prompts.erase(std::unique(prompts.begin(), prompts.end()), prompts.end());
  return prompts;
}

std::vector<State> states_visited_at_least(
    const std::vector<Trajectory>& trajectories, int min_count) {
  std::unordered_map<State, int, StateHash> counts;
  std::vector<State> order;
  for (const Trajectory& traj : trajectories) {
    std::vector<State> states = trajectory_states(traj);
    states.pop_back();  // terminal
    for (State& s : states) {
      auto [it, inserted] = counts.try_emplace(s, 0);
      if (inserted) order.push_back(s);
      ++it->second;
    }
  }
  std::vector<State> result;
  for (const State& s : order) {
    if (counts.at(s) >= min_count) result.push_back(s);
  }
  return result;
}

}  // namespace softq
