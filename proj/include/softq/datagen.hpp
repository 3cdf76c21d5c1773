#ifndef SOFTQ_DATAGEN_HPP_
#define SOFTQ_DATAGEN_HPP_

#include <optional>
#include <string>

#include "softq/policy.hpp"

namespace softq {

struct BehaviorSpec {
  std::string name = "uniform";  // "uniform" | "stale"
  double noise_scale = 0.0;
  std::uint64_t seed = 0;
  friend bool operator==(const BehaviorSpec&, const BehaviorSpec&) = default;
};

TabularPolicy make_behavior_policy(const TokenMDP& mdp,
                                   const BehaviorSpec& spec);

// Parameters of a process-reward augmentation pass, recorded so augmented
// datasets stay regenerable.
struct ProcessSpec {
  std::string segmenter = "per-token";  // "per-token" | "width"
  int width = 2;
  int n_rollouts = 20;
  std::uint64_t seed = 0;
  bool correct_full_per_segment = false;
  friend bool operator==(const ProcessSpec&, const ProcessSpec&) = default;
};

struct DatasetManifest {
  int format_version = 1;
  EnvSpec env;
  BehaviorSpec behavior;
  int n_prompts = 0;
  int k_per_prompt = 0;
  std::uint64_t seed = 0;
  // held-out prompts, disjoint from the training draws
  std::vector<std::vector<int>> test_prompts;
  std::optional<ProcessSpec> process;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Trajectory> trajectories;
};

// n_prompts draws from d0, k rollouts each under the behavior policy, with
// outcome labels from the environment. Per-prompt seeds are derived from the
// dataset seed, so results are identical for any thread count. When
// n_test_prompts > 0, that many additional distinct prompts are drawn,
// excluded from the training draws, and recorded in the manifest.
Dataset generate_dataset(const TokenMDP& mdp, const BehaviorSpec& behavior,
                         int n_prompts, int k_per_prompt, std::uint64_t seed,
                         int threads = 1, int n_test_prompts = 0);

// Same pipeline under a caller-supplied policy; the manifest records the
// given spec verbatim.
Dataset generate_dataset(const TokenMDP& mdp, const Policy& behavior_policy,
                         const BehaviorSpec& behavior, int n_prompts,
                         int k_per_prompt, std::uint64_t seed, int threads = 1,
                         int n_test_prompts = 0);

std::string dataset_to_string(const Dataset& dataset);
Dataset dataset_from_string(const std::string& text);
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

// Distinct prompts, lexicographically sorted.
std::vector<std::vector<int>> unique_prompts(const Dataset& dataset);

// Non-terminal states occurring at least `min_count` times across the
// trajectories, in first-seen order.
std::vector<State> states_visited_at_least(
    const std::vector<Trajectory>& trajectories, int min_count);

}  // namespace softq

#endif  // SOFTQ_DATAGEN_HPP_
