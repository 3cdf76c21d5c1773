#ifndef SOFTQ_MDP_HPP_
#define SOFTQ_MDP_HPP_

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "softq/rng.hpp"

namespace softq {

// Ordinary tokens are 0..size-1; the terminal action is the id one past them.
struct Vocab {
  int size = 0;
  int eos_id = 0;
  friend bool operator==(const Vocab&, const Vocab&) = default;
};

inline Vocab make_vocab(int size) { return Vocab{size, size}; }

struct State {
  std::vector<int> prompt;
  std::vector<int> generated;
  bool terminal = false;
  friend bool operator==(const State&, const State&) = default;
};

struct StateHash {
  std::size_t operator()(const State& s) const noexcept;
};

// One offline episode. Step h pairs actions[h] with rewards[h] and
// behavior_logprobs[h]; segment fields stay empty until process-reward
// augmentation fills them.
struct Trajectory {
  std::vector<int> prompt;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<double> behavior_logprobs;
  bool correct = false;
  std::vector<int> segment_boundaries;
  std::vector<double> process_rewards;

  int n_steps() const { return static_cast<int>(actions.size()); }
  double total_reward() const;
};

// States s_0..s_{H+1} visited by the trajectory; only the last is terminal.
std::vector<State> trajectory_states(const Trajectory& traj);

struct EnvSpec {
  std::string name;     // "modchain" | "treebandit"
  int base = 0;         // modchain
  int prompt_len = 0;   // modchain
  int vocab_size = 0;   // treebandit
  int depth = 0;        // treebandit
  std::uint64_t seed = 0;
  friend bool operator==(const EnvSpec&, const EnvSpec&) = default;
};

// Deterministic token-appending environment. step() is a pure function and
// the reward depends only on (state, action).
class TokenMDP {
 public:
  virtual ~TokenMDP() = default;

  virtual const Vocab& vocab() const = 0;
  virtual int max_steps() const = 0;
  // Number of actions valid at every non-terminal state; includes the
  // terminal action only for environments that use one.
  virtual int action_count() const = 0;
  virtual std::pair<State, double> step(const State& s, int action) const = 0;
  virtual std::vector<int> sample_prompt(Rng& rng) const = 0;
  virtual std::vector<std::vector<int>> enumerate_prompts() const = 0;
  virtual bool is_correct(const Trajectory& traj) const = 0;
  virtual EnvSpec spec() const = 0;

  State initial_state(std::vector<int> prompt) const;
};

// Chain-sum environment: a response is correct iff its tokens are the running
// prefix sums of the prompt mod `base`, followed by the terminal action.
// Reward 1 at the terminal action of a correct response, 0 elsewhere.
class ModChain : public TokenMDP {
 public:
  ModChain(int base, int prompt_len, std::uint64_t seed);

  const Vocab& vocab() const override { return vocab_; }
  int max_steps() const override { return prompt_len_ + 1; }
  int action_count() const override { return vocab_.size + 1; }
  std::pair<State, double> step(const State& s, int action) const override;
  std::vector<int> sample_prompt(Rng& rng) const override;
  std::vector<std::vector<int>> enumerate_prompts() const override;
  bool is_correct(const Trajectory& traj) const override;
  EnvSpec spec() const override;

  std::vector<int> expected_chain(const std::vector<int>& prompt) const;

 private:
  int base_;
  int prompt_len_;
  std::uint64_t seed_;
  Vocab vocab_;
};

// Fixed-horizon tree: every length-`depth` action sequence is terminal and
// pays a reward drawn once from seeded uniform [0,1], indexed by the path.
// No terminal action; the prompt is always empty.
class TreeBandit : public TokenMDP {
 public:
  TreeBandit(int vocab_size, int depth, std::uint64_t seed);
  TreeBandit(int vocab_size, int depth, std::vector<double> leaf_rewards);

  const Vocab& vocab() const override { return vocab_; }
  int max_steps() const override { return depth_; }
  int action_count() const override { return vocab_.size; }
  std::pair<State, double> step(const State& s, int action) const override;
  std::vector<int> sample_prompt(Rng&) const override { return {}; }
  std::vector<std::vector<int>> enumerate_prompts() const override;
  bool is_correct(const Trajectory& traj) const override;
  EnvSpec spec() const override;

  double leaf_reward(const std::vector<int>& path) const;
  const std::vector<double>& leaf_rewards() const { return rewards_; }

 private:
  int depth_;
  std::uint64_t seed_;
  Vocab vocab_;
  std::vector<double> rewards_;  // lexicographic by path
};

std::unique_ptr<TokenMDP> make_modchain(int base, int prompt_len,
                                        std::uint64_t seed);
std::unique_ptr<TokenMDP> make_treebandit(int vocab_size, int depth,
                                          std::uint64_t seed);
std::unique_ptr<TokenMDP> make_env(const EnvSpec& spec);

class Policy;

// Samples actions from `policy` until the terminal state, recording rewards
// and behavior log-probs. Throws if the policy's action distribution does not
// sum to 1 within 1e-9.
Trajectory rollout(const TokenMDP& mdp, const Policy& policy,
                   const std::vector<int>& prompt, Rng& rng);

// Resumes sampling from a mid-episode state; used by prefix rollouts.
Trajectory complete_from(const TokenMDP& mdp, const Policy& policy,
                         const Trajectory& prefix, int prefix_steps, Rng& rng);

// Breadth-first closure of non-terminal states over all prompts. Throws
// IoError once more than `cap` states are expanded.
std::vector<State> enumerate_nonterminal_states(const TokenMDP& mdp,
                                                std::size_t cap = 1'000'000);

// Enforces the Trajectory invariants; throws std::invalid_argument.
void validate_trajectory(const Trajectory& traj, const TokenMDP& mdp);

}  // namespace softq

#endif  // SOFTQ_MDP_HPP_
