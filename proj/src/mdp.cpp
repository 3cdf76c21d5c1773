#include "softq/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "softq/errors.hpp"
#include "softq/policy.hpp"

namespace softq {

std::size_t StateHash::operator()(const State& s) const noexcept {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= splitmix64(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  };
  mix(s.prompt.size());
  for (int t : s.prompt) mix(static_cast<std::uint64_t>(t));
  mix(s.generated.size());
  for (int t : s.generated) mix(static_cast<std::uint64_t>(t));
  mix(s.terminal ? 1 : 0);
  return static_cast<std::size_t>(h);
}

double Trajectory::total_reward() const {
  double sum = 0.0;
  for (double r : rewards) sum += r;
  return sum;
}

std::vector<State> trajectory_states(const Trajectory& traj) {
  std::vector<State> states;
  states.reserve(traj.actions.size() + 1);
  State s{traj.prompt, {}, false};
  states.push_back(s);
  for (std::size_t h = 0; h < traj.actions.size(); ++h) {
    s.generated.push_back(traj.actions[h]);
    s.terminal = (h + 1 == traj.actions.size());
    states.push_back(s);
  }
  return states;
}

State TokenMDP::initial_state(std::vector<int> prompt) const {
  return State{std::move(prompt), {}, false};
}

namespace {

State append_token(const State& s, int token, bool terminal) {
  State next = s;
  next.generated.push_back(token);
  next.terminal = terminal;
  return next;
}

void check_step_preconditions(const TokenMDP& mdp, const State& s, int action) {
  if (s.terminal) {
    throw std::invalid_argument("step: state is terminal");
  }
  if (action < 0 || action >= mdp.action_count()) {
    throw std::invalid_argument("step: action " + std::to_string(action) +
                                " out of range");
  }
}

}  // namespace

// ---------------------------------------------------------------- ModChain

ModChain::ModChain(int base, int prompt_len, std::uint64_t seed)
    : base_(base), prompt_len_(prompt_len), seed_(seed), vocab_(make_vocab(base)) {
  if (base < 2) throw std::invalid_argument("modchain: base must be >= 2");
  if (prompt_len < 1) {
    throw std::invalid_argument("modchain: prompt_len must be >= 1");
  }
}

std::vector<int> ModChain::expected_chain(const std::vector<int>& prompt) const {
  std::vector<int> chain(prompt.size());
  int acc = 0;
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    acc = (acc + prompt[i]) % base_;
    chain[i] = acc;
  }
  return chain;
}

std::pair<State, double> ModChain::step(const State& s, int action) const {
  check_step_preconditions(*this, s, action);
  const bool capped =
      static_cast<int>(s.generated.size()) + 1 >= max_steps();
  const bool terminal = action == vocab_.eos_id || capped;
  double reward = 0.0;
  if (action == vocab_.eos_id &&
      s.generated == expected_chain(s.prompt)) {
    reward = 1.0;
  }
  return {append_token(s, action, terminal), reward};
}

std::vector<int> ModChain::sample_prompt(Rng& rng) const {
  std::vector<int> prompt(prompt_len_);
  for (int& t : prompt) t = uniform_int(rng, base_);
  return prompt;
}

std::vector<std::vector<int>> ModChain::enumerate_prompts() const {
  double count = std::pow(static_cast<double>(base_), prompt_len_);
  if (count > 1e6) throw IoError("modchain: prompt space too large to enumerate");
  std::vector<std::vector<int>> prompts;
  prompts.reserve(static_cast<std::size_t>(count));
  std::vector<int> cur(prompt_len_, 0);
  while (true) {
    prompts.push_back(cur);
    int i = prompt_len_ - 1;
    while (i >= 0 && ++cur[i] == base_) cur[i--] = 0;
    if (i < 0) break;
  }
  return prompts;
}

bool ModChain::is_correct(const Trajectory& traj) const {
  std::vector<int> expected = expected_chain(traj.prompt);
  expected.push_back(vocab_.eos_id);
  return traj.actions == expected;
}

EnvSpec ModChain::spec() const {
  EnvSpec s;
  s.name = "modchain";
  s.base = base_;
  s.prompt_len = prompt_len_;
  s.seed = seed_;
  return s;
}

// -------------------------------------------------------------- TreeBandit

TreeBandit::TreeBandit(int vocab_size, int depth, std::uint64_t seed)
    : depth_(depth), seed_(seed), vocab_(make_vocab(vocab_size)) {
  if (vocab_size < 2) {
    throw std::invalid_argument("treebandit: vocab_size must be >= 2");
  }
  if (depth < 1) throw std::invalid_argument("treebandit: depth must be >= 1");
  double leaves = std::pow(static_cast<double>(vocab_size), depth);
  if (leaves > 1e7) throw std::invalid_argument("treebandit: tree too large");
  Rng rng = make_rng(seed, 0);
  rewards_.resize(static_cast<std::size_t>(leaves));
  for (double& r : rewards_) r = uniform_unit(rng);
}

TreeBandit::TreeBandit(int vocab_size, int depth, std::vector<double> leaf_rewards)
    : depth_(depth), seed_(0), vocab_(make_vocab(vocab_size)),
      rewards_(std::move(leaf_rewards)) {
  if (vocab_size < 2) {
    throw std::invalid_argument("treebandit: vocab_size must be >= 2");
  }
  if (depth < 1) throw std::invalid_argument("treebandit: depth must be >= 1");
  double leaves = std::pow(static_cast<double>(vocab_size), depth);
  if (rewards_.size() != static_cast<std::size_t>(leaves)) {
    throw std::invalid_argument("treebandit: reward table size mismatch");
  }
}

double TreeBandit::leaf_reward(const std::vector<int>& path) const {
  if (static_cast<int>(path.size()) != depth_) {
    throw std::invalid_argument("treebandit: path length != depth");
  }
  std::size_t index = 0;
  for (int t : path) {
    if (t < 0 || t >= vocab_.size) {
      throw std::invalid_argument("treebandit: token out of range");
    }
    index = index * static_cast<std::size_t>(vocab_.size) +
            static_cast<std::size_t>(t);
  }
  return rewards_[index];
}

std::pair<State, double> TreeBandit::step(const State& s, int action) const {
  check_step_preconditions(*this, s, action);
  const bool terminal = static_cast<int>(s.generated.size()) + 1 == depth_;
  double reward = 0.0;
  if (terminal) {
    std::vector<int> path = s.generated;
    path.push_back(action);
    reward = leaf_reward(path);
  }
  return {append_token(s, action, terminal), reward};
}

std::vector<std::vector<int>> TreeBandit::enumerate_prompts() const {
  return {{}};
}

bool TreeBandit::is_correct(const Trajectory& traj) const {
  return !traj.rewards.empty() && traj.rewards.back() >= 0.5;
}

EnvSpec TreeBandit::spec() const {
  EnvSpec s;
  s.name = "treebandit";
  s.vocab_size = vocab_.size;
  s.depth = depth_;
  s.seed = seed_;
  return s;
}

// -------------------------------------------------------------- factories

std::unique_ptr<TokenMDP> make_modchain(int base, int prompt_len,
                                        std::uint64_t seed) {
  return std::make_unique<ModChain>(base, prompt_len, seed);
}

std::unique_ptr<TokenMDP> make_treebandit(int vocab_size, int depth,
                                          std::uint64_t seed) {
  return std::make_unique<TreeBandit>(vocab_size, depth, seed);
}

std::unique_ptr<TokenMDP> make_env(const EnvSpec& spec) {
  if (spec.name == "modchain") {
    return make_modchain(spec.base, spec.prompt_len, spec.seed);
  }
  if (spec.name == "treebandit") {
    return make_treebandit(spec.vocab_size, spec.depth, spec.seed);
  }
  throw std::invalid_argument("unknown environment: " + spec.name);
}

// ---------------------------------------------------------------- rollout

namespace {

int sample_action(const std::vector<double>& probs, Rng& rng) {
  double total = 0.0;
  for (double p : probs) total += p;
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("rollout: policy probabilities sum to " +
                                std::to_string(total));
  }
  const double u = uniform_unit(rng) * total;
  double acc = 0.0;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    acc += probs[a];
    if (u < acc) return static_cast<int>(a);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

Trajectory rollout(const TokenMDP& mdp, const Policy& policy,
                   const std::vector<int>& prompt, Rng& rng) {
  Trajectory traj;
  traj.prompt = prompt;
  State s = mdp.initial_state(prompt);
  while (!s.terminal) {
    const int a = sample_action(policy.action_probs(s), rng);
    traj.actions.push_back(a);
    traj.behavior_logprobs.push_back(policy.log_prob(s, a));
    auto [next, reward] = mdp.step(s, a);
    traj.rewards.push_back(reward);
    s = std::move(next);
  }
  traj.correct = mdp.is_correct(traj);
  return traj;
}

Trajectory complete_from(const TokenMDP& mdp, const Policy& policy,
                         const Trajectory& prefix, int prefix_steps, Rng& rng) {
  if (prefix_steps < 0 || prefix_steps > prefix.n_steps()) {
    throw std::out_of_range("complete_from: prefix_steps out of range");
  }
  Trajectory traj;
  traj.prompt = prefix.prompt;
  State s = mdp.initial_state(prefix.prompt);
  for (int h = 0; h < prefix_steps; ++h) {
    const int a = prefix.actions[h];
    traj.actions.push_back(a);
    traj.behavior_logprobs.push_back(prefix.behavior_logprobs[h]);
    auto [next, reward] = mdp.step(s, a);
    traj.rewards.push_back(reward);
    s = std::move(next);
  }
  while (!s.terminal) {
    const int a = sample_action(policy.action_probs(s), rng);
    traj.actions.push_back(a);
    traj.behavior_logprobs.push_back(policy.log_prob(s, a));
    auto [next, reward] = mdp.step(s, a);
    traj.rewards.push_back(reward);
    s = std::move(next);
  }
  traj.correct = mdp.is_correct(traj);
  return traj;
}

std::vector<State> enumerate_nonterminal_states(const TokenMDP& mdp,
                                                std::size_t cap) {
  std::vector<State> states;
  std::deque<State> frontier;
  for (auto& prompt : mdp.enumerate_prompts()) {
    frontier.push_back(mdp.initial_state(prompt));
  }
  while (!frontier.empty()) {
    State s = std::move(frontier.front());
    frontier.pop_front();
    if (s.terminal) continue;
    states.push_back(s);
    if (states.size() > cap) {
      throw IoError("state enumeration exceeded cap of " + std::to_string(cap));
    }
    for (int a = 0; a < mdp.action_count(); ++a) {
      auto [next, reward] = mdp.step(s, a);
      (void)reward;
      if (!next.terminal) frontier.push_back(std::move(next));
    }
  }
  return states;
}

void validate_trajectory(const Trajectory& traj, const TokenMDP& mdp) {
  const std::size_t n = traj.actions.size();
  if (n < 1) throw std::invalid_argument("trajectory: no actions");
  if (traj.rewards.size() != n) {
    throw std::invalid_argument("trajectory: rewards length mismatch");
  }
  if (traj.behavior_logprobs.size() != n) {
    throw std::invalid_argument("trajectory: behavior_logprobs length mismatch");
  }
  const int last = traj.actions.back();
  if (last != mdp.vocab().eos_id && static_cast<int>(n) != mdp.max_steps()) {
    throw std::invalid_argument(
        "trajectory: does not end with the terminal action or at the cap");
  }
  for (std::size_t h = 0; h < n; ++h) {
    if (traj.actions[h] < 0 || traj.actions[h] >= mdp.action_count()) {
      throw std::invalid_argument("trajectory: action out of range");
    }
    if (traj.actions[h] == mdp.vocab().eos_id && h + 1 != n) {
      throw std::invalid_argument("trajectory: terminal action mid-sequence");
    }
    if (traj.behavior_logprobs[h] > 0.0) {
      throw std::invalid_argument("trajectory: behavior log-prob > 0");
    }
  }
  if (!traj.segment_boundaries.empty()) {
    int prev = -1;
    for (int b : traj.segment_boundaries) {
      if (b <= prev || b >= static_cast<int>(n)) {
        throw std::invalid_argument("trajectory: bad segment boundaries");
      }
      prev = b;
    }
    if (!traj.process_rewards.empty() &&
        traj.process_rewards.size() != traj.segment_boundaries.size()) {
      throw std::invalid_argument(
          "trajectory: process_rewards length != segment count");
    }
  } else if (!traj.process_rewards.empty()) {
    throw std::invalid_argument(
        "trajectory: process_rewards without segment_boundaries");
  }
}

}  // namespace softq
