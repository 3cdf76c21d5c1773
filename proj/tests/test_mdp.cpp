#include <map>
#include <set>
#include <tuple>

#include "doctest.h"
#include "softq/mdp.hpp"
#include "softq/policy.hpp"
#include "test_util.hpp"

using namespace softq;

TEST_CASE("modchain step transitions and rewards") {
  ModChain mdp(5, 3, 7);
  CHECK(mdp.vocab().size == 5);
  CHECK(mdp.vocab().eos_id == 5);
  CHECK(mdp.max_steps() == 4);
  CHECK(mdp.action_count() == 6);

  State s{{3, 4, 2}, {3, 2}, false};
  auto [next, reward] = mdp.step(s, 4);
  CHECK(next.generated == std::vector<int>{3, 2, 4});
  CHECK_FALSE(next.terminal);
  CHECK(reward == 0.0);

  auto [terminal, eos_reward] = mdp.step(next, mdp.vocab().eos_id);
  CHECK(terminal.terminal);
  CHECK(eos_reward == 1.0);  // prefix sums mod 5: 3, 2, 4

  State wrong{{3, 4, 2}, {3, 3, 4}, false};
  auto [t2, r2] = mdp.step(wrong, mdp.vocab().eos_id);
  CHECK(t2.terminal);
  CHECK(r2 == 0.0);

  State zeros{{0, 0}, {0, 0}, false};
  ModChain small(5, 2, 0);
  auto [t3, r3] = small.step(zeros, small.vocab().eos_id);
  CHECK(t3.terminal);
  CHECK(r3 == 1.0);
}

TEST_CASE("modchain cap forces termination without reward") {
  ModChain mdp(3, 2, 0);
  State s{{1, 2}, {1, 0}, false};  // correct chain so far, one step left
  auto [next, reward] = mdp.step(s, 1);
  CHECK(next.terminal);      // cap reached
  CHECK(reward == 0.0);      // missing terminal action: incorrect
}

TEST_CASE("modchain step error paths") {
  ModChain mdp(5, 3, 7);
  State terminal{{1, 2, 3}, {5}, true};
  CHECK_THROWS_AS(mdp.step(terminal, 0), std::invalid_argument);
  State fresh{{1, 2, 3}, {}, false};
  CHECK_THROWS_AS(mdp.step(fresh, 6), std::invalid_argument);
  CHECK_THROWS_AS(mdp.step(fresh, -1), std::invalid_argument);
  CHECK_THROWS_AS(ModChain(1, 3, 0), std::invalid_argument);
  CHECK_THROWS_AS(ModChain(5, 0, 0), std::invalid_argument);
}

TEST_CASE("treebandit reward table is seeded and in range") {
  TreeBandit a(3, 3, 42), b(3, 3, 42), c(3, 3, 43);
  CHECK(a.leaf_rewards() == b.leaf_rewards());
  CHECK(a.leaf_rewards() != c.leaf_rewards());
  CHECK(a.leaf_rewards().size() == 27);
  for (double r : a.leaf_rewards()) {
    CHECK(r >= 0.0);
    CHECK(r < 1.0);
  }
  TreeBandit d1(2, 1, 9);
  CHECK(d1.leaf_rewards().size() == 2);
}

TEST_CASE("treebandit step pays only at the leaf") {
  TreeBandit mdp(2, 2, {0.1, 0.2, 0.3, 0.4});
  State root = mdp.initial_state({});
  auto [mid, r0] = mdp.step(root, 1);
  CHECK(r0 == 0.0);
  CHECK_FALSE(mid.terminal);
  auto [leaf, r1] = mdp.step(mid, 0);
  CHECK(leaf.terminal);
  CHECK(r1 == 0.3);  // path (1,0) in lexicographic order
  CHECK(mdp.action_count() == 2);
  CHECK_THROWS_AS(mdp.step(root, 2), std::invalid_argument);
}

TEST_CASE("rollout follows a one-hot policy and its seed") {
  ModChain mdp(5, 3, 7);
  testing::ChainSolverPolicy solver(mdp);
  Rng rng = make_rng(1);
  Trajectory traj = rollout(mdp, solver, {3, 4, 2}, rng);
  CHECK(traj.actions == std::vector<int>{3, 2, 4, 5});
  CHECK(traj.correct);
  CHECK(traj.rewards == std::vector<double>{0, 0, 0, 1});
  CHECK(traj.behavior_logprobs == std::vector<double>{0, 0, 0, 0});

  TabularPolicy uniform(mdp.action_count());
  Rng r1 = make_rng(33), r2 = make_rng(33);
  Trajectory t1 = rollout(mdp, uniform, {3, 4, 2}, r1);
  Trajectory t2 = rollout(mdp, uniform, {3, 4, 2}, r2);
  CHECK(t1.actions == t2.actions);
  CHECK(t1.behavior_logprobs == t2.behavior_logprobs);
}

TEST_CASE("rollout rejects non-normalized policies") {
  struct Broken : Policy {
    int action_count() const override { return 2; }
    double log_prob(const State&, int) const override { return -0.5; }
    std::vector<double> action_probs(const State&) const override {
      return {0.7, 0.8};
    }
  } broken;
  TreeBandit mdp(2, 1, 0);
  Rng rng = make_rng(0);
  CHECK_THROWS_AS(rollout(mdp, broken, {}, rng), std::invalid_argument);
}

TEST_CASE("uniform rollout visits treebandit leaves uniformly") {
  TreeBandit mdp(2, 2, 5);
  TabularPolicy uniform(mdp.action_count());
  Rng rng = make_rng(17);
  std::map<std::vector<int>, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    counts[rollout(mdp, uniform, {}, rng).actions] += 1;
  }
  CHECK(counts.size() == 4);
  for (const auto& [path, count] : counts) {
    CHECK(std::abs(count / static_cast<double>(n) - 0.25) < 0.02);
  }
}

TEST_CASE("step is a pure function") {
  TreeBandit mdp(3, 3, 11);
  State s = mdp.initial_state({});
  auto a = mdp.step(s, 2);
  auto b = mdp.step(s, 2);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("reachability closure counts the full tree") {
  const int vocab = 3, depth = 3;
  TreeBandit mdp(vocab, depth, 2);
  const std::vector<State> states = enumerate_nonterminal_states(mdp);
  // non-terminal states: sum_{d=0..depth-1} vocab^d
  std::size_t expected = 0, power = 1;
  for (int d = 0; d < depth; ++d) {
    expected += power;
    power *= vocab;
  }
  CHECK(states.size() == expected);
  std::set<State, bool (*)(const State&, const State&)> unique(
      +[](const State& a, const State& b) {
        return std::tie(a.prompt, a.generated, a.terminal) <
               std::tie(b.prompt, b.generated, b.terminal);
      });
  unique.insert(states.begin(), states.end());
  CHECK(unique.size() == states.size());
}

TEST_CASE("trajectory states and validation") {
  ModChain mdp(5, 3, 7);
  testing::ChainSolverPolicy solver(mdp);
  Rng rng = make_rng(1);
  Trajectory traj = rollout(mdp, solver, {3, 4, 2}, rng);
  const std::vector<State> states = trajectory_states(traj);
  CHECK(states.size() == 5);
  CHECK(states.front() == mdp.initial_state({3, 4, 2}));
  CHECK(states.back().terminal);
  for (std::size_t i = 0; i + 1 < states.size(); ++i) {
    CHECK_FALSE(states[i].terminal);
  }
  CHECK_NOTHROW(validate_trajectory(traj, mdp));

  Trajectory bad = traj;
  bad.behavior_logprobs.pop_back();
  CHECK_THROWS_AS(validate_trajectory(bad, mdp), std::invalid_argument);

  bad = traj;
  bad.actions.back() = 2;  // neither terminal action nor at the cap
  bad.actions.pop_back();
  bad.rewards.pop_back();
  bad.behavior_logprobs.pop_back();
  CHECK_THROWS_AS(validate_trajectory(bad, mdp), std::invalid_argument);

  bad = traj;
  bad.behavior_logprobs[0] = 0.5;
  CHECK_THROWS_AS(validate_trajectory(bad, mdp), std::invalid_argument);

  bad = traj;
  bad.segment_boundaries = {2, 1};
  CHECK_THROWS_AS(validate_trajectory(bad, mdp), std::invalid_argument);
}

TEST_CASE("enumerate_prompts covers the prompt space") {
  ModChain mdp(3, 2, 0);
  auto prompts = mdp.enumerate_prompts();
  CHECK(prompts.size() == 9);
  CHECK(prompts.front() == std::vector<int>{0, 0});
  CHECK(prompts.back() == std::vector<int>{2, 2});
  TreeBandit tree(2, 2, 0);
  CHECK(tree.enumerate_prompts() == std::vector<std::vector<int>>{{}});
}
