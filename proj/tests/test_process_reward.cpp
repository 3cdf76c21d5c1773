#include <cmath>

#include "doctest.h"
#include "softq/process_reward.hpp"
#include "test_util.hpp"

using namespace softq;

namespace {

Trajectory failed_modchain_traj() {
  // ModChain(5), prompt (3,4,2): expected chain is (3,2,4); the response
  // (3,3,4,eos) breaks at the second token.
  Trajectory traj;
  traj.prompt = {3, 4, 2};
  traj.actions = {3, 3, 4, 5};
  traj.rewards = {0, 0, 0, 0};
  traj.behavior_logprobs = {-1.0, -1.0, -1.0, -1.0};
  traj.correct = false;
  return traj;
}

}  // namespace

TEST_CASE("per-token segmentation") {
  Trajectory traj = failed_modchain_traj();
  SegmentedTrajectory seg = segment(traj);
  CHECK(seg.boundaries == std::vector<int>{0, 1, 2, 3});
  CHECK(seg.n_segments() == 4);
}

TEST_CASE("fixed-width segmentation") {
  Trajectory traj;
  traj.prompt = {0};
  traj.actions = {0, 0, 0, 0, 0};
  traj.rewards.assign(5, 0.0);
  traj.behavior_logprobs.assign(5, -1.0);
  SegmentationOptions options{Segmenter::FixedWidth, 2};
  SegmentedTrajectory seg = segment(traj, options);
  CHECK(seg.boundaries == std::vector<int>{1, 3, 4});

  Trajectory single;
  single.prompt = {0};
  single.actions = {1};
  single.rewards = {0.0};
  single.behavior_logprobs = {-1.0};
  CHECK(segment(single, options).boundaries == std::vector<int>{0});
  CHECK(segment(single).boundaries == std::vector<int>{0});
}

TEST_CASE("prefix scan returns the first passing prefix from the top") {
  std::vector<int> probed;
  const int all_pass = longest_passing_prefix_scan(4, [&](int i) {
    probed.push_back(i);
    return true;
  });
  CHECK(all_pass == 3);
  CHECK(probed == std::vector<int>{3});  // early exit: smaller prefixes skipped

  const int none_pass =
      longest_passing_prefix_scan(4, [](int) { return false; });
  CHECK(none_pass == 0);

  const int mid = longest_passing_prefix_scan(4, [](int i) { return i <= 2; });
  CHECK(mid == 2);
}

TEST_CASE("prefix rollouts find the last sound segment") {
  ModChain mdp(5, 3, 7);
  Trajectory traj = failed_modchain_traj();
  SegmentedTrajectory seg = segment(traj);
  // The solver replays the unique correct completion (2,4,eos) from the
  // prefix (3); prefixes containing the broken token can never pass.
  testing::ChainSolverPolicy solver(mdp);
  Rng rng = make_rng(1);
  CHECK(longest_passing_prefix(mdp, traj, seg, solver, 20, rng) == 1);

  Trajectory correct = traj;
  correct.correct = true;
  CHECK_THROWS_AS(longest_passing_prefix(mdp, correct, seg, solver, 20, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(longest_passing_prefix(mdp, traj, seg, solver, 0, rng),
                  std::invalid_argument);
}

TEST_CASE("prefix scan is reproducible under a fixed seed") {
  ModChain mdp(5, 3, 7);
  TabularPolicy uniform(mdp.action_count());
  Trajectory traj = failed_modchain_traj();
  SegmentedTrajectory seg = segment(traj);
  Rng r1 = make_rng(9), r2 = make_rng(9);
  const int a = longest_passing_prefix(mdp, traj, seg, uniform, 20, r1);
  const int b = longest_passing_prefix(mdp, traj, seg, uniform, 20, r2);
  CHECK(a == b);
}

TEST_CASE("process rewards follow the prefix schedule") {
  Trajectory traj = failed_modchain_traj();
  SegmentedTrajectory seg = segment(traj);
  seg.longest_passing_prefix = 2;
  Trajectory out = assign_process_rewards(seg);
  CHECK(out.process_rewards == std::vector<double>{0.25, 0.25, 0.0, 0.0});
  CHECK(out.rewards == std::vector<double>{0.25, 0.25, 0.0, 0.0});
  CHECK(out.total_reward() == doctest::Approx(0.5));
  CHECK(out.segment_boundaries == seg.boundaries);

  seg.longest_passing_prefix = 0;
  Trajectory none = assign_process_rewards(seg);
  CHECK(none.process_rewards == std::vector<double>{0.0, 0.0, 0.0, 0.0});
  CHECK(none.total_reward() == 0.0);
}

TEST_CASE("correct trajectories spread the outcome reward over segments") {
  ModChain mdp(5, 3, 7);
  testing::ChainSolverPolicy solver(mdp);
  Rng rng = make_rng(2);
  Trajectory traj = rollout(mdp, solver, {3, 4, 2}, rng);
  REQUIRE(traj.correct);
  SegmentedTrajectory seg = segment(traj);
  Trajectory out = assign_process_rewards(seg);
  CHECK(out.process_rewards ==
        std::vector<double>{0.25, 0.25, 0.25, 0.25});
  CHECK(out.total_reward() == doctest::Approx(1.0).epsilon(1e-12));

  // literal reading behind the flag: one full unit per segment
  Trajectory literal = assign_process_rewards(seg, true);
  CHECK(literal.process_rewards ==
        std::vector<double>{1.0, 1.0, 1.0, 1.0});
}

TEST_CASE("augmentation keeps totals in [0,1] and is seed-stable") {
  ModChain mdp(3, 2, 4);
  BehaviorSpec behavior;
  Dataset dataset = generate_dataset(mdp, behavior, 15, 8, 10);
  TabularPolicy sampler(mdp.action_count());
  ProcessRewardOptions options;
  Dataset augmented =
      augment_with_process_rewards(mdp, dataset, sampler, options, 77);
  CHECK(augmented.manifest.process.has_value());
  CHECK(augmented.trajectories.size() == dataset.trajectories.size());
  for (const Trajectory& traj : augmented.trajectories) {
    CHECK(traj.total_reward() >= 0.0);
    CHECK(traj.total_reward() <= 1.0 + 1e-12);
    CHECK(traj.segment_boundaries.size() == traj.process_rewards.size());
    // non-increasing after the passing prefix
    for (std::size_t j = 1; j < traj.process_rewards.size(); ++j) {
      CHECK(traj.process_rewards[j] <= traj.process_rewards[j - 1] + 1e-12);
    }
    validate_trajectory(traj, mdp);
  }
  Dataset again =
      augment_with_process_rewards(mdp, dataset, sampler, options, 77);
  CHECK(dataset_to_string(again) == dataset_to_string(augmented));
  Dataset threaded =
      augment_with_process_rewards(mdp, dataset, sampler, options, 77, 4);
  CHECK(dataset_to_string(threaded) == dataset_to_string(augmented));
}
