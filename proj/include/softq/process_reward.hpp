#ifndef SOFTQ_PROCESS_REWARD_HPP_
#define SOFTQ_PROCESS_REWARD_HPP_

#include <functional>

#include "softq/datagen.hpp"

namespace softq {

enum class Segmenter { PerToken, FixedWidth };

struct SegmentationOptions {
  Segmenter kind = Segmenter::PerToken;
  int width = 2;
};

// A trajectory split into segments; boundaries hold the final step index of
// each segment, the last boundary being the final step.
struct SegmentedTrajectory {
  Trajectory base;
  std::vector<int> boundaries;
  int longest_passing_prefix = 0;  // i*, in [0, n_segments]

  int n_segments() const { return static_cast<int>(boundaries.size()); }
};

SegmentedTrajectory segment(const Trajectory& traj,
                            const SegmentationOptions& options = {});

// Scans i = n-1 .. 1 and returns the first i for which prefix_passes(i);
// 0 when none passes. Smaller prefixes are not probed once one passes.
int longest_passing_prefix_scan(int n_segments,
                                const std::function<bool(int)>& prefix_passes);

// A prefix of i segments passes when at least one of n_rollouts sampled
// completions is labeled correct. The trajectory must be labeled incorrect.
int longest_passing_prefix(const TokenMDP& mdp, const Trajectory& traj,
                           const SegmentedTrajectory& seg,
                           const Policy& sampler, int n_rollouts, Rng& rng);

// Failed trajectory: segments 1..i* earn 1/n each at their final action and
// the lump outcome reward is dropped. Correct trajectory: every segment earns
// 1/n (or 1 each under the full-per-segment reading).
Trajectory assign_process_rewards(const SegmentedTrajectory& seg,
                                  bool correct_full_per_segment = false);

struct ProcessRewardOptions {
  SegmentationOptions segmentation;
  int n_rollouts = 20;
  bool correct_full_per_segment = false;
};

// Runs the full pipeline over a dataset: segment, scan failed trajectories
// with prefix rollouts, merge rewards. Per-trajectory seeds derive from
// `seed`, so results are identical for any thread count.
Dataset augment_with_process_rewards(const TokenMDP& mdp,
                                     const Dataset& dataset,
                                     const Policy& sampler,
                                     const ProcessRewardOptions& options,
                                     std::uint64_t seed, int threads = 1);

}  // namespace softq

#endif  // SOFTQ_PROCESS_REWARD_HPP_
