#include "softq/process_reward.hpp"

#include <stdexcept>

#include "softq/parallel.hpp"

namespace softq {

SegmentedTrajectory segment(const Trajectory& traj,
                            const SegmentationOptions& options) {
  if (traj.n_steps() < 1) {
    throw std::invalid_argument("segment: trajectory has no steps");
  }
  SegmentedTrajectory seg;
  seg.base = traj;
  if (options.kind == Segmenter::PerToken) {
    for (int h = 0; h < traj.n_steps(); ++h) seg.boundaries.push_back(h);
  } else {
    if (options.width < 1) {
      throw std::invalid_argument("segment: width must be >= 1");
    }
    for (int h = options.width - 1; h < traj.n_steps(); h += options.width) {
      seg.boundaries.push_back(h);
    }
    if (seg.boundaries.empty() ||
        seg.boundaries.back() != traj.n_steps() - 1) {
      seg.boundaries.push_back(traj.n_steps() - 1);
    }
  }
  seg.base.segment_boundaries = seg.boundaries;
  return seg;
}

int longest_passing_prefix_scan(
    int n_segments, const std::function<bool(int)>& prefix_passes) {
  for (int i = n_segments - 1; i >= 1; --i) {
    if (prefix_passes(i)) return i;
  }
  return 0;
}

int longest_passing_prefix(const TokenMDP& mdp, const Trajectory& traj,
                           const SegmentedTrajectory& seg,
                           const Policy& sampler, int n_rollouts, Rng& rng) {
  if (traj.correct) {
    throw std::invalid_argument(
        "longest_passing_prefix: trajectory is labeled correct");
  }
  if (n_rollouts < 1) {
    throw std::invalid_argument("longest_passing_prefix: n_rollouts must be >= 1");
  }
  return longest_passing_prefix_scan(seg.n_segments(), [&](int i) {
    const int prefix_steps = seg.boundaries[i - 1] + 1;
    for (int r = 0; r < n_rollouts; ++r) {
      if (complete_from(mdp, sampler, traj, prefix_steps, rng).correct) {
        return true;
      }
    }
    return false;
  });
}

Trajectory assign_process_rewards(const SegmentedTrajectory& seg,
                                  bool correct_full_per_segment) {
  const int n = seg.n_segments();
  if (n < 1 || seg.boundaries.back() != seg.base.n_steps() - 1) {
    throw std::invalid_argument("assign_process_rewards: bad segment metadata");
  }
  if (seg.longest_passing_prefix < 0 || seg.longest_passing_prefix > n) {
    throw std::invalid_argument("assign_process_rewards: bad prefix index");
  }
  Trajectory out = seg.base;
  out.segment_boundaries = seg.boundaries;
  out.process_rewards.assign(n, 0.0);
  const double per_segment = 1.0 / static_cast<double>(n);
  for (int j = 0; j < n; ++j) {
    if (seg.base.correct) {
      out.process_rewards[j] = correct_full_per_segment ? 1.0 : per_segment;
    } else if (j < seg.longest_passing_prefix) {
      out.process_rewards[j] = per_segment;
    }
  }
  // The per-segment schedule replaces the lump outcome reward.
  out.rewards.assign(out.rewards.size(), 0.0);
  for (int j = 0; j < n; ++j) {
    out.rewards[seg.boundaries[j]] = out.process_rewards[j];
  }
  return out;
}

Dataset augment_with_process_rewards(const TokenMDP& mdp,
                                     const Dataset& dataset,
                                     const Policy& sampler,
                                     const ProcessRewardOptions& options,
                                     std::uint64_t seed, int threads) {
  Dataset out;
  out.manifest = dataset.manifest;
  ProcessSpec spec;
  spec.segmenter =
      options.segmentation.kind == Segmenter::PerToken ? "per-token" : "width";
  spec.width = options.segmentation.width;
  spec.n_rollouts = options.n_rollouts;
  spec.seed = seed;
  spec.correct_full_per_segment = options.correct_full_per_segment;
  out.manifest.process = spec;

  out.trajectories.resize(dataset.trajectories.size());
  parallel_for(dataset.trajectories.size(), threads, [&](std::size_t t) {
    const Trajectory& traj = dataset.trajectories[t];
    SegmentedTrajectory seg = segment(traj, options.segmentation);
    if (!traj.correct) {
      Rng rng = make_rng(seed, t + 1);
      seg.longest_passing_prefix = longest_passing_prefix(
          mdp, traj, seg, sampler, options.n_rollouts, rng);
    }
    out.trajectories[t] =
        assign_process_rewards(seg, options.correct_full_per_segment);
  });
  return out;
}

}  // namespace softq
