#include "softq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace softq {

std::string to_json(const EvalReport& report) {
  nlohmann::json j;
  j["greedy_accuracy"] = report.greedy_accuracy;
  if (report.sample_accuracy) {
    j["sample_accuracy"] = *report.sample_accuracy;
    j["sample_n"] = report.sample_n;
  }
  j["expected_regularized_return"] = report.expected_regularized_return;
  if (report.tv_to_oracle) j["tv_to_oracle"] = *report.tv_to_oracle;
  if (report.value_process_correlation) {
    j["value_process_correlation"] = *report.value_process_correlation;
  }
  j["seed"] = report.seed;
  return j.dump();
}

Trajectory greedy_decode(const TokenMDP& mdp, const Policy& policy,
                         const std::vector<int>& prompt) {
  Trajectory traj;
  traj.prompt = prompt;
  State s = mdp.initial_state(prompt);
  while (!s.terminal) {
    const std::vector<double> probs = policy.action_probs(s);
    const int a = static_cast<int>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
    traj.actions.push_back(a);
    traj.behavior_logprobs.push_back(policy.log_prob(s, a));
    auto [next, reward] = mdp.step(s, a);
    traj.rewards.push_back(reward);
    s = std::move(next);
  }
  traj.correct = mdp.is_correct(traj);
  return traj;
}

double accuracy_greedy(const TokenMDP& mdp, const Policy& policy,
                       const std::vector<std::vector<int>>& prompts) {
  if (prompts.empty()) {
    throw std::invalid_argument("accuracy: no prompts");
  }
  int correct = 0;
  for (const auto& prompt : prompts) {
    if (greedy_decode(mdp, policy, prompt).correct) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(prompts.size());
}

double accuracy_sampled(const TokenMDP& mdp, const Policy& policy,
                        const std::vector<std::vector<int>>& prompts,
                        int n_per_prompt, Rng& rng) {
  if (prompts.empty()) {
    throw std::invalid_argument("accuracy: no prompts");
  }
  if (n_per_prompt < 1) {
    throw std::invalid_argument("accuracy: n_per_prompt must be >= 1");
  }
  long correct = 0;
  for (const auto& prompt : prompts) {
    for (int i = 0; i < n_per_prompt; ++i) {
      if (rollout(mdp, policy, prompt, rng).correct) ++correct;
    }
  }
  return static_cast<double>(correct) /
         (static_cast<double>(prompts.size()) * n_per_prompt);
}

std::optional<double> pearson(const std::vector<double>& xs,
                              const std::vector<double>& ys) {
  if (xs.size() != ys.size()) {
    throw std::invalid_argument("pearson: series length mismatch");
  }
  const std::size_t n = xs.size();
  if (n < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (xs[i] - mx) * (ys[i] - my);
    vx += (xs[i] - mx) * (xs[i] - mx);
    vy += (ys[i] - my) * (ys[i] - my);
  }
  if (vx == 0.0 || vy == 0.0) return std::nullopt;
  return cov / std::sqrt(vx * vy);
}

std::optional<double> value_process_correlation(
    const TabularValue& value, const std::vector<Trajectory>& trajectories) {
  std::vector<double> values, scores;
  for (const Trajectory& traj : trajectories) {
    if (traj.segment_boundaries.empty() || traj.process_rewards.empty()) {
      continue;
    }
    const std::vector<State> states = trajectory_states(traj);
    double accrued = 0.0;
    for (std::size_t j = 0; j < traj.segment_boundaries.size(); ++j) {
      accrued += traj.process_rewards[j];
      const State& boundary = states[traj.segment_boundaries[j] + 1];
      if (boundary.terminal) continue;
      values.push_back(value.get(boundary));
      scores.push_back(accrued);
    }
  }
  return pearson(values, scores);
}

double total_variation(const Policy& a, const Policy& b, const State& s) {
  if (a.action_count() != b.action_count()) {
    throw std::invalid_argument("total_variation: action-space mismatch");
  }
  const std::vector<double> pa = a.action_probs(s);
  const std::vector<double> pb = b.action_probs(s);
  double tv = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) tv += std::abs(pa[i] - pb[i]);
  return 0.5 * tv;
}

double max_total_variation(const Policy& a, const Policy& b,
                           const std::vector<State>& states) {
  double worst = 0.0;
  for (const State& s : states) {
    worst = std::max(worst, total_variation(a, b, s));
  }
  return worst;
}

double tv_to_oracle(const Policy& policy, const SoftSolution& solution,
                    const std::vector<State>& states) {
  const SoftSolutionPolicy oracle(solution);
  return max_total_variation(policy, oracle, states);
}

double mean_regularized_return(const TokenMDP& mdp, const Policy& policy,
                               const Policy& ref, double beta,
                               const std::vector<std::vector<int>>& prompts) {
  if (prompts.empty()) {
    throw std::invalid_argument("mean_regularized_return: no prompts");
  }
  const auto values = exact_policy_evaluation(mdp, policy, ref, beta);
  double sum = 0.0;
  for (const auto& prompt : prompts) {
    sum += values.at(mdp.initial_state(prompt));
  }
  return sum / static_cast<double>(prompts.size());
}

}  // namespace softq
