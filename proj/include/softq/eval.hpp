#ifndef SOFTQ_EVAL_HPP_
#define SOFTQ_EVAL_HPP_

#include <optional>
#include <string>

#include "softq/oracle.hpp"

namespace softq {

struct EvalReport {
  double greedy_accuracy = 0.0;
  std::optional<double> sample_accuracy;
  int sample_n = 0;
  double expected_regularized_return = 0.0;
  std::optional<double> tv_to_oracle;
  std::optional<double> value_process_correlation;
  std::uint64_t seed = 0;
};

std::string to_json(const EvalReport& report);

// Argmax decoding; ties break toward the lowest action index.
Trajectory greedy_decode(const TokenMDP& mdp, const Policy& policy,
                         const std::vector<int>& prompt);

double accuracy_greedy(const TokenMDP& mdp, const Policy& policy,
                       const std::vector<std::vector<int>>& prompts);

// Mean correct fraction over n draws per prompt.
double accuracy_sampled(const TokenMDP& mdp, const Policy& policy,
                        const std::vector<std::vector<int>>& prompts,
                        int n_per_prompt, Rng& rng);

// Empty when either series has zero variance.
std::optional<double> pearson(const std::vector<double>& xs,
                              const std::vector<double>& ys);

// Correlation between V at segment-boundary states and the cumulative
// process score of the corresponding prefix, pooled over all trajectories
// carrying process annotations. Terminal boundary states are excluded since
// their value is pinned.
std::optional<double> value_process_correlation(
    const TabularValue& value, const std::vector<Trajectory>& trajectories);

double total_variation(const Policy& a, const Policy& b, const State& s);

// Max total variation between pi and pi* over the given states.
double tv_to_oracle(const Policy& policy, const SoftSolution& solution,
                    const std::vector<State>& states);
double max_total_variation(const Policy& a, const Policy& b,
                           const std::vector<State>& states);

// Exact regularized return of the policy, averaged over the given prompts.
double mean_regularized_return(const TokenMDP& mdp, const Policy& policy,
                               const Policy& ref, double beta,
                               const std::vector<std::vector<int>>& prompts);

}  // namespace softq

#endif  // SOFTQ_EVAL_HPP_
