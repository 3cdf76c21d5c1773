#ifndef SOFTQ_ORACLE_HPP_
#define SOFTQ_ORACLE_HPP_

#include <unordered_map>

#include "softq/policy.hpp"

namespace softq {

// Exact optimum of the KL-regularized control problem on a finite tree.
// Self-consistency: v = beta * logsumexp(q / beta) per state, pi rows sum
// to 1, and pi(a|s) = exp((q(s,a) - v(s)) / beta).
struct SoftSolution {
  std::unordered_map<State, double, StateHash> v_star;
  std::unordered_map<State, std::vector<double>, StateHash> q_star;
  std::unordered_map<State, std::vector<double>, StateHash> pi_star;
  int n_actions = 0;
};

// r + beta * log pi_ref(a|s): folds the KL penalty into the reward.
double kl_reward(double beta, double ref_logprob, double r);

// Backward induction over the reachable state tree. V of terminal states
// is 0; Q(s,a) = kl_reward(beta, log ref(a|s), r(s,a)) + V(step(s,a));
// V(s) = beta * logsumexp_a(Q(s,a) / beta); pi(a|s) = exp((Q - V) / beta).
SoftSolution soft_backward_induction(const TokenMDP& mdp,
                                     const Policy& ref_policy, double beta,
                                     std::size_t state_cap = 1'000'000);

// Exact regularized value of a fixed policy:
// V(s) = sum_a pi(a|s) [r(s,a) - beta (log pi - log ref)(a|s) + V(step(s,a))].
std::unordered_map<State, double, StateHash> exact_policy_evaluation(
    const TokenMDP& mdp, const Policy& policy, const Policy& ref_policy,
    double beta, std::size_t state_cap = 1'000'000);

// Exposes pi* as a rollable policy. Keeps a reference; the solution must
// outlive the wrapper.
class SoftSolutionPolicy : public Policy {
 public:
  explicit SoftSolutionPolicy(const SoftSolution& solution);
  int action_count() const override { return solution_->n_actions; }
  double log_prob(const State& s, int action) const override;
  std::vector<double> action_probs(const State& s) const override;

 private:
  const SoftSolution* solution_;
};

// Renders the solution into model tables (logits = log pi*, values = V*).
TabularPolicy to_tabular_policy(const SoftSolution& solution);
TabularValue to_tabular_value(const SoftSolution& solution);

}  // namespace softq

#endif  // SOFTQ_ORACLE_HPP_
