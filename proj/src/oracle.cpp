#include "softq/oracle.hpp"

#include <cmath>
#include <stdexcept>

#include "softq/errors.hpp"

namespace softq {

double kl_reward(double beta, double ref_logprob, double r) {
  if (beta <= 0.0) throw std::invalid_argument("kl_reward: beta must be > 0");
  return r + beta * ref_logprob;
}

namespace {

using ValueMap = std::unordered_map<State, double, StateHash>;

double induct(const TokenMDP& mdp, const Policy& ref, double beta,
              const State& s, SoftSolution& out, std::size_t cap) {
  if (s.terminal) return 0.0;
  auto known = out.v_star.find(s);
  if (known != out.v_star.end()) return known->second;
  if (out.v_star.size() >= cap) {
    throw IoError("soft_backward_induction: state cap exceeded");
  }
  const int n = mdp.action_count();
  std::vector<double> q(n), scaled(n);
  for (int a = 0; a < n; ++a) {
    auto [next, reward] = mdp.step(s, a);
    q[a] = kl_reward(beta, ref.log_prob(s, a), reward) +
           induct(mdp, ref, beta, next, out, cap);
    scaled[a] = q[a] / beta;
  }
  const double v = beta * logsumexp(scaled);
  std::vector<double> pi(n);
  for (int a = 0; a < n; ++a) pi[a] = std::exp((q[a] - v) / beta);
  out.v_star.emplace(s, v);
  out.q_star.emplace(s, std::move(q));
  out.pi_star.emplace(s, std::move(pi));
  return v;
}

double evaluate(const TokenMDP& mdp, const Policy& policy, const Policy& ref,
                double beta, const State& s, ValueMap& out, std::size_t cap) {
  if (s.terminal) return 0.0;
  auto known = out.find(s);
  if (known != out.end()) return known->second;
  if (out.size() >= cap) {
    throw IoError("exact_policy_evaluation: state cap exceeded");
  }
  const std::vector<double> probs = policy.action_probs(s);
  double v = 0.0;
  for (int a = 0; a < mdp.action_count(); ++a) {
    if (probs[a] <= 0.0) continue;
    auto [next, reward] = mdp.step(s, a);
    const double kl_term = policy.log_prob(s, a) - ref.log_prob(s, a);
    v += probs[a] * (reward - beta * kl_term +
                     evaluate(mdp, policy, ref, beta, next, out, cap));
  }
  out.emplace(s, v);
  return v;
}

}  // namespace

SoftSolution soft_backward_induction(const TokenMDP& mdp,
                                     const Policy& ref_policy, double beta,
                                     std::size_t state_cap) {
  if (beta <= 0.0) {
    throw std::invalid_argument("soft_backward_induction: beta must be > 0");
  }
  SoftSolution solution;
  solution.n_actions = mdp.action_count();
  for (auto& prompt : mdp.enumerate_prompts()) {
    induct(mdp, ref_policy, beta, mdp.initial_state(prompt), solution,
           state_cap);
  }
  return solution;
}

std::unordered_map<State, double, StateHash> exact_policy_evaluation(
    const TokenMDP& mdp, const Policy& policy, const Policy& ref_policy,
    double beta, std::size_t state_cap) {
  if (beta <= 0.0) {
    throw std::invalid_argument("exact_policy_evaluation: beta must be > 0");
  }
  ValueMap values;
  for (auto& prompt : mdp.enumerate_prompts()) {
    evaluate(mdp, policy, ref_policy, beta, mdp.initial_state(prompt), values,
             state_cap);
  }
  return values;
}

SoftSolutionPolicy::SoftSolutionPolicy(const SoftSolution& solution)
    : solution_(&solution) {}

double SoftSolutionPolicy::log_prob(const State& s, int action) const {
  auto it = solution_->pi_star.find(s);
  if (it == solution_->pi_star.end()) {
    throw std::invalid_argument("oracle policy: state not in solution");
  }
  return std::log(it->second[action]);
}

std::vector<double> SoftSolutionPolicy::action_probs(const State& s) const {
  auto it = solution_->pi_star.find(s);
  if (it == solution_->pi_star.end()) {
    throw std::invalid_argument("oracle policy: state not in solution");
  }
  return it->second;
}

TabularPolicy to_tabular_policy(const SoftSolution& solution) {
  TabularPolicy policy(solution.n_actions);
  for (const auto& [s, pi] : solution.pi_star) {
    std::vector<double> logits(pi.size());
    for (std::size_t a = 0; a < pi.size(); ++a) logits[a] = std::log(pi[a]);
    policy.set_logits(s, std::move(logits));
  }
  return policy;
}

TabularValue to_tabular_value(const SoftSolution& solution) {
  TabularValue value;
  for (const auto& [s, v] : solution.v_star) value.set(s, v);
  return value;
}

}  // namespace softq
