#ifndef SOFTQ_RETURNS_HPP_
#define SOFTQ_RETURNS_HPP_

#include "softq/policy.hpp"

namespace softq {

// A trajectory seen as a sequence of decision steps. Token view: one step per
// action. Macro view: the whole response is a single step whose rewards and
// log-probabilities are summed, which is the bandit reduction.
struct StepSpan {
  int first = 0;  // token index range, inclusive
  int last = 0;
};

struct TrajectoryView {
  const Trajectory* traj = nullptr;
  std::vector<State> states;    // token states s_0..s_{H+1}
  std::vector<StepSpan> steps;  // view steps; states[steps[h].first] is s_h

  int n_view_steps() const { return static_cast<int>(steps.size()); }
  const State& step_state(int h) const { return states[steps[h].first]; }
  const State& successor_state(int h) const { return states[steps[h].last + 1]; }
};

TrajectoryView make_token_view(const Trajectory& traj);
TrajectoryView make_macro_view(const Trajectory& traj);

// Per-view-step quantities against a fixed set of networks. `values[h]` is
// V(s_h) with values[n] = 0 for the terminal state; `logratio[h]` is
// sum over the step's tokens of log policy - log ref.
struct RegularizedSteps {
  std::vector<double> rewards;
  std::vector<double> logratio;
  std::vector<double> values;
};

RegularizedSteps regularize(const TrajectoryView& view,
                            const TabularValue& value, const Policy& policy,
                            const Policy& ref);

// G^(n)(s_h) = V(s_{h+n}) + sum_{l=0..n-1} (beta * (-logratio) + r), the
// empirical n-step return with the terminal pin V(s_{H+1}) = 0.
double n_step_from(const RegularizedSteps& steps, double beta, int h, int n);

// The lambda-return as a weighted average of n-step returns:
//   lambda < 1: (1 - lambda) * sum_{n=1..N} lambda^(n-1) G^(n)(s_h)
//   lambda = 1: G^(N)(s_h), the full regularized return from s_h
// with N the number of steps remaining from h. The lambda < 1 weights sum to
// 1 - lambda^N; `normalized` assigns the missing lambda^N weight to the full
// return. h == step count yields 0 (terminal successor).
//
// The lambda = 1 branch is anchored at s_h. An alternative reading anchors it
// at the final state, which would give every step of a trajectory the same
// target; the fixtures pin the per-step reading.
double lambda_from(const RegularizedSteps& steps, double beta, double lambda,
                   int h, bool normalized = false);

// One backward sweep producing every G^lambda(s_h); agrees with lambda_from
// to within accumulation order.
std::vector<double> lambda_all_from(const RegularizedSteps& steps, double beta,
                                    double lambda, bool normalized = false);

// Token-step entry points. `policy` and `value_fn` are the stop-gradient
// snapshots of the networks the targets are built from.
double n_step_return(const Trajectory& traj, int h, int n,
                     const TabularValue& value_fn, const Policy& policy,
                     const Policy& ref_policy, double beta);
double lambda_return(const Trajectory& traj, int h, double lambda,
                     const TabularValue& value_fn, const Policy& policy,
                     const Policy& ref_policy, double beta,
                     bool normalized = false);
std::vector<double> lambda_returns_recursive(const Trajectory& traj,
                                             double lambda,
                                             const TabularValue& value_fn,
                                             const Policy& policy,
                                             const Policy& ref_policy,
                                             double beta,
                                             bool normalized = false);

// Truncated trajectory importance weight
//   w(tau) = exp(min(1, sum_h log pi(a_h|s_h) - log mu(a_h|s_h)))
// against the stored behavior log-probs; always in (0, e]. Treated as a
// constant with respect to gradients.
double is_weight(const Trajectory& traj, const Policy& policy);

}  // namespace softq

#endif  // SOFTQ_RETURNS_HPP_
