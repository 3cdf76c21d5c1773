#include "softq/returns.hpp"

#include <cmath>
#include <stdexcept>

namespace softq {

TrajectoryView make_token_view(const Trajectory& traj) {
  TrajectoryView view;
  view.traj = &traj;
  view.states = trajectory_states(traj);
  view.steps.reserve(traj.actions.size());
  for (int h = 0; h < traj.n_steps(); ++h) view.steps.push_back({h, h});
  return view;
}

TrajectoryView make_macro_view(const Trajectory& traj) {
  TrajectoryView view;
  view.traj = &traj;
  view.states = trajectory_states(traj);
  view.steps.push_back({0, traj.n_steps() - 1});
  return view;
}

RegularizedSteps regularize(const TrajectoryView& view,
                            const TabularValue& value, const Policy& policy,
                            const Policy& ref) {
  const int n = view.n_view_steps();
  RegularizedSteps out;
  out.rewards.resize(n);
  out.logratio.resize(n);
  out.values.resize(n + 1);
  for (int h = 0; h < n; ++h) {
    double reward = 0.0;
    double logratio = 0.0;
    for (int i = view.steps[h].first; i <= view.steps[h].last; ++i) {
      const State& s = view.states[i];
      const int a = view.traj->actions[i];
      reward += view.traj->rewards[i];
      logratio += policy.log_prob(s, a) - ref.log_prob(s, a);
    }
    out.rewards[h] = reward;
    out.logratio[h] = logratio;
    out.values[h] = value.get(view.step_state(h));
  }
  out.values[n] = value.get(view.states.back());  // terminal pin: 0
  return out;
}

double n_step_from(const RegularizedSteps& steps, double beta, int h, int n) {
  const int total = static_cast<int>(steps.rewards.size());
  if (h < 0 || h >= total || n < 1 || n > total - h) {
    throw std::out_of_range("n_step_return: index out of range");
  }
  double g = steps.values[h + n];
  for (int l = 0; l < n; ++l) {
    g += -beta * steps.logratio[h + l] + steps.rewards[h + l];
  }
  return g;
}

double lambda_from(const RegularizedSteps& steps, double beta, double lambda,
                   int h, bool normalized) {
  const int total = static_cast<int>(steps.rewards.size());
  if (h < 0 || h > total) {
    throw std::out_of_range("lambda_return: index out of range");
  }
  if (h == total) return 0.0;
  const int remaining = total - h;
  if (lambda == 1.0) return n_step_from(steps, beta, h, remaining);
  double g = 0.0;
  double weight = 1.0;  // lambda^(n-1)
  for (int n = 1; n <= remaining; ++n) {
    g += weight * n_step_from(steps, beta, h, n);
    weight *= lambda;
  }
  g *= 1.0 - lambda;
  if (normalized) {
    // weight now holds lambda^remaining, the missing mass.
    g += weight * n_step_from(steps, beta, h, remaining);
  }
  return g;
}

std::vector<double> lambda_all_from(const RegularizedSteps& steps, double beta,
                                    double lambda, bool normalized) {
  const int total = static_cast<int>(steps.rewards.size());
  std::vector<double> g(total + 1, 0.0);
  // In the unnormalized form the per-step term carries weight
  // 1 - lambda^remaining (the finite-horizon deficit of the printed sum);
  // the normalized form and the lambda = 1 branch carry it in full.
  double deficit = 1.0 - lambda;  // 1 - lambda^1 at h = total - 1
  for (int h = total - 1; h >= 0; --h) {
    const double c = -beta * steps.logratio[h] + steps.rewards[h];
    const double c_weight =
        (normalized || lambda == 1.0) ? 1.0 : deficit;
    g[h] = c_weight * c + (1.0 - lambda) * steps.values[h + 1] +
           lambda * g[h + 1];
    deficit = 1.0 - lambda * (1.0 - deficit);
  }
  g.pop_back();
  return g;
}

namespace {

void check_token_index(const Trajectory& traj, int h) {
  if (h < 0 || h >= traj.n_steps()) {
    throw std::out_of_range("return: step index out of range");
  }
}

}  // namespace

double n_step_return(const Trajectory& traj, int h, int n,
                     const TabularValue& value_fn, const Policy& policy,
                     const Policy& ref_policy, double beta) {
  check_token_index(traj, h);
  const TrajectoryView view = make_token_view(traj);
  const RegularizedSteps steps =
      regularize(view, value_fn, policy, ref_policy);
  return n_step_from(steps, beta, h, n);
}

double lambda_return(const Trajectory& traj, int h, double lambda,
                     const TabularValue& value_fn, const Policy& policy,
                     const Policy& ref_policy, double beta, bool normalized) {
  if (lambda < 0.0 || lambda > 1.0) {
    throw std::invalid_argument("lambda_return: lambda must be in [0, 1]");
  }
  if (h == traj.n_steps()) return 0.0;
  check_token_index(traj, h);
  const TrajectoryView view = make_token_view(traj);
  const RegularizedSteps steps =
      regularize(view, value_fn, policy, ref_policy);
  return lambda_from(steps, beta, lambda, h, normalized);
}

std::vector<double> lambda_returns_recursive(const Trajectory& traj,
                                             double lambda,
                                             const TabularValue& value_fn,
                                             const Policy& policy,
                                             const Policy& ref_policy,
                                             double beta, bool normalized) {
  if (lambda < 0.0 || lambda > 1.0) {
    throw std::invalid_argument("lambda_return: lambda must be in [0, 1]");
  }
  const TrajectoryView view = make_token_view(traj);
  const RegularizedSteps steps =
      regularize(view, value_fn, policy, ref_policy);
  return lambda_all_from(steps, beta, lambda, normalized);
}

double is_weight(const Trajectory& traj, const Policy& policy) {
  if (traj.behavior_logprobs.size() != traj.actions.size()) {
    throw std::invalid_argument("is_weight: missing behavior log-probs");
  }
  const std::vector<State> states = trajectory_states(traj);
  double logratio = 0.0;
  for (int h = 0; h < traj.n_steps(); ++h) {
    const double mu = traj.behavior_logprobs[h];
    if (!std::isfinite(mu)) {
      throw std::invalid_argument("is_weight: non-finite behavior log-prob");
    }
    logratio += policy.log_prob(states[h], traj.actions[h]) - mu;
  }
  return std::exp(std::min(1.0, logratio));
}

}  // namespace softq
