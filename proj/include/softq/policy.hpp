#ifndef SOFTQ_POLICY_HPP_
#define SOFTQ_POLICY_HPP_

#include <unordered_map>
#include <vector>

#include "softq/mdp.hpp"

namespace softq {

double logsumexp(const std::vector<double>& xs);

// Distribution over a fixed action set, conditioned on a state.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual int action_count() const = 0;
  virtual double log_prob(const State& s, int action) const = 0;
  virtual std::vector<double> action_probs(const State& s) const = 0;
  double entropy(const State& s) const;
};

double entropy(const Policy& policy, const State& s);

// Softmax policy backed by a state-indexed logit table. Unseen states read as
// all-zero logits (a uniform distribution); they are materialized only when
// written to.
class TabularPolicy : public Policy {
 public:
  using Table = std::unordered_map<State, std::vector<double>, StateHash>;

  explicit TabularPolicy(int n_actions);

  int action_count() const override { return n_actions_; }
  double log_prob(const State& s, int action) const override;
  std::vector<double> action_probs(const State& s) const override;

  // Mutable access; lazily initializes to zeros. Throws on terminal states.
  std::vector<double>& logits(const State& s);
  const std::vector<double>* find_logits(const State& s) const;
  void set_logits(const State& s, std::vector<double> logits);
  const Table& table() const { return table_; }

 private:
  int n_actions_;
  Table table_;
};

// State-value table with terminal states pinned to 0.
class TabularValue {
 public:
  using Table = std::unordered_map<State, double, StateHash>;

  double get(const State& s) const;
  void set(const State& s, double v);
  double& slot(const State& s);  // lazy init; throws on terminal states
  const Table& table() const { return table_; }

 private:
  Table table_;
};

// Sparse accumulators of partial derivatives, keyed by parameter coordinate.
// Accumulation is additive so the merge order only matters up to
// floating-point commutativity.
class PolicyGradient {
 public:
  using Table = std::unordered_map<State, std::vector<double>, StateHash>;

  explicit PolicyGradient(int n_actions) : n_actions_(n_actions) {}
  int action_count() const { return n_actions_; }
  void add(const State& s, int action, double g);
  const Table& parts() const { return parts_; }
  bool finite() const;

 private:
  int n_actions_;
  Table parts_;
};

class ValueGradient {
 public:
  using Table = std::unordered_map<State, double, StateHash>;

  void add(const State& s, double g);
  const Table& parts() const { return parts_; }
  bool finite() const;

 private:
  Table parts_;
};

// d log pi(a|s) / d logit(s, a') = 1{a=a'} - pi(a'|s).
PolicyGradient grad_log_prob(const TabularPolicy& policy, const State& s,
                             int action);

// Plain gradient-descent steps; non-finite gradients abort with a diagnostic.
void apply_update(TabularPolicy& policy, const PolicyGradient& grad,
                  double step_size);
void apply_update(TabularValue& value, const ValueGradient& grad,
                  double step_size);

// Adaptive-moment updates; kept off for oracle-equivalence runs.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double step_size, double beta1 = 0.9,
                         double beta2 = 0.999, double epsilon = 1e-8);
  void update(TabularPolicy& policy, const PolicyGradient& grad);
  void update(TabularValue& value, const ValueGradient& grad);

 private:
  double step_size_, beta1_, beta2_, epsilon_;
  long step_ = 0;
  std::unordered_map<State, std::vector<double>, StateHash> m_policy_, v_policy_;
  std::unordered_map<State, double, StateHash> m_value_, v_value_;
};

// Frozen behavior policy with seeded gaussian logits over every reachable
// non-terminal state of the environment.
TabularPolicy make_stale_policy(const TokenMDP& mdp, std::uint64_t seed,
                                double noise_scale);

}  // namespace softq

#endif  // SOFTQ_POLICY_HPP_
