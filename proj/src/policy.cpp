#include "softq/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "softq/errors.hpp"

namespace softq {

double logsumexp(const std::vector<double>& xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - m);
  return m + std::log(sum);
}

double Policy::entropy(const State& s) const {
  const std::vector<double> probs = action_probs(s);
  double h = 0.0;
  for (int a = 0; a < action_count(); ++a) {
    if (probs[a] > 0.0) h -= probs[a] * log_prob(s, a);
  }
  return h;
}

double entropy(const Policy& policy, const State& s) {
  return policy.entropy(s);
}

namespace {

void check_nonterminal(const State& s, const char* op) {
  if (s.terminal) {
    throw std::invalid_argument(std::string(op) + ": terminal state query");
  }
}

}  // namespace

TabularPolicy::TabularPolicy(int n_actions) : n_actions_(n_actions) {
  if (n_actions < 1) {
    throw std::invalid_argument("policy: n_actions must be >= 1");
  }
}

double TabularPolicy::log_prob(const State& s, int action) const {
  check_nonterminal(s, "log_prob");
  if (action < 0 || action >= n_actions_) {
    throw std::invalid_argument("log_prob: action out of range");
  }
  const std::vector<double>* l = find_logits(s);
  if (l == nullptr) return -std::log(static_cast<double>(n_actions_));
  return (*l)[action] - logsumexp(*l);
}

std::vector<double> TabularPolicy::action_probs(const State& s) const {
  check_nonterminal(s, "action_probs");
  const std::vector<double>* l = find_logits(s);
  if (l == nullptr) {
    return std::vector<double>(n_actions_, 1.0 / n_actions_);
  }
  const double lse = logsumexp(*l);
  std::vector<double> probs(n_actions_);
  for (int a = 0; a < n_actions_; ++a) probs[a] = std::exp((*l)[a] - lse);
  return probs;
}

std::vector<double>& TabularPolicy::logits(const State& s) {
  check_nonterminal(s, "logits");
  auto [it, inserted] = table_.try_emplace(s, n_actions_, 0.0);
  (void)inserted;
  return it->second;
}

const std::vector<double>* TabularPolicy::find_logits(const State& s) const {
  auto it = table_.find(s);
  return it == table_.end() ? nullptr : &it->second;
}

void TabularPolicy::set_logits(const State& s, std::vector<double> l) {
  check_nonterminal(s, "set_logits");
  if (static_cast<int>(l.size()) != n_actions_) {
    throw std::invalid_argument("set_logits: wrong length");
  }
  table_[s] = std::move(l);
}

double TabularValue::get(const State& s) const {
  if (s.terminal) return 0.0;
  auto it = table_.find(s);
  return it == table_.end() ? 0.0 : it->second;
}

void TabularValue::set(const State& s, double v) {
  if (s.terminal) {
    throw std::invalid_argument("value: terminal states are pinned to 0");
  }
  table_[s] = v;
}

double& TabularValue::slot(const State& s) {
  if (s.terminal) {
    throw std::invalid_argument("value: terminal states are pinned to 0");
  }
  auto [it, inserted] = table_.try_emplace(s, 0.0);
  (void)inserted;
  return it->second;
}

void PolicyGradient::add(const State& s, int action, double g) {
  auto [it, inserted] = parts_.try_emplace(s, n_actions_, 0.0);
  (void)inserted;
  it->second[action] += g;
}

bool PolicyGradient::finite() const {
  for (const auto& [s, gs] : parts_) {
    for (double g : gs) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

void ValueGradient::add(const State& s, double g) {
  auto [it, inserted] = parts_.try_emplace(s, 0.0);
  (void)inserted;
  it->second += g;
}

bool ValueGradient::finite() const {
  for (const auto& [s, g] : parts_) {
    if (!std::isfinite(g)) return false;
  }
  return true;
}

PolicyGradient grad_log_prob(const TabularPolicy& policy, const State& s,
                             int action) {
  check_nonterminal(s, "grad_log_prob");
  PolicyGradient grad(policy.action_count());
  const std::vector<double> probs = policy.action_probs(s);
  for (int a = 0; a < policy.action_count(); ++a) {
    grad.add(s, a, (a == action ? 1.0 : 0.0) - probs[a]);
  }
  return grad;
}

void apply_update(TabularPolicy& policy, const PolicyGradient& grad,
                  double step_size) {
  if (step_size <= 0.0) {
    throw std::invalid_argument("apply_update: step_size must be > 0");
  }
  if (!grad.finite()) {
    throw NumericalError("apply_update: non-finite policy gradient entry");
  }
  for (const auto& [s, gs] : grad.parts()) {
    std::vector<double>& l = policy.logits(s);
    for (std::size_t a = 0; a < gs.size(); ++a) l[a] -= step_size * gs[a];
  }
}

void apply_update(TabularValue& value, const ValueGradient& grad,
                  double step_size) {
  if (step_size <= 0.0) {
    throw std::invalid_argument("apply_update: step_size must be > 0");
  }
  if (!grad.finite()) {
    throw NumericalError("apply_update: non-finite value gradient entry");
  }
  for (const auto& [s, g] : grad.parts()) {
    value.slot(s) -= step_size * g;
  }
}

AdamOptimizer::AdamOptimizer(double step_size, double beta1, double beta2,
                             double epsilon)
    : step_size_(step_size), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  if (step_size <= 0.0) {
    throw std::invalid_argument("adam: step_size must be > 0");
  }
}

void AdamOptimizer::update(TabularPolicy& policy, const PolicyGradient& grad) {
  if (!grad.finite()) {
    throw NumericalError("adam: non-finite policy gradient entry");
  }
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (const auto& [s, gs] : grad.parts()) {
    auto& m = m_policy_.try_emplace(s, gs.size(), 0.0).first->second;
    auto& v = v_policy_.try_emplace(s, gs.size(), 0.0).first->second;
    std::vector<double>& l = policy.logits(s);
    for (std::size_t a = 0; a < gs.size(); ++a) {
      m[a] = beta1_ * m[a] + (1.0 - beta1_) * gs[a];
      v[a] = beta2_ * v[a] + (1.0 - beta2_) * gs[a] * gs[a];
      l[a] -= step_size_ * (m[a] / c1) / (std::sqrt(v[a] / c2) + epsilon_);
    }
  }
}

void AdamOptimizer::update(TabularValue& value, const ValueGradient& grad) {
  if (!grad.finite()) {
    throw NumericalError("adam: non-finite value gradient entry");
  }
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (const auto& [s, g] : grad.parts()) {
    double& m = m_value_.try_emplace(s, 0.0).first->second;
    double& v = v_value_.try_emplace(s, 0.0).first->second;
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g * g;
    value.slot(s) -= step_size_ * (m / c1) / (std::sqrt(v / c2) + epsilon_);
  }
}

TabularPolicy make_stale_policy(const TokenMDP& mdp, std::uint64_t seed,
                                double noise_scale) {
  TabularPolicy policy(mdp.action_count());
  const std::vector<State> states = enumerate_nonterminal_states(mdp);
  for (std::size_t i = 0; i < states.size(); ++i) {
    Rng rng = make_rng(seed, i);
    std::vector<double> l(mdp.action_count());
    for (double& x : l) x = noise_scale * normal_unit(rng);
    policy.set_logits(states[i], std::move(l));
  }
  return policy;
}

}  // namespace softq
