#include "softq/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "softq/errors.hpp"
#include "softq/eval.hpp"

namespace softq {

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "dqo") return TrainMode::Dqo;
  if (name == "dro") return TrainMode::Dro;
  if (name == "bc" || name == "behavior-cloning") {
    return TrainMode::BehaviorCloning;
  }
  throw std::invalid_argument("unknown train mode: " + name);
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Dqo: return "dqo";
    case TrainMode::Dro: return "dro";
    case TrainMode::BehaviorCloning: return "bc";
  }
  return "?";
}

void TrainerConfig::validate() const {
  if (beta <= 0.0) throw std::invalid_argument("config: beta must be > 0");
  if (lambda < 0.0 || lambda > 1.0) {
    throw std::invalid_argument("config: lambda must be in [0, 1]");
  }
  if (lr_policy <= 0.0 || lr_value <= 0.0) {
    throw std::invalid_argument("config: learning rates must be > 0");
  }
  if (target_refresh_every < 1) {
    throw std::invalid_argument("config: target_refresh_every must be >= 1");
  }
  if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (batch_size < 1) {
    throw std::invalid_argument("config: batch_size must be >= 1");
  }
}

std::vector<double> trajectory_is_weights(const std::vector<Trajectory>& batch,
                                          const Policy& policy) {
  std::vector<double> weights(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    weights[i] = is_weight(batch[i], policy);
  }
  return weights;
}

namespace {

TrajectoryView make_view(const Trajectory& traj, TrainMode mode) {
  return mode == TrainMode::Dro ? make_macro_view(traj)
                                : make_token_view(traj);
}

void check_finite_loss(double loss, const char* which) {
  if (!std::isfinite(loss)) {
    throw NumericalError(std::string(which) + " loss is not finite");
  }
}

double mean_weight(const std::vector<double>& weights) {
  if (weights.empty()) return 1.0;
  double sum = 0.0;
  for (double w : weights) sum += w;
  return sum / static_cast<double>(weights.size());
}

}  // namespace

std::pair<LossBreakdown, ValueGradient> value_loss(
    const std::vector<Trajectory>& batch, const TabularValue& value,
    const ModelSnapshot& target, const Policy& ref,
    const std::vector<double>& is_weights, const TrainerConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("value_loss: empty batch");
  if (is_weights.size() != batch.size()) {
    throw std::invalid_argument("value_loss: weight count mismatch");
  }
  LossBreakdown breakdown;
  ValueGradient grad;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const TrajectoryView view = make_view(batch[t], cfg.mode);
    const RegularizedSteps steps =
        regularize(view, target.value, target.policy, ref);
    const double w = cfg.is_weight_on_v_loss ? is_weights[t] : 1.0;
    for (int h = 0; h < view.n_view_steps(); ++h) {
      const double g =
          lambda_from(steps, cfg.beta, cfg.lambda, h, cfg.normalized_lambda);
      const double residual = g - value.get(view.step_state(h));
      total += w * residual * residual;
      grad.add(view.step_state(h), -2.0 * w * residual * inv_batch);
      breakdown.max_abs_residual =
          std::max(breakdown.max_abs_residual, std::abs(residual));
      ++breakdown.n_residuals;
    }
  }
  breakdown.value_loss = total * inv_batch;
  breakdown.mean_is_weight = mean_weight(is_weights);
  check_finite_loss(breakdown.value_loss, "value");
  return {breakdown, std::move(grad)};
}

std::pair<LossBreakdown, PolicyGradient> policy_loss(
    const std::vector<Trajectory>& batch, const TabularPolicy& policy,
    const TabularValue& value, const ModelSnapshot& target, const Policy& ref,
    const std::vector<double>& is_weights, const TrainerConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("policy_loss: empty batch");
  if (is_weights.size() != batch.size()) {
    throw std::invalid_argument("policy_loss: weight count mismatch");
  }
  LossBreakdown breakdown;
  PolicyGradient grad(policy.action_count());
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;

  if (cfg.mode == TrainMode::BehaviorCloning) {
    for (const Trajectory& traj : batch) {
      if (!traj.correct) continue;
      const std::vector<State> states = trajectory_states(traj);
      for (int h = 0; h < traj.n_steps(); ++h) {
        total += -policy.log_prob(states[h], traj.actions[h]);
        const std::vector<double> probs = policy.action_probs(states[h]);
        for (int a = 0; a < policy.action_count(); ++a) {
          const double d = (a == traj.actions[h] ? 1.0 : 0.0) - probs[a];
          grad.add(states[h], a, -d * inv_batch);
        }
        ++breakdown.n_residuals;
      }
    }
    breakdown.policy_loss = total * inv_batch;
    check_finite_loss(breakdown.policy_loss, "policy");
    return {breakdown, std::move(grad)};
  }

  for (std::size_t t = 0; t < batch.size(); ++t) {
    const TrajectoryView view = make_view(batch[t], cfg.mode);
    const RegularizedSteps steps =
        regularize(view, target.value, target.policy, ref);
    const double w = cfg.is_weight_on_q_loss ? is_weights[t] : 1.0;
    for (int h = 0; h < view.n_view_steps(); ++h) {
      double live_logratio = 0.0;
      for (int i = view.steps[h].first; i <= view.steps[h].last; ++i) {
        live_logratio += policy.log_prob(view.states[i], batch[t].actions[i]) -
                         ref.log_prob(view.states[i], batch[t].actions[i]);
      }
      const double target_g = lambda_from(steps, cfg.beta, cfg.lambda, h + 1,
                                          cfg.normalized_lambda);
      const double residual =
          cfg.beta * live_logratio -
          (steps.rewards[h] + target_g - value.get(view.step_state(h)));
      total += w * residual * residual;
      const double coeff = 2.0 * w * residual * cfg.beta * inv_batch;
      for (int i = view.steps[h].first; i <= view.steps[h].last; ++i) {
        const std::vector<double> probs = policy.action_probs(view.states[i]);
        for (int a = 0; a < policy.action_count(); ++a) {
          const double d = (a == batch[t].actions[i] ? 1.0 : 0.0) - probs[a];
          grad.add(view.states[i], a, coeff * d);
        }
      }
      breakdown.max_abs_residual =
          std::max(breakdown.max_abs_residual, std::abs(residual));
      ++breakdown.n_residuals;
    }
  }
  breakdown.policy_loss = total * inv_batch;
  breakdown.mean_is_weight = mean_weight(is_weights);
  check_finite_loss(breakdown.policy_loss, "policy");
  return {breakdown, std::move(grad)};
}

std::string to_jsonl(const TrainingReport& report) {
  std::string out;
  for (const EpochRecord& rec : report.epochs) {
    nlohmann::json j;
    j["epoch"] = rec.epoch;
    j["policy_loss"] = rec.policy_loss;
    j["value_loss"] = rec.value_loss;
    j["mean_is_weight"] = rec.mean_is_weight;
    if (rec.greedy_accuracy) j["eval_greedy_accuracy"] = *rec.greedy_accuracy;
    if (rec.tv_to_oracle) j["eval_tv_to_oracle"] = *rec.tv_to_oracle;
    if (rec.value_process_correlation) {
      j["eval_value_process_correlation"] = *rec.value_process_correlation;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

TrainingReport train(const std::vector<Trajectory>& dataset,
                     TabularPolicy& policy, TabularValue& value,
                     const Policy& ref, const TrainerConfig& cfg,
                     const EvalContext* eval_ctx) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

  const bool bc = cfg.mode == TrainMode::BehaviorCloning;
  std::optional<AdamOptimizer> adam_policy, adam_value;
  if (cfg.optimizer == OptimizerKind::Adam) {
    adam_policy.emplace(cfg.lr_policy);
    adam_value.emplace(cfg.lr_value);
  }

  Rng shuffle_rng = make_rng(cfg.seed, 0);
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainingReport report;
  ModelSnapshot snapshot{policy, value};
  long updates = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1],
                order[uniform_int(shuffle_rng, static_cast<int>(i))]);
    }

    double epoch_policy_loss = 0.0;
    double epoch_value_loss = 0.0;
    double epoch_weight_sum = 0.0;
    std::size_t seen = 0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      if (updates % cfg.target_refresh_every == 0) {
        snapshot.policy = policy;
        snapshot.value = value;
      }
      const std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Trajectory> batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(dataset[order[i]]);
      }

      std::vector<double> weights =
          bc ? std::vector<double>(batch.size(), 1.0)
             : trajectory_is_weights(batch, policy);

      auto [policy_breakdown, policy_grad] =
          policy_loss(batch, policy, value, snapshot, ref, weights, cfg);
      LossBreakdown value_breakdown;
      ValueGradient value_grad;
      if (!bc) {
        std::tie(value_breakdown, value_grad) =
            value_loss(batch, value, snapshot, ref, weights, cfg);
      }

      if (cfg.optimizer == OptimizerKind::Adam) {
        adam_policy->update(policy, policy_grad);
        if (!bc) adam_value->update(value, value_grad);
      } else {
        apply_update(policy, policy_grad, cfg.lr_policy);
        if (!bc) apply_update(value, value_grad, cfg.lr_value);
      }
      ++updates;

      const double n = static_cast<double>(batch.size());
      epoch_policy_loss += policy_breakdown.policy_loss * n;
      epoch_value_loss += value_breakdown.value_loss * n;
      for (double w : weights) epoch_weight_sum += w;
      seen += batch.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.policy_loss = epoch_policy_loss / static_cast<double>(seen);
    rec.value_loss = epoch_value_loss / static_cast<double>(seen);
    rec.mean_is_weight = epoch_weight_sum / static_cast<double>(seen);
    check_finite_loss(rec.policy_loss, "policy");
    check_finite_loss(rec.value_loss, "value");

    if (eval_ctx != nullptr) {
      if (eval_ctx->mdp != nullptr && !eval_ctx->prompts.empty()) {
        rec.greedy_accuracy =
            accuracy_greedy(*eval_ctx->mdp, policy, eval_ctx->prompts);
      }
      if (eval_ctx->oracle != nullptr && !eval_ctx->tv_states.empty()) {
        rec.tv_to_oracle =
            tv_to_oracle(policy, *eval_ctx->oracle, eval_ctx->tv_states);
      }
      if (eval_ctx->process_scored != nullptr) {
        rec.value_process_correlation =
            value_process_correlation(value, *eval_ctx->process_scored);
      }
    }
    report.epochs.push_back(std::move(rec));
  }
  return report;
}

}  // namespace softq
