#ifndef SOFTQ_TRAINER_HPP_
#define SOFTQ_TRAINER_HPP_

#include <optional>
#include <string>
#include <utility>

#include "softq/oracle.hpp"
#include "softq/returns.hpp"

namespace softq {

enum class TrainMode { Dqo, Dro, BehaviorCloning };
enum class OptimizerKind { Sgd, Adam };

TrainMode train_mode_from_string(const std::string& name);
std::string to_string(TrainMode mode);

struct TrainerConfig {
  double beta = 0.03;
  double lambda = 1.0;
  double lr_policy = 0.1;
  double lr_value = 0.1;
  bool is_weight_on_q_loss = true;  // the policy loss
  bool is_weight_on_v_loss = true;
  int target_refresh_every = 1;  // parameter updates between snapshot refreshes
  int epochs = 20;
  int batch_size = 32;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::Dqo;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  bool normalized_lambda = false;

  void validate() const;  // throws std::invalid_argument
};

struct LossBreakdown {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double mean_is_weight = 1.0;
  double max_abs_residual = 0.0;
  long n_residuals = 0;
};

// Stop-gradient copies the targets are evaluated against.
struct ModelSnapshot {
  TabularPolicy policy;
  TabularValue value;
};

// w(tau) per trajectory, from the current policy. Callers that freeze the
// weights (gradient checks) can reuse one vector across evaluations.
std::vector<double> trajectory_is_weights(const std::vector<Trajectory>& batch,
                                          const Policy& policy);

// L_V: per trajectory, w * sum_h (G^lambda(s_h) - V(s_h))^2, averaged over
// the batch. Targets come from the snapshot; the gradient flows only through
// the live value table.
std::pair<LossBreakdown, ValueGradient> value_loss(
    const std::vector<Trajectory>& batch, const TabularValue& value,
    const ModelSnapshot& target, const Policy& ref,
    const std::vector<double>& is_weights, const TrainerConfig& cfg);

// L_pi: per trajectory, w * sum_h (beta log(pi/ref)(a_h|s_h)
//   - (r_h + G^lambda(s_{h+1}) - V(s_h)))^2, averaged over the batch.
// Only log pi carries gradient; V(s_h) is read from the live table as a
// constant. Behavior-cloning mode instead minimizes negative log-likelihood
// over correct-labeled trajectories.
std::pair<LossBreakdown, PolicyGradient> policy_loss(
    const std::vector<Trajectory>& batch, const TabularPolicy& policy,
    const TabularValue& value, const ModelSnapshot& target, const Policy& ref,
    const std::vector<double>& is_weights, const TrainerConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double mean_is_weight = 1.0;
  std::optional<double> greedy_accuracy;
  std::optional<double> tv_to_oracle;
  std::optional<double> value_process_correlation;
};

struct TrainingReport {
  std::vector<EpochRecord> epochs;
};

std::string to_jsonl(const TrainingReport& report);

// Optional per-epoch measurements appended to the report.
struct EvalContext {
  const TokenMDP* mdp = nullptr;
  std::vector<std::vector<int>> prompts;  // greedy accuracy
  const SoftSolution* oracle = nullptr;
  std::vector<State> tv_states;
  const std::vector<Trajectory>* process_scored = nullptr;  // correlation
};

// Seeded epoch/batch loop: shuffle, refresh snapshots on schedule, compute
// both losses against pre-update parameters, apply updates.
TrainingReport train(const std::vector<Trajectory>& dataset,
                     TabularPolicy& policy, TabularValue& value,
                     const Policy& ref, const TrainerConfig& cfg,
                     const EvalContext* eval_ctx = nullptr);

}  // namespace softq

#endif  // SOFTQ_TRAINER_HPP_
