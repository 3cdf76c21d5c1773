// Command-line front end: dataset generation, training, evaluation, exact
// oracle computation, process-reward synthesis, and the ablation grid.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "json.hpp"
#include "softq/checkpoint.hpp"
#include "softq/datagen.hpp"
#include "softq/errors.hpp"
#include "softq/eval.hpp"
#include "softq/process_reward.hpp"
#include "softq/trainer.hpp"

namespace fs = std::filesystem;
using namespace softq;

namespace {

struct EnvOptions {
  std::string name = "modchain";
  int base = 5;
  int len = 3;
  int vocab = 3;
  int depth = 3;
  std::uint64_t seed = 0;
};

EnvSpec to_spec(const EnvOptions& env) {
  EnvSpec spec;
  spec.name = env.name;
  spec.seed = env.seed;
  if (env.name == "modchain") {
    spec.base = env.base;
    spec.prompt_len = env.len;
  } else {
    spec.vocab_size = env.vocab;
    spec.depth = env.depth;
  }
  return spec;
}

void add_env_options(CLI::App* cmd, EnvOptions& env) {
  cmd->add_option("--env", env.name, "Environment")
      ->check(CLI::IsMember({"modchain", "treebandit"}))
      ->capture_default_str();
  cmd->add_option("--base", env.base, "ModChain base")->check(CLI::Range(2, 64));
  cmd->add_option("--len", env.len, "ModChain prompt length")
      ->check(CLI::Range(1, 16));
  cmd->add_option("--vocab", env.vocab, "TreeBandit vocabulary size")
      ->check(CLI::Range(2, 16));
  cmd->add_option("--depth", env.depth, "TreeBandit depth")
      ->check(CLI::Range(1, 10));
  cmd->add_option("--env-seed", env.seed, "Environment seed");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

fs::path prepare_out_dir(const std::string& out_dir) {
  fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  return dir;
}

void echo_config(const CLI::App& app, const fs::path& dir) {
  std::ofstream out(dir / "config.ini");
  if (out) out << app.config_to_str(true, true);
}

TabularPolicy make_reference(const TokenMDP& mdp, double ref_noise,
                             std::uint64_t ref_seed) {
  if (ref_noise > 0.0) return make_stale_policy(mdp, ref_seed, ref_noise);
  return TabularPolicy(mdp.action_count());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"softq: offline KL-regularized soft actor-critic at desk scale"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a key-value file");

  // ------------------------------------------------------------- gen-data
  EnvOptions gen_env;
  std::string gen_out, gen_out_dir;
  std::string gen_behavior = "uniform";
  double gen_noise = 1.0;
  std::uint64_t gen_behavior_seed = 0, gen_seed = 0;
  int gen_n = 20, gen_k = 20, gen_n_test = 0, gen_threads = 1;
  CLI::App* gen = app.add_subcommand("gen-data", "Sample an offline dataset");
  add_env_options(gen, gen_env);
  gen->add_option("--behavior", gen_behavior, "Behavior policy")
      ->check(CLI::IsMember({"uniform", "stale"}))
      ->capture_default_str();
  gen->add_option("--noise-scale", gen_noise, "Stale policy noise scale");
  gen->add_option("--behavior-seed", gen_behavior_seed, "Stale policy seed");
  gen->add_option("--n", gen_n, "Prompts to draw")->check(CLI::Range(1, 1 << 20));
  gen->add_option("--k", gen_k, "Samples per prompt")
      ->check(CLI::Range(1, 1 << 20));
  gen->add_option("--n-test", gen_n_test, "Held-out prompts to record")
      ->check(CLI::Range(0, 1 << 20));
  gen->add_option("--seed", gen_seed, "Dataset seed")->envname("SOFTQ_SEED");
  gen->add_option("--threads", gen_threads, "Worker cap")
      ->check(CLI::Range(1, 256));
  gen->add_option("--out", gen_out, "Dataset file path");
  gen->add_option("--out-dir", gen_out_dir, "Directory for dataset.jsonl");
  gen->callback([&]() {
    if (gen_out.empty() && gen_out_dir.empty()) {
      throw CLI::ValidationError("gen-data", "--out or --out-dir is required");
    }
    std::unique_ptr<TokenMDP> mdp = make_env(to_spec(gen_env));
    BehaviorSpec behavior;
    if (gen_behavior == "stale") {
      behavior = BehaviorSpec{"stale", gen_noise, gen_behavior_seed};
    }
    Dataset dataset = generate_dataset(*mdp, behavior, gen_n, gen_k,
                                       gen_seed, gen_threads, gen_n_test);
    fs::path path = gen_out.empty()
                        ? prepare_out_dir(gen_out_dir) / "dataset.jsonl"
                        : fs::path(gen_out);
    save_dataset(dataset, path.string());
    if (!gen_out_dir.empty()) echo_config(app, prepare_out_dir(gen_out_dir));
    int correct = 0;
    for (const auto& t : dataset.trajectories) correct += t.correct ? 1 : 0;
    std::cout << "wrote " << dataset.trajectories.size() << " trajectories to "
              << path.string() << " (" << correct << " correct)\n";
  });

  // ----------------------------------------------------------------- train
  std::string train_data, train_out_dir = "out", train_oracle;
  std::string train_mode = "dqo", train_optimizer = "sgd";
  TrainerConfig train_cfg;
  bool no_is_q = false, no_is_v = false, train_normalized = false;
  double train_ref_noise = 0.0;
  std::uint64_t train_ref_seed = 0;
  int train_min_visits = 20;
  CLI::App* tr = app.add_subcommand("train", "Train on an offline dataset");
  tr->add_option("--data", train_data, "Dataset file")->required();
  tr->add_option("--out-dir", train_out_dir, "Output directory")
      ->capture_default_str();
  tr->add_option("--mode", train_mode, "dqo | dro | bc")
      ->check(CLI::IsMember({"dqo", "dro", "bc"}))
      ->capture_default_str();
  tr->add_option("--beta", train_cfg.beta, "KL coefficient")
      ->capture_default_str();
  tr->add_option("--lambda", train_cfg.lambda, "Lambda-return mixing")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  tr->add_option("--lr-policy", train_cfg.lr_policy, "Policy step size")
      ->capture_default_str();
  tr->add_option("--lr-value", train_cfg.lr_value, "Value step size")
      ->capture_default_str();
  tr->add_option("--epochs", train_cfg.epochs, "Training epochs")
      ->check(CLI::Range(1, 1 << 20))
      ->capture_default_str();
  tr->add_option("--batch-size", train_cfg.batch_size, "Batch size")
      ->check(CLI::Range(1, 1 << 20))
      ->capture_default_str();
  tr->add_option("--target-refresh", train_cfg.target_refresh_every,
                 "Updates between target snapshot refreshes")
      ->check(CLI::Range(1, 1 << 20))
      ->capture_default_str();
  tr->add_option("--seed", train_cfg.seed, "Training seed")
      ->envname("SOFTQ_SEED");
  tr->add_flag("--no-is-q", no_is_q, "Disable IS weight on the policy loss");
  tr->add_flag("--no-is-v", no_is_v, "Disable IS weight on the value loss");
  tr->add_flag("--normalized-lambda", train_normalized,
               "Assign the lambda weight deficit to the full return");
  tr->add_option("--optimizer", train_optimizer, "sgd | adam")
      ->check(CLI::IsMember({"sgd", "adam"}))
      ->capture_default_str();
  tr->add_option("--oracle", train_oracle,
                 "Oracle dump; enables per-epoch distance reporting");
  tr->add_option("--min-visits", train_min_visits,
                 "Visit threshold for oracle distance states")
      ->capture_default_str();
  tr->add_option("--ref-noise", train_ref_noise,
                 "Reference policy noise scale (0 = uniform)");
  tr->add_option("--ref-seed", train_ref_seed, "Reference policy seed");
  tr->callback([&]() {
    Dataset dataset = load_dataset(train_data);
    std::unique_ptr<TokenMDP> mdp = make_env(dataset.manifest.env);
    train_cfg.mode = train_mode_from_string(train_mode);
    train_cfg.optimizer = train_optimizer == "adam" ? OptimizerKind::Adam
                                                    : OptimizerKind::Sgd;
    train_cfg.is_weight_on_q_loss = !no_is_q;
    train_cfg.is_weight_on_v_loss = !no_is_v;
    train_cfg.normalized_lambda = train_normalized;

    TabularPolicy policy(mdp->action_count());
    TabularValue value;
    TabularPolicy ref = make_reference(*mdp, train_ref_noise, train_ref_seed);

    EvalContext ctx;
    ctx.mdp = mdp.get();
    ctx.prompts = unique_prompts(dataset);
    SoftSolution oracle;
    if (!train_oracle.empty()) {
      Checkpoint dump = load_checkpoint(train_oracle);
      oracle.n_actions = dump.policy.action_count();
      for (const auto& [s, l] : dump.policy.table()) {
        oracle.pi_star[s] = dump.policy.action_probs(s);
        oracle.v_star[s] = dump.value.get(s);
      }
      ctx.oracle = &oracle;
      ctx.tv_states =
          states_visited_at_least(dataset.trajectories, train_min_visits);
    }
    const bool has_process_scores = std::any_of(
        dataset.trajectories.begin(), dataset.trajectories.end(),
        [](const Trajectory& t) { return !t.segment_boundaries.empty(); });
    if (has_process_scores) ctx.process_scored = &dataset.trajectories;

    TrainingReport report =
        train(dataset.trajectories, policy, value, ref, train_cfg, &ctx);

    fs::path dir = prepare_out_dir(train_out_dir);
    write_text(dir / "report.jsonl", to_jsonl(report));
    save_checkpoint(policy, value, mdp->vocab(),
                    (dir / "checkpoint.txt").string());
    echo_config(app, dir);
    const EpochRecord& last = report.epochs.back();
    std::cout << "epoch " << last.epoch << ": policy_loss=" << last.policy_loss
              << " value_loss=" << last.value_loss;
    if (last.greedy_accuracy) {
      std::cout << " greedy_accuracy=" << *last.greedy_accuracy;
    }
    if (last.tv_to_oracle) std::cout << " tv_to_oracle=" << *last.tv_to_oracle;
    std::cout << "\n";
  });

  // ------------------------------------------------------------------ eval
  std::string eval_checkpoint, eval_data, eval_oracle, eval_out_dir;
  double eval_beta = 0.03, eval_ref_noise = 0.0;
  std::uint64_t eval_seed = 0, eval_ref_seed = 0;
  int eval_sample_n = 0, eval_min_visits = 20;
  std::string eval_split = "train";
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a trained checkpoint");
  ev->add_option("--checkpoint", eval_checkpoint, "Model checkpoint")
      ->required();
  ev->add_option("--data", eval_data, "Dataset supplying env and prompts")
      ->required();
  ev->add_option("--oracle", eval_oracle, "Oracle dump for distance");
  ev->add_option("--beta", eval_beta, "KL coefficient for the return")
      ->capture_default_str();
  ev->add_option("--sample-n", eval_sample_n, "Sampled decodes per prompt");
  ev->add_option("--min-visits", eval_min_visits,
                 "Visit threshold for oracle distance states")
      ->capture_default_str();
  ev->add_option("--seed", eval_seed, "Sampling seed")->envname("SOFTQ_SEED");
  ev->add_option("--ref-noise", eval_ref_noise,
                 "Reference policy noise scale (0 = uniform)");
  ev->add_option("--ref-seed", eval_ref_seed, "Reference policy seed");
  ev->add_option("--split", eval_split, "Prompt split to score")
      ->check(CLI::IsMember({"train", "test"}))
      ->capture_default_str();
  ev->add_option("--out-dir", eval_out_dir, "Directory for report.jsonl");
  ev->callback([&]() {
    Dataset dataset = load_dataset(eval_data);
    std::unique_ptr<TokenMDP> mdp = make_env(dataset.manifest.env);
    Checkpoint checkpoint = load_checkpoint(eval_checkpoint);

    EvalReport report;
    report.seed = eval_seed;
    std::vector<std::vector<int>> prompts;
    if (eval_split == "test") {
      prompts = dataset.manifest.test_prompts;
      if (prompts.empty()) {
        throw IoError("dataset carries no test prompts; regenerate with --n-test");
      }
    } else {
      prompts = unique_prompts(dataset);
    }
    report.greedy_accuracy = accuracy_greedy(*mdp, checkpoint.policy, prompts);
    if (eval_sample_n > 0) {
      Rng rng = make_rng(eval_seed, 1);
      report.sample_accuracy = accuracy_sampled(*mdp, checkpoint.policy,
                                                prompts, eval_sample_n, rng);
      report.sample_n = eval_sample_n;
    }
    TabularPolicy ref = make_reference(*mdp, eval_ref_noise, eval_ref_seed);
    report.expected_regularized_return = mean_regularized_return(
        *mdp, checkpoint.policy, ref, eval_beta, prompts);
    if (!eval_oracle.empty()) {
      Checkpoint oracle = load_checkpoint(eval_oracle);
      const std::vector<State> states =
          states_visited_at_least(dataset.trajectories, eval_min_visits);
      report.tv_to_oracle =
          max_total_variation(checkpoint.policy, oracle.policy, states);
    }
    report.value_process_correlation =
        value_process_correlation(checkpoint.value, dataset.trajectories);

    const std::string record = to_json(report);
    std::cout << record << "\n";
    if (!eval_out_dir.empty()) {
      fs::path dir = prepare_out_dir(eval_out_dir);
      std::ofstream out(dir / "report.jsonl", std::ios::app);
      if (!out) throw IoError("cannot write report.jsonl");
      out << record << "\n";
    }
  });

  // ---------------------------------------------------------------- oracle
  EnvOptions oracle_env;
  std::string oracle_out, oracle_out_dir;
  double oracle_beta = 0.03, oracle_ref_noise = 0.0;
  std::uint64_t oracle_ref_seed = 0;
  CLI::App* orc =
      app.add_subcommand("oracle", "Exact soft optimum by backward induction");
  add_env_options(orc, oracle_env);
  orc->add_option("--beta", oracle_beta, "KL coefficient")
      ->capture_default_str();
  orc->add_option("--ref-noise", oracle_ref_noise,
                  "Reference policy noise scale (0 = uniform)");
  orc->add_option("--ref-seed", oracle_ref_seed, "Reference policy seed");
  orc->add_option("--out", oracle_out, "Oracle dump path");
  orc->add_option("--out-dir", oracle_out_dir, "Directory for oracle.txt");
  orc->callback([&]() {
    if (oracle_out.empty() && oracle_out_dir.empty()) {
      throw CLI::ValidationError("oracle", "--out or --out-dir is required");
    }
    std::unique_ptr<TokenMDP> mdp = make_env(to_spec(oracle_env));
    TabularPolicy ref = make_reference(*mdp, oracle_ref_noise, oracle_ref_seed);
    SoftSolution solution = soft_backward_induction(*mdp, ref, oracle_beta);
    fs::path path = oracle_out.empty()
                        ? prepare_out_dir(oracle_out_dir) / "oracle.txt"
                        : fs::path(oracle_out);
    save_solution(solution, mdp->vocab(), path.string());
    if (!oracle_out_dir.empty()) echo_config(app, prepare_out_dir(oracle_out_dir));
    std::cout << "wrote " << solution.v_star.size() << " states to "
              << path.string() << "\n";
  });

  // -------------------------------------------------------- process-rewards
  std::string proc_data, proc_out, proc_out_dir, proc_segmenter = "per-token";
  std::string proc_sampler = "uniform";
  double proc_sampler_noise = 1.0;
  std::uint64_t proc_seed = 0, proc_sampler_seed = 0;
  int proc_rollouts = 20, proc_width = 2, proc_threads = 1;
  bool proc_correct_full = false;
  CLI::App* proc = app.add_subcommand(
      "process-rewards", "Synthesize per-segment rewards via prefix rollouts");
  proc->add_option("--data", proc_data, "Dataset file")->required();
  proc->add_option("--out", proc_out, "Augmented dataset path");
  proc->add_option("--out-dir", proc_out_dir, "Directory for dataset.jsonl");
  proc->add_option("--n-rollouts", proc_rollouts, "Completions per prefix")
      ->check(CLI::Range(1, 1 << 16))
      ->capture_default_str();
  proc->add_option("--segmenter", proc_segmenter, "per-token | width")
      ->check(CLI::IsMember({"per-token", "width"}))
      ->capture_default_str();
  proc->add_option("--width", proc_width, "Fixed segment width")
      ->check(CLI::Range(1, 1 << 16));
  proc->add_option("--sampler", proc_sampler, "Prefix completion policy")
      ->check(CLI::IsMember({"uniform", "stale"}))
      ->capture_default_str();
  proc->add_option("--sampler-noise", proc_sampler_noise,
                   "Stale sampler noise scale");
  proc->add_option("--sampler-seed", proc_sampler_seed, "Stale sampler seed");
  proc->add_option("--seed", proc_seed, "Rollout seed")->envname("SOFTQ_SEED");
  proc->add_option("--threads", proc_threads, "Worker cap")
      ->check(CLI::Range(1, 256));
  proc->add_flag("--correct-full", proc_correct_full,
                 "Score each segment of a correct response with a full unit");
  proc->callback([&]() {
    if (proc_out.empty() && proc_out_dir.empty()) {
      throw CLI::ValidationError("process-rewards",
                                 "--out or --out-dir is required");
    }
    Dataset dataset = load_dataset(proc_data);
    std::unique_ptr<TokenMDP> mdp = make_env(dataset.manifest.env);
    BehaviorSpec sampler_spec;
    if (proc_sampler == "stale") {
      sampler_spec =
          BehaviorSpec{"stale", proc_sampler_noise, proc_sampler_seed};
    }
    TabularPolicy sampler = make_behavior_policy(*mdp, sampler_spec);
    ProcessRewardOptions options;
    options.segmentation.kind = proc_segmenter == "per-token"
                                    ? Segmenter::PerToken
                                    : Segmenter::FixedWidth;
    options.segmentation.width = proc_width;
    options.n_rollouts = proc_rollouts;
    options.correct_full_per_segment = proc_correct_full;
    Dataset augmented = augment_with_process_rewards(
        *mdp, dataset, sampler, options, proc_seed, proc_threads);
    fs::path path = proc_out.empty()
                        ? prepare_out_dir(proc_out_dir) / "dataset.jsonl"
                        : fs::path(proc_out);
    save_dataset(augmented, path.string());
    if (!proc_out_dir.empty()) echo_config(app, prepare_out_dir(proc_out_dir));
    std::cout << "wrote augmented dataset to " << path.string() << "\n";
  });

  // ---------------------------------------------------------------- ablate
  EnvOptions ablate_env;
  std::string ablate_out_dir = "out", ablate_grid = "is_q,is_v";
  double ablate_noise = 1.0, ablate_beta = 0.1;
  int ablate_seeds = 5, ablate_n = 30, ablate_k = 100, ablate_epochs = 60;
  TrainerConfig ablate_cfg;
  CLI::App* ab = app.add_subcommand(
      "ablate", "Run the importance-sampling / lambda ablation grid");
  add_env_options(ab, ablate_env);
  ab->add_option("--grid", ablate_grid, "Dimensions: is_q,is_v,lambda")
      ->capture_default_str();
  ab->add_option("--seeds", ablate_seeds, "Seeds per cell")
      ->check(CLI::Range(1, 64))
      ->capture_default_str();
  ab->add_option("--noise-scale", ablate_noise, "Stale behavior noise")
      ->capture_default_str();
  ab->add_option("--beta", ablate_beta, "KL coefficient")
      ->capture_default_str();
  ab->add_option("--n", ablate_n, "Prompts per dataset")->capture_default_str();
  ab->add_option("--k", ablate_k, "Samples per prompt")->capture_default_str();
  ab->add_option("--epochs", ablate_epochs, "Epochs per run")
      ->capture_default_str();
  ab->add_option("--lr-policy", ablate_cfg.lr_policy, "Policy step size")
      ->capture_default_str();
  ab->add_option("--lr-value", ablate_cfg.lr_value, "Value step size")
      ->capture_default_str();
  ab->add_option("--batch-size", ablate_cfg.batch_size, "Batch size")
      ->capture_default_str();
  ab->add_option("--out-dir", ablate_out_dir, "Output directory")
      ->capture_default_str();
  ab->callback([&]() {
    const bool grid_q = ablate_grid.find("is_q") != std::string::npos;
    const bool grid_v = ablate_grid.find("is_v") != std::string::npos;
    const bool grid_lambda = ablate_grid.find("lambda") != std::string::npos;
    const std::vector<bool> q_values = grid_q ? std::vector<bool>{true, false}
                                              : std::vector<bool>{true};
    const std::vector<bool> v_values = grid_v ? std::vector<bool>{true, false}
                                              : std::vector<bool>{true};
    const std::vector<double> lambdas =
        grid_lambda ? std::vector<double>{1.0, 0.95}
                    : std::vector<double>{1.0};

    std::unique_ptr<TokenMDP> mdp = make_env(to_spec(ablate_env));
    fs::path dir = prepare_out_dir(ablate_out_dir);
    std::ofstream table(dir / "ablation.jsonl");

    std::cout << "is_q  is_v  lambda  mean_greedy_accuracy\n";
    for (bool q : q_values) {
      for (bool v : v_values) {
        for (double lambda : lambdas) {
          double total = 0.0;
          std::vector<double> per_seed;
          for (int seed = 0; seed < ablate_seeds; ++seed) {
            BehaviorSpec behavior{"stale", ablate_noise,
                                  static_cast<std::uint64_t>(seed) + 101};
            Dataset dataset = generate_dataset(*mdp, behavior, ablate_n,
                                               ablate_k, seed + 1);
            TabularPolicy policy(mdp->action_count());
            TabularValue value;
            TabularPolicy ref(mdp->action_count());
            TrainerConfig cfg = ablate_cfg;
            cfg.beta = ablate_beta;
            cfg.lambda = lambda;
            cfg.epochs = ablate_epochs;
            cfg.is_weight_on_q_loss = q;
            cfg.is_weight_on_v_loss = v;
            cfg.seed = static_cast<std::uint64_t>(seed) + 1;
            train(dataset.trajectories, policy, value, ref, cfg);
            const double acc =
                accuracy_greedy(*mdp, policy, unique_prompts(dataset));
            per_seed.push_back(acc);
            total += acc;
          }
          const double mean = total / static_cast<double>(ablate_seeds);
          std::cout << (q ? " on " : " off") << "  " << (v ? " on " : " off")
                    << "  " << lambda << "    " << mean << "\n";
          nlohmann::json j;
          j["is_q"] = q;
          j["is_v"] = v;
          j["lambda"] = lambda;
          j["mean_greedy_accuracy"] = mean;
          j["per_seed"] = per_seed;
          table << j.dump() << "\n";
        }
      }
    }
    echo_config(app, dir);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid arguments: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
