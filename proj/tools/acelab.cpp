// acelab command-line experiment runner.
//
// Subcommands: train, eval, sweep-alpha, ablate-modulation, verify-theory.
// Exit codes: 0 success, 1 usage error, 2 check failure, 3 I/O error.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "acelab/config.hpp"
#include "acelab/io.hpp"
#include "acelab/run.hpp"

namespace {

using namespace acelab;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitCheckFailure = 2;
constexpr int kExitIoError = 3;

std::string default_out_dir(const std::string& command, std::uint64_t seed) {
  return default_output_root() + "/" + command + "-s" + std::to_string(seed) + "-" +
         std::to_string(static_cast<unsigned long long>(::getpid()));
}

// One CLI flag per trainer-config key; flag > config file > built-in default.
struct ConfigFlags {
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    for (const auto& [key, default_value] : config_to_entries(TrainerConfig{})) {
      app->add_option("--" + key, values[key], "override config key " + key);
    }
  }

  TrainerConfig build(CLI::App* app, const std::string& config_path) const {
    TrainerConfig config;
    if (!config_path.empty()) apply_config_entries(config, parse_key_value_file(config_path));
    KeyValueMap overrides;
    for (const auto& [key, value] : values) {
      if (app->count("--" + key) > 0) overrides[key] = value;
    }
    apply_config_entries(config, overrides);
    return config;
  }
};

void print_final_metrics(const TrainResult& result) {
  if (result.metrics.empty()) {
    std::cout << "no checkpoints recorded (steps == 0)\n";
    return;
  }
  const MetricsRecord& final = result.metrics.back();
  std::cout << "final step " << final.step << ": mean_reward "
            << format_double(final.mean_reward) << ", oef " << format_double(final.oef)
            << ", entropy " << format_double(final.entropy) << ", distinct_correct "
            << final.distinct_correct << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acelab: desk-scale RLVR laboratory with confidence-aware error penalties"};
  app.require_subcommand(1);

  // --- train ---
  auto* train_cmd = app.add_subcommand("train", "run a training campaign");
  std::string train_config_path, train_tasks_path, train_out;
  train_cmd->add_option("--config", train_config_path, "key=value config file");
  train_cmd->add_option("--tasks", train_tasks_path, "task dataset file")->required();
  train_cmd->add_option("--out", train_out, "output directory");
  ConfigFlags train_flags;
  train_flags.attach(train_cmd);

  // --- eval ---
  auto* eval_cmd = app.add_subcommand("eval", "pass@k table for a checkpoint");
  std::string eval_checkpoint, eval_tasks_path, eval_out;
  int eval_n = 32;
  std::vector<int> eval_ks = {1, 2, 4, 8, 16, 32};
  std::uint64_t eval_seed = 0;
  double eval_temperature = 1.0;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "policy checkpoint")->required();
  eval_cmd->add_option("--tasks", eval_tasks_path, "task dataset file")->required();
  eval_cmd->add_option("--n", eval_n, "samples per task");
  eval_cmd->add_option("--ks", eval_ks, "k values")->delimiter(',');
  eval_cmd->add_option("--seed", eval_seed, "sampling seed");
  eval_cmd->add_option("--temperature", eval_temperature, "sampling temperature");
  eval_cmd->add_option("--out", eval_out, "output directory");

  // --- sweep-alpha ---
  auto* sweep_cmd = app.add_subcommand("sweep-alpha", "train+eval across alpha values");
  std::string sweep_config_path, sweep_tasks_path, sweep_out;
  std::vector<double> sweep_alphas = {0.0, 0.1, 0.5, 1.0, 2.0, 5.0};
  std::vector<std::uint64_t> sweep_seeds = {1, 2, 3, 4, 5};
  sweep_cmd->add_option("--config", sweep_config_path, "key=value config file");
  sweep_cmd->add_option("--tasks", sweep_tasks_path, "task dataset file")->required();
  sweep_cmd->add_option("--alphas", sweep_alphas, "alpha grid")->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep_seeds, "seed list")->delimiter(',');
  sweep_cmd->add_option("--out", sweep_out, "output directory");
  ConfigFlags sweep_flags;
  sweep_flags.attach(sweep_cmd);

  // --- ablate-modulation ---
  auto* ablate_cmd =
      app.add_subcommand("ablate-modulation", "paired softplus/relu/baseline runs");
  std::string ablate_config_path, ablate_tasks_path, ablate_out;
  std::vector<std::uint64_t> ablate_seeds = {1, 2, 3, 4, 5};
  ablate_cmd->add_option("--config", ablate_config_path, "key=value config file");
  ablate_cmd->add_option("--tasks", ablate_tasks_path, "task dataset file")->required();
  ablate_cmd->add_option("--seeds", ablate_seeds, "seed list")->delimiter(',');
  ablate_cmd->add_option("--out", ablate_out, "output directory");
  ConfigFlags ablate_flags;
  ablate_flags.attach(ablate_cmd);

  // --- verify-theory ---
  auto* theory_cmd = app.add_subcommand("verify-theory", "decomposition + gradient-quality checks");
  TheoryOptions theory_options;
  std::string theory_out, inject_fault;
  theory_cmd->add_option("--instances", theory_options.decomposition_instances,
                         "random decomposition instances");
  theory_cmd->add_option("--samples", theory_options.gaussian_samples,
                         "Monte Carlo samples per grid point");
  theory_cmd->add_option("--seed", theory_options.seed, "verification seed");
  theory_cmd->add_option("--tolerance", theory_options.defect_tolerance,
                         "identity defect tolerance");
  theory_cmd->add_option("--inject-fault", inject_fault,
                         "negative control; only 'drop-residual' is supported");
  theory_cmd->add_flag("--dump-tensors", theory_options.dump_tensors,
                       "write instance-0 gradient tensors in the checkpoint format");
  theory_cmd->add_option("--out", theory_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) {
      TrainerConfig config = train_flags.build(train_cmd, train_config_path);
      config.validate();
      auto tasks = load_tasks(train_tasks_path);
      if (train_out.empty()) train_out = default_out_dir("train", config.seed);
      auto artifacts = run_train(config, tasks, train_out);
      print_final_metrics(artifacts.result);
      std::cout << "artifacts in " << artifacts.out_dir << "\n";
      return kExitOk;
    }

    if (*eval_cmd) {
      auto tasks = load_tasks(eval_tasks_path);
      for (int k : eval_ks) {
        if (k < 1 || k > eval_n)
          throw std::invalid_argument("--ks entries must satisfy 1 <= k <= n");
      }
      if (eval_out.empty()) eval_out = default_out_dir("eval", eval_seed);
      if (eval_temperature <= 0.0)
        throw std::invalid_argument("--temperature must be > 0");
      auto artifacts = run_eval(eval_checkpoint, tasks, eval_n, eval_ks, eval_seed, eval_out,
                                eval_temperature);
      for (const auto& [k, v] : artifacts.pass_at_k) {
        std::cout << "pass@" << k << " = " << format_double(v) << "\n";
      }
      std::cout << "artifacts in " << artifacts.out_dir << "\n";
      return kExitOk;
    }

    if (*sweep_cmd) {
      TrainerConfig base = sweep_flags.build(sweep_cmd, sweep_config_path);
      base.validate();
      if (sweep_alphas.empty()) throw std::invalid_argument("--alphas must be non-empty");
      auto tasks = load_tasks(sweep_tasks_path);
      if (sweep_out.empty()) sweep_out = default_out_dir("sweep-alpha", base.seed);
      auto artifacts = run_sweep_alpha(base, tasks, sweep_alphas, sweep_seeds, sweep_out);
      std::cout << artifacts.rows.size() << " runs; table in " << artifacts.table_csv << "\n";
      return kExitOk;
    }

    if (*ablate_cmd) {
      TrainerConfig base = ablate_flags.build(ablate_cmd, ablate_config_path);
      base.validate();
      auto tasks = load_tasks(ablate_tasks_path);
      if (ablate_out.empty()) ablate_out = default_out_dir("ablate-modulation", base.seed);
      auto artifacts = run_ablate_modulation(base, tasks, ablate_seeds, ablate_out);
      std::cout << artifacts.rows.size() << " runs; table in " << artifacts.table_csv << "\n";
      return kExitOk;
    }

    if (*theory_cmd) {
      if (!inject_fault.empty()) {
        if (inject_fault != "drop-residual")
          throw std::invalid_argument("--inject-fault: unknown mode '" + inject_fault + "'");
        theory_options.inject_fault_drop_residual = true;
      }
      if (theory_out.empty()) theory_out = default_out_dir("verify-theory", theory_options.seed);
      TheoryOutcome outcome = run_verify_theory(theory_options, theory_out);
      std::cout << (outcome.ok ? "PASS" : "FAIL") << ": " << outcome.failures
                << " failed checks, max identity defect " << format_double(outcome.max_defect)
                << "\nreport: " << outcome.report_json << "\n";
      if (!outcome.failing_instance_json.empty()) {
        std::cout << "failing instance: " << outcome.failing_instance_json << "\n";
      }
      return outcome.ok ? kExitOk : kExitCheckFailure;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIoError;
  }

  return kExitUsage;
}
