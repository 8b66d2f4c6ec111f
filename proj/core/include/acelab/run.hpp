// Experiment runners: seeded training/eval campaigns, alpha sweeps, the
// modulation ablation, and the theory verification bundle. Each runner
// writes its artifacts plus a manifest listing every emitted file with a
// checksum. The CLI subcommands are thin wrappers over these.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acelab/config.hpp"
#include "acelab/env.hpp"
#include "acelab/theory.hpp"
#include "acelab/trainer.hpp"

namespace acelab {

struct TrainRunArtifacts {
  TrainResult result;
  std::string out_dir;
  std::string metrics_csv;   // metrics.csv
  std::string checkpoint;    // policy_final.bin
  std::string summary_json;  // summary.json
  std::string manifest;      // manifest.json
};

/// Trains from a uniform-initialized policy (plus the configured pretrain
/// phase) and writes metrics.csv, policy_final.bin, summary.json and
/// manifest.json under out_dir.
TrainRunArtifacts run_train(const TrainerConfig& config, const std::vector<TaskSpec>& tasks,
                            const std::string& out_dir);

struct EvalRunArtifacts {
  std::map<int, double> pass_at_k;
  std::string out_dir;
  std::string table_csv;  // passk.csv
  std::string manifest;
};

EvalRunArtifacts run_eval(const std::string& checkpoint_path,
                          const std::vector<TaskSpec>& tasks, int n,
                          const std::vector<int>& ks, std::uint64_t seed,
                          const std::string& out_dir, double temperature = 1.0);

struct SweepRow {
  double alpha = 0.0;
  std::uint64_t seed = 0;
  double pass1 = 0.0;
  double pass_kmax = 0.0;
  double final_mean_reward = 0.0;
  long long distinct_correct = 0;
};

struct SweepRunArtifacts {
  std::vector<SweepRow> rows;
  std::string out_dir;
  std::string table_csv;    // sweep.csv
  std::string summary_csv;  // sweep_summary.csv
  std::string manifest;
};

/// One training + evaluation per (alpha, seed) with everything else shared.
SweepRunArtifacts run_sweep_alpha(const TrainerConfig& base,
                                  const std::vector<TaskSpec>& tasks,
                                  const std::vector<double>& alphas,
                                  const std::vector<std::uint64_t>& seeds,
                                  const std::string& out_dir);

struct AblationRow {
  std::string variant;  // grpo | ace_softplus | ace_relu
  std::uint64_t seed = 0;
  std::map<int, double> pass_at_k;
  double final_mean_reward = 0.0;
  double final_entropy = 0.0;
  long long distinct_correct = 0;
};

struct AblationRunArtifacts {
  std::vector<AblationRow> rows;
  std::string out_dir;
  std::string table_csv;  // ablation.csv
  std::string manifest;
};

/// Paired runs (baseline, softplus, relu) under shared seeds.
AblationRunArtifacts run_ablate_modulation(const TrainerConfig& base,
                                           const std::vector<TaskSpec>& tasks,
                                           const std::vector<std::uint64_t>& seeds,
                                           const std::string& out_dir);

struct TheoryOptions {
  int decomposition_instances = 100;
  std::uint64_t seed = 2;
  long long gaussian_samples = 1'000'000;
  double defect_tolerance = 1e-8;
  double quality_alpha = 0.05;
  std::vector<double> second_moment_alphas = {0.1, 1.0};
  int score_dim = 8;
  bool inject_fault_drop_residual = false;  // negative control
  bool dump_tensors = false;  // write instance-0 gradient tensors as .bin files
};

struct TheoryOutcome {
  bool ok = false;
  int failures = 0;
  double max_defect = 0.0;
  std::string out_dir;
  std::string report_json;            // theory_report.json
  std::string failing_instance_json;  // empty unless something failed
  std::string manifest;
};

/// Decomposition identity over seeded random tabular instances plus the
/// Gaussian-model grid (3-sigma moment checks and both verdict families).
/// Report bytes depend only on the options, never on wall-clock time.
TheoryOutcome run_verify_theory(const TheoryOptions& options, const std::string& out_dir);

/// Output root fallback: $ACELAB_OUT_ROOT, else "runs".
std::string default_output_root();

}  // namespace acelab
