#include "acelab/run.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "acelab/io.hpp"

namespace acelab {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

ordered_json record_to_json(const MetricsRecord& r) {
  ordered_json j;
  j["step"] = r.step;
  ordered_json passk = ordered_json::object();
  for (const auto& [k, v] : r.pass_at_k) passk[std::to_string(k)] = v;
  j["pass_at_k"] = passk;
  j["oef"] = r.oef;
  if (r.mean_overconfidence) {
    j["mean_overconfidence"] = *r.mean_overconfidence;
  } else {
    j["mean_overconfidence"] = nullptr;
  }
  j["entropy"] = r.entropy;
  j["distinct_correct"] = r.distinct_correct;
  j["kl_to_ref"] = r.kl_to_ref;
  j["mean_reward"] = r.mean_reward;
  j["clip_fraction"] = r.clip_fraction;
  return j;
}

std::map<int, double> eval_final_passk(const PolicyParams& params,
                                       const std::vector<TaskSpec>& tasks,
                                       const TrainerConfig& config) {
  std::vector<int> ks;
  for (int k : config.pass_ks) {
    if (k <= config.eval_rollouts) ks.push_back(k);
  }
  Rng rng = Rng::stream(config.seed, {rng_purpose::kEval, 0xf17a1ULL});
  return pass_at_k_eval(tasks, params, config.eval_rollouts, ks, rng);
}

}  // namespace

std::string default_output_root() {
  if (const char* root = std::getenv("ACELAB_OUT_ROOT")) {
    if (*root) return root;
  }
  return "runs";
}

TrainRunArtifacts run_train(const TrainerConfig& config, const std::vector<TaskSpec>& tasks,
                            const std::string& out_dir) {
  config.validate();
  ensure_dir(out_dir);
  RunManifest manifest;
  manifest.command = "train";
  manifest.out_dir = out_dir;
  manifest.seeds = {config.seed};
  manifest.config_snapshot = config_to_entries(config);
  manifest.started_at = current_timestamp_utc();

  TrainRunArtifacts artifacts;
  artifacts.out_dir = out_dir;
  artifacts.result = train(config, tasks, make_policy_for(tasks));

  artifacts.metrics_csv = (fs::path(out_dir) / "metrics.csv").string();
  write_file(artifacts.metrics_csv, metrics_to_csv(artifacts.result.metrics));
  add_artifact(manifest, "metrics.csv");

  artifacts.checkpoint = (fs::path(out_dir) / "policy_final.bin").string();
  save_policy(artifacts.result.params, artifacts.checkpoint);
  add_artifact(manifest, "policy_final.bin");

  ordered_json summary;
  summary["command"] = "train";
  summary["config"] = manifest.config_snapshot;
  summary["num_tasks"] = tasks.size();
  summary["skipped_steps"] = artifacts.result.skipped_steps;
  ordered_json records = ordered_json::array();
  for (const auto& r : artifacts.result.metrics) records.push_back(record_to_json(r));
  summary["checkpoints"] = records;
  if (!artifacts.result.metrics.empty()) {
    summary["final"] = record_to_json(artifacts.result.metrics.back());
  }
  artifacts.summary_json = (fs::path(out_dir) / "summary.json").string();
  write_file(artifacts.summary_json, summary.dump(2) + "\n");
  add_artifact(manifest, "summary.json");

  write_manifest(manifest);
  artifacts.manifest = (fs::path(out_dir) / "manifest.json").string();
  return artifacts;
}

EvalRunArtifacts run_eval(const std::string& checkpoint_path,
                          const std::vector<TaskSpec>& tasks, int n,
                          const std::vector<int>& ks, std::uint64_t seed,
                          const std::string& out_dir, double temperature) {
  PolicyParams params = load_policy(checkpoint_path);
  ensure_dir(out_dir);
  RunManifest manifest;
  manifest.command = "eval";
  manifest.out_dir = out_dir;
  manifest.seeds = {seed};
  manifest.config_snapshot = {{"checkpoint", checkpoint_path},
                              {"n", std::to_string(n)},
                              {"temperature", format_double(temperature)}};
  manifest.started_at = current_timestamp_utc();

  Rng rng = Rng::stream(seed, {rng_purpose::kEval, 0});
  EvalRunArtifacts artifacts;
  artifacts.out_dir = out_dir;
  artifacts.pass_at_k = pass_at_k_eval(tasks, params, n, ks, rng, temperature);

  std::string csv = "# acelab-passk-v1\nk,pass_at_k\n";
  for (const auto& [k, v] : artifacts.pass_at_k) {
    csv += std::to_string(k) + "," + format_double(v) + "\n";
  }
  artifacts.table_csv = (fs::path(out_dir) / "passk.csv").string();
  write_file(artifacts.table_csv, csv);
  add_artifact(manifest, "passk.csv");

  write_manifest(manifest);
  artifacts.manifest = (fs::path(out_dir) / "manifest.json").string();
  return artifacts;
}

SweepRunArtifacts run_sweep_alpha(const TrainerConfig& base,
                                  const std::vector<TaskSpec>& tasks,
                                  const std::vector<double>& alphas,
                                  const std::vector<std::uint64_t>& seeds,
                                  const std::string& out_dir) {
  if (alphas.empty()) throw std::invalid_argument("sweep: empty alpha list");
  if (seeds.empty()) throw std::invalid_argument("sweep: empty seed list");
  ensure_dir(out_dir);
  RunManifest manifest;
  manifest.command = "sweep-alpha";
  manifest.out_dir = out_dir;
  manifest.seeds = seeds;
  manifest.config_snapshot = config_to_entries(base);
  manifest.started_at = current_timestamp_utc();

  SweepRunArtifacts artifacts;
  artifacts.out_dir = out_dir;
  int kmax = *std::max_element(base.pass_ks.begin(), base.pass_ks.end());
  kmax = std::min(kmax, base.eval_rollouts);

  for (double alpha : alphas) {
    for (std::uint64_t seed : seeds) {
      TrainerConfig config = base;
      config.alpha = alpha;
      config.seed = seed;
      TrainResult result = train(config, tasks, make_policy_for(tasks));
      auto passk = eval_final_passk(result.params, tasks, config);
      SweepRow row;
      row.alpha = alpha;
      row.seed = seed;
      row.pass1 = passk.count(1) ? passk.at(1) : 0.0;
      row.pass_kmax = passk.count(kmax) ? passk.at(kmax) : 0.0;
      if (!result.metrics.empty()) {
        row.final_mean_reward = result.metrics.back().mean_reward;
        row.distinct_correct = result.metrics.back().distinct_correct;
      }
      artifacts.rows.push_back(row);
    }
  }

  std::string csv = "# acelab-sweep-v1\nalpha,seed,pass1,pass" + std::to_string(kmax) +
                    ",final_mean_reward,distinct_correct\n";
  for (const auto& row : artifacts.rows) {
    csv += format_double(row.alpha) + "," + std::to_string(row.seed) + "," +
           format_double(row.pass1) + "," + format_double(row.pass_kmax) + "," +
           format_double(row.final_mean_reward) + "," +
           std::to_string(row.distinct_correct) + "\n";
  }
  artifacts.table_csv = (fs::path(out_dir) / "sweep.csv").string();
  write_file(artifacts.table_csv, csv);
  add_artifact(manifest, "sweep.csv");

  // Per-alpha mean and spread across seeds.
  std::string summary = "# acelab-sweep-summary-v1\nalpha,mean_pass1,sd_pass1,mean_pass" +
                        std::to_string(kmax) + ",sd_pass" + std::to_string(kmax) + "\n";
  for (double alpha : alphas) {
    std::vector<double> p1, pk;
    for (const auto& row : artifacts.rows) {
      if (row.alpha == alpha) {
        p1.push_back(row.pass1);
        pk.push_back(row.pass_kmax);
      }
    }
    auto mean_sd = [](const std::vector<double>& xs) {
      double mean = 0.0;
      for (double x : xs) mean += x;
      mean /= xs.size();
      double ss = 0.0;
      for (double x : xs) ss += (x - mean) * (x - mean);
      return std::pair<double, double>(mean, std::sqrt(ss / xs.size()));
    };
    auto [m1, s1] = mean_sd(p1);
    auto [mk, sk] = mean_sd(pk);
    summary += format_double(alpha) + "," + format_double(m1) + "," + format_double(s1) +
               "," + format_double(mk) + "," + format_double(sk) + "\n";
  }
  artifacts.summary_csv = (fs::path(out_dir) / "sweep_summary.csv").string();
  write_file(artifacts.summary_csv, summary);
  add_artifact(manifest, "sweep_summary.csv");

  write_manifest(manifest);
  artifacts.manifest = (fs::path(out_dir) / "manifest.json").string();
  return artifacts;
}

AblationRunArtifacts run_ablate_modulation(const TrainerConfig& base,
                                           const std::vector<TaskSpec>& tasks,
                                           const std::vector<std::uint64_t>& seeds,
                                           const std::string& out_dir) {
  if (seeds.empty()) throw std::invalid_argument("ablation: empty seed list");
  ensure_dir(out_dir);
  RunManifest manifest;
  manifest.command = "ablate-modulation";
  manifest.out_dir = out_dir;
  manifest.seeds = seeds;
  manifest.config_snapshot = config_to_entries(base);
  manifest.started_at = current_timestamp_utc();

  AblationRunArtifacts artifacts;
  artifacts.out_dir = out_dir;

  struct Variant {
    const char* name;
    Algorithm algorithm;
    Modulation modulation;
  };
  const Variant variants[] = {
      {"grpo", Algorithm::grpo, Modulation::softplus},
      {"ace_softplus", Algorithm::ace_grpo, Modulation::softplus},
      {"ace_relu", Algorithm::ace_grpo, Modulation::relu},
  };

  for (std::uint64_t seed : seeds) {
    for (const Variant& variant : variants) {
      TrainerConfig config = base;
      config.seed = seed;
      config.algorithm = variant.algorithm;
      config.modulation = variant.modulation;
      TrainResult result = train(config, tasks, make_policy_for(tasks));
      AblationRow row;
      row.variant = variant.name;
      row.seed = seed;
      row.pass_at_k = eval_final_passk(result.params, tasks, config);
      if (!result.metrics.empty()) {
        row.final_mean_reward = result.metrics.back().mean_reward;
        row.final_entropy = result.metrics.back().entropy;
        row.distinct_correct = result.metrics.back().distinct_correct;
      }
      artifacts.rows.push_back(std::move(row));
    }
  }

  std::string csv = "# acelab-ablation-v1\nvariant,seed";
  std::vector<int> ks;
  if (!artifacts.rows.empty()) {
    for (const auto& [k, v] : artifacts.rows.front().pass_at_k) ks.push_back(k);
  }
  for (int k : ks) csv += ",pass" + std::to_string(k);
  csv += ",final_mean_reward,final_entropy,distinct_correct\n";
  for (const auto& row : artifacts.rows) {
    csv += row.variant + "," + std::to_string(row.seed);
    for (int k : ks) csv += "," + format_double(row.pass_at_k.at(k));
    csv += "," + format_double(row.final_mean_reward) + "," +
           format_double(row.final_entropy) + "," + std::to_string(row.distinct_correct) +
           "\n";
  }
  artifacts.table_csv = (fs::path(out_dir) / "ablation.csv").string();
  write_file(artifacts.table_csv, csv);
  add_artifact(manifest, "ablation.csv");

  write_manifest(manifest);
  artifacts.manifest = (fs::path(out_dir) / "manifest.json").string();
  return artifacts;
}

TheoryOutcome run_verify_theory(const TheoryOptions& options, const std::string& out_dir) {
  ensure_dir(out_dir);
  RunManifest manifest;
  manifest.command = "verify-theory";
  manifest.out_dir = out_dir;
  manifest.seeds = {options.seed};
  manifest.config_snapshot = {
      {"decomposition_instances", std::to_string(options.decomposition_instances)},
      {"gaussian_samples", std::to_string(options.gaussian_samples)},
      {"defect_tolerance", format_double(options.defect_tolerance)},
      {"quality_alpha", format_double(options.quality_alpha)},
      {"score_dim", std::to_string(options.score_dim)},
      {"inject_fault_drop_residual",
       options.inject_fault_drop_residual ? "true" : "false"},
  };
  manifest.started_at = current_timestamp_utc();

  TheoryOutcome outcome;
  outcome.out_dir = out_dir;
  ordered_json report;
  report["seed"] = options.seed;
  report["defect_tolerance"] = options.defect_tolerance;
  report["fault_injection"] = options.inject_fault_drop_residual;

  // Decomposition identity over random tabular instances (V=3, L=2).
  ordered_json decomposition;
  ordered_json defects = ordered_json::array();
  ordered_json tensor_norms = ordered_json::array();
  int decomposition_failures = 0;
  ordered_json failing = nullptr;
  std::vector<std::string> tensor_files;
  for (int i = 0; i < options.decomposition_instances; ++i) {
    TaskSpec task;
    task.kind = TaskKind::mod_sum;
    task.vocab_size = 3;
    task.length = 2;
    task.modulus = 3;
    task.target = i % 3;
    task.prompt_class = 0;
    double alpha = (i % 2 == 0) ? 0.5 : 1.0;

    PolicyParams params(1, task.length, task.vocab_size);
    PolicyParams ref(1, task.length, task.vocab_size);
    Rng rng = Rng::stream(options.seed, {0xdecafULL, static_cast<std::uint64_t>(i)});
    for (double& v : params.logits.data) v = rng.normal();
    for (double& v : ref.logits.data) v = rng.normal();

    DecompositionReport rep = verify_decomposition(params, ref, task, alpha);
    double defect = decomposition_defect(rep, options.inject_fault_drop_residual);
    defects.push_back(defect);
    tensor_norms.push_back({{"delta_grad", rep.delta_grad.max_abs()},
                            {"reg_grad", rep.reg_grad.max_abs()},
                            {"residual", rep.residual.max_abs()},
                            {"r_sel_value", rep.r_sel_value}});
    if (options.dump_tensors && i == 0) {
      auto dump = [&](const GradTensor& tensor, const char* name) {
        PolicyParams wrapper;
        wrapper.logits = tensor;
        std::string file = std::string(name) + ".bin";
        save_policy(wrapper, (fs::path(out_dir) / file).string());
        tensor_files.push_back(file);
      };
      dump(rep.delta_grad, "delta_grad");
      dump(rep.reg_grad, "reg_grad");
      dump(rep.residual, "residual");
    }
    outcome.max_defect = std::max(outcome.max_defect, defect);
    if (defect > options.defect_tolerance) {
      ++decomposition_failures;
      if (failing.is_null()) {
        failing = ordered_json{{"instance", i},
                               {"alpha", alpha},
                               {"defect", defect},
                               {"task",
                                {{"kind", "mod_sum"},
                                 {"modulus", task.modulus},
                                 {"target", task.target},
                                 {"vocab_size", task.vocab_size},
                                 {"length", task.length}}},
                               {"policy_logits", params.logits.data},
                               {"reference_logits", ref.logits.data}};
      }
    }
  }
  decomposition["instances"] = options.decomposition_instances;
  decomposition["failures"] = decomposition_failures;
  decomposition["max_defect"] = outcome.max_defect;
  decomposition["defects"] = defects;
  decomposition["tensor_max_norms"] = tensor_norms;
  report["decomposition"] = decomposition;
  outcome.failures += decomposition_failures;

  // Gaussian-model grid: moment closed forms at 3 sigma, quality verdicts
  // where the hypothesis holds, second-moment verdicts everywhere.
  const double grid_mu[] = {0.25, 0.5, 1.0};
  const double grid_sigma[] = {0.5, 1.0, 2.0};
  const double grid_b[] = {0.5, 1.0, 2.0};
  ordered_json grid = ordered_json::array();
  int grid_failures = 0;
  std::uint64_t point = 0;
  for (double mu : grid_mu) {
    for (double sigma : grid_sigma) {
      for (double b : grid_b) {
        GaussianModelConfig gc;
        gc.mu = mu;
        gc.sigma = sigma;
        gc.phi_intercept = 0.5;
        gc.phi_slope = b;
        gc.alpha = options.quality_alpha;
        gc.n_samples = options.gaussian_samples;
        gc.seed = mix_seed(options.seed, 0x6a0551ULL + point);
        ++point;

        QualityReport qr = gaussian_quality_report(gc);
        bool delta1_ok = std::fabs(qr.delta1_mc - qr.delta1_analytic) <= 3.0 * qr.delta1_se;
        bool cov_ok =
            std::fabs(qr.cov_phi_u_mc - qr.cov_phi_u_analytic) <= 3.0 * qr.cov_phi_u_se;
        bool cov2_ok =
            std::fabs(qr.cov_phi_u2_mc - qr.cov_phi_u2_analytic) <= 3.0 * qr.cov_phi_u2_se;

        QualityVerdict qv = quality_improvement_check(gc);
        bool quality_ok = !qv.hypothesis_held || qv.improved;

        ordered_json second = ordered_json::array();
        bool second_ok = true;
        for (double al : options.second_moment_alphas) {
          GaussianModelConfig sc = gc;
          sc.alpha = al;
          SecondMomentVerdict sv = second_moment_check(sc, options.score_dim);
          bool within =
              std::fabs(sv.increase_mc - sv.increase_analytic) <= 3.0 * sv.increase_se;
          second_ok = second_ok && sv.increased && within;
          second.push_back({{"alpha", al},
                            {"increased", sv.increased},
                            {"increase_mc", sv.increase_mc},
                            {"increase_analytic", sv.increase_analytic},
                            {"increase_se", sv.increase_se},
                            {"within_3se", within}});
        }

        bool ok = delta1_ok && cov_ok && cov2_ok && quality_ok && second_ok;
        if (!ok) ++grid_failures;
        grid.push_back({{"mu", mu},
                        {"sigma", sigma},
                        {"b", b},
                        {"a", gc.phi_intercept},
                        {"n_samples", gc.n_samples},
                        {"delta1_mc", qr.delta1_mc},
                        {"delta1_analytic", qr.delta1_analytic},
                        {"delta1_se", qr.delta1_se},
                        {"delta1_ok", delta1_ok},
                        {"cov_phi_u_mc", qr.cov_phi_u_mc},
                        {"cov_phi_u_analytic", qr.cov_phi_u_analytic},
                        {"cov_phi_u_se", qr.cov_phi_u_se},
                        {"cov_phi_u_ok", cov_ok},
                        {"cov_phi_u2_mc", qr.cov_phi_u2_mc},
                        {"cov_phi_u2_analytic", qr.cov_phi_u2_analytic},
                        {"cov_phi_u2_se", qr.cov_phi_u2_se},
                        {"cov_phi_u2_ok", cov2_ok},
                        {"c_mu_over_cov_ratio", qr.c_mu_over_cov_ratio},
                        {"q_std_analytic", qr.q_std_analytic},
                        {"q_std_mc", qr.q_std_mc},
                        {"q_ace_mc", qr.q_ace_mc},
                        {"hypothesis_held", qv.hypothesis_held},
                        {"quality_improved", qv.improved},
                        {"quality_ok", quality_ok},
                        {"negative_phi_fraction", qr.negative_phi_fraction},
                        {"second_moment", second},
                        {"ok", ok}});
      }
    }
  }
  report["gaussian_grid"] = grid;
  report["gaussian_failures"] = grid_failures;
  outcome.failures += grid_failures;

  outcome.ok = outcome.failures == 0;
  report["failures"] = outcome.failures;
  report["pass"] = outcome.ok;

  outcome.report_json = (fs::path(out_dir) / "theory_report.json").string();
  write_file(outcome.report_json, report.dump(2) + "\n");
  add_artifact(manifest, "theory_report.json");
  for (const std::string& file : tensor_files) add_artifact(manifest, file);

  if (!failing.is_null()) {
    outcome.failing_instance_json = (fs::path(out_dir) / "failing_instance.json").string();
    write_file(outcome.failing_instance_json, failing.dump(2) + "\n");
    add_artifact(manifest, "failing_instance.json");
  }

  write_manifest(manifest);
  outcome.manifest = (fs::path(out_dir) / "manifest.json").string();
  return outcome;
}

}  // namespace acelab
