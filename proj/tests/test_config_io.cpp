#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "acelab/config.hpp"
#include "acelab/io.hpp"
#include "acelab/run.hpp"

using namespace acelab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "acelab_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<TaskSpec> tiny_tasks() {
  std::vector<TaskSpec> tasks;
  for (int i = 0; i < 2; ++i) {
    TaskSpec t;
    t.modulus = 5;
    t.target = i;
    t.vocab_size = 5;
    t.length = 3;
    t.prompt_class = i;
    tasks.push_back(t);
  }
  return tasks;
}

TrainerConfig fast_config(std::uint64_t seed) {
  TrainerConfig config;
  config.steps = 10;
  config.checkpoint_every = 5;
  config.learning_rate = 0.5;
  config.eval_rollouts = 8;
  config.entropy_samples = 2;
  config.pass_ks = {1, 2, 4, 8};
  config.seed = seed;
  return config;
}

}  // namespace

TEST_CASE("key=value parsing with comments and whitespace") {
  std::istringstream in(
      "# a comment\n"
      "steps = 12\n"
      "alpha=0.5   # inline\n"
      "\n"
      "algorithm = ace_grpo\n");
  auto entries = parse_key_value_stream(in);
  CHECK(entries.at("steps") == "12");
  CHECK(entries.at("alpha") == "0.5");
  CHECK(entries.at("algorithm") == "ace_grpo");

  std::istringstream bad("steps 12\n");
  CHECK_THROWS_AS(parse_key_value_stream(bad), std::invalid_argument);
}

TEST_CASE("unknown keys and malformed values are named in the diagnostic") {
  TrainerConfig config;
  try {
    apply_config_entries(config, {{"leraning_rate", "0.1"}});
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("leraning_rate") != std::string::npos);
  }
  try {
    apply_config_entries(config, {{"steps", "ten"}});
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("steps") != std::string::npos);
  }
}

TEST_CASE("override precedence: default < file < flag, per key") {
  KeyValueMap file_entries = {{"steps", "7"}, {"alpha", "0.25"}};
  TrainerConfig config = config_from_entries(file_entries);
  CHECK(config.steps == 7);
  CHECK(config.alpha == 0.25);
  CHECK(config.group_size == TrainerConfig{}.group_size);  // untouched default

  apply_config_entries(config, {{"steps", "9"}});  // flag layer
  CHECK(config.steps == 9);
  CHECK(config.alpha == 0.25);
}

TEST_CASE("config snapshot round-trips through entries") {
  TrainerConfig config;
  config.alpha = 2.5;
  config.algorithm = Algorithm::ace_dapo;
  config.clip_high = 0.31;
  config.dynamic_sampling = false;
  config.pass_ks = {1, 4, 16};
  config.stop_token = 3;
  config.optimizer = OptimizerKind::adamw;

  auto entries = config_to_entries(config);
  TrainerConfig rebuilt = config_from_entries(entries);
  CHECK(config_to_entries(rebuilt) == entries);
  CHECK(rebuilt.alpha == config.alpha);
  CHECK(rebuilt.algorithm == config.algorithm);
  CHECK(*rebuilt.clip_high == *config.clip_high);
  CHECK(*rebuilt.dynamic_sampling == false);
  CHECK(rebuilt.pass_ks == config.pass_ks);
  CHECK(*rebuilt.stop_token == 3);

  // "auto"/"none" placeholders restore the unset optionals.
  TrainerConfig defaults = config_from_entries(config_to_entries(TrainerConfig{}));
  CHECK_FALSE(defaults.clip_high.has_value());
  CHECK_FALSE(defaults.dynamic_sampling.has_value());
  CHECK_FALSE(defaults.stop_token.has_value());
}

TEST_CASE("metrics CSV has the versioned header and NA sentinel") {
  MetricsRecord r;
  r.step = 25;
  r.mean_reward = 0.5;
  r.oef = 0.0;
  r.mean_overconfidence = std::nullopt;
  r.entropy = 1.25;
  r.kl_to_ref = 0.001;
  r.clip_fraction = 0.0;
  std::string csv = metrics_to_csv({r});
  CHECK(csv.find("# acelab-metrics-v1\n") == 0);
  CHECK(csv.find("step,mean_reward,oef,mean_overconfidence,entropy,kl,clip_fraction\n") !=
        std::string::npos);
  CHECK(csv.find("25,0.5,0,NA,1.25,0.001,0\n") != std::string::npos);

  r.mean_overconfidence = 0.75;
  csv = metrics_to_csv({r});
  CHECK(csv.find(",0.75,") != std::string::npos);
}

TEST_CASE("format_double round-trips shortest representations") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(1.0 / 3.0) == format_double(1.0 / 3.0));
  double v = 0.1 + 0.2;
  CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("fnv1a64 checksums are stable") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") != fnv1a64("b"));
}

TEST_CASE("run_train emits the documented artifacts with a complete manifest") {
  auto dir = fresh_dir("train_artifacts");
  auto artifacts = run_train(fast_config(5), tiny_tasks(), dir.string());

  CHECK(fs::exists(artifacts.metrics_csv));
  CHECK(fs::exists(artifacts.checkpoint));
  CHECK(fs::exists(artifacts.summary_json));
  CHECK(fs::exists(artifacts.manifest));

  // Manifest completeness: every file in the directory except the manifest
  // itself is listed, and the checksum matches a recomputation.
  std::string manifest = read_file(artifacts.manifest);
  std::set<std::string> listed;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string name = entry.path().filename().string();
    if (name == "manifest.json") continue;
    CHECK(manifest.find("\"" + name + "\"") != std::string::npos);
    CHECK(manifest.find(file_checksum(entry.path().string())) != std::string::npos);
    listed.insert(name);
  }
  CHECK(listed.size() == 3);
}

TEST_CASE("run_train with zero steps writes a header-only CSV and the uniform policy") {
  auto dir = fresh_dir("train_zero");
  TrainerConfig config = fast_config(1);
  config.steps = 0;
  auto artifacts = run_train(config, tiny_tasks(), dir.string());
  CHECK(read_file(artifacts.metrics_csv) == std::string(kMetricsCsvHeader));
  PolicyParams params = load_policy(artifacts.checkpoint);
  CHECK(params.logits.max_abs() == 0.0);
}

TEST_CASE("identical config and seed produce byte-identical metrics") {
  auto dir1 = fresh_dir("train_det1");
  auto dir2 = fresh_dir("train_det2");
  auto a = run_train(fast_config(77), tiny_tasks(), dir1.string());
  auto b = run_train(fast_config(77), tiny_tasks(), dir2.string());
  CHECK(read_file(a.metrics_csv) == read_file(b.metrics_csv));
  CHECK(read_file(a.summary_json) == read_file(b.summary_json));
}

TEST_CASE("ace at alpha zero and grpo write identical metrics CSVs") {
  auto dir1 = fresh_dir("train_equiv1");
  auto dir2 = fresh_dir("train_equiv2");
  TrainerConfig grpo = fast_config(13);
  grpo.algorithm = Algorithm::grpo;
  TrainerConfig ace = fast_config(13);
  ace.algorithm = Algorithm::ace_grpo;
  ace.alpha = 0.0;
  auto a = run_train(grpo, tiny_tasks(), dir1.string());
  auto b = run_train(ace, tiny_tasks(), dir2.string());
  CHECK(read_file(a.metrics_csv) == read_file(b.metrics_csv));
}

TEST_CASE("run_eval on an always-correct checkpoint reports ones, monotone in k") {
  auto dir = fresh_dir("eval_run");
  // Deterministic policy hitting target 0: path [0,0,0].
  PolicyParams params(2, 3, 5);
  for (int pc = 0; pc < 2; ++pc) {
    for (int pos = 0; pos < 3; ++pos) {
      for (int prev = 0; prev <= 5; ++prev) params.logits.at(pc, pos, prev, 0) = 1e6;
    }
  }
  auto checkpoint = (dir / "policy.bin").string();
  save_policy(params, checkpoint);

  auto tasks = tiny_tasks();  // targets 0 and 1; only the first is hit
  std::vector<TaskSpec> always = {tasks[0]};
  auto artifacts = run_eval(checkpoint, always, 8, {1, 2, 4, 8}, 3, (dir / "out").string());
  double prev = 0.0;
  for (const auto& [k, v] : artifacts.pass_at_k) {
    CHECK(v == 1.0);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK(fs::exists(artifacts.table_csv));
}

TEST_CASE("alpha sweep: zero row reproduces plain grpo, row count is alphas x seeds") {
  auto dir = fresh_dir("sweep_run");
  TrainerConfig base = fast_config(0);
  base.algorithm = Algorithm::ace_grpo;
  std::vector<double> alphas = {0.0, 1.0};
  std::vector<std::uint64_t> seeds = {4, 9};
  auto sweep = run_sweep_alpha(base, tiny_tasks(), alphas, seeds, dir.string());
  CHECK(sweep.rows.size() == alphas.size() * seeds.size());

  // Independent plain-grpo run under seed 4 must match the alpha=0 row.
  TrainerConfig grpo = base;
  grpo.algorithm = Algorithm::grpo;
  grpo.seed = 4;
  auto result = train(grpo, tiny_tasks(), make_policy_for(tiny_tasks()));
  CHECK(sweep.rows[0].alpha == 0.0);
  CHECK(sweep.rows[0].seed == 4);
  CHECK(sweep.rows[0].final_mean_reward == result.metrics.back().mean_reward);
  CHECK(fs::exists(sweep.table_csv));
  CHECK(fs::exists(sweep.summary_csv));
}

TEST_CASE("modulation ablation runs three variants per seed") {
  auto dir = fresh_dir("ablation_run");
  TrainerConfig base = fast_config(0);
  std::vector<std::uint64_t> seeds = {2, 6};
  auto ablation = run_ablate_modulation(base, tiny_tasks(), seeds, dir.string());
  REQUIRE(ablation.rows.size() == 6);
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    CHECK(ablation.rows[3 * s + 0].variant == "grpo");
    CHECK(ablation.rows[3 * s + 1].variant == "ace_softplus");
    CHECK(ablation.rows[3 * s + 2].variant == "ace_relu");
    CHECK(ablation.rows[3 * s + 0].seed == seeds[s]);
  }
  // Softplus modulation acts at c = 0 (ln 2) where relu is silent, so the
  // paired trajectories genuinely differ.
  bool differ = false;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    if (ablation.rows[3 * s + 1].final_mean_reward !=
            ablation.rows[3 * s + 2].final_mean_reward ||
        ablation.rows[3 * s + 1].final_entropy != ablation.rows[3 * s + 2].final_entropy) {
      differ = true;
    }
  }
  CHECK(differ);
}

TEST_CASE("verify-theory outcome is deterministic and complete") {
  auto dir1 = fresh_dir("theory1");
  auto dir2 = fresh_dir("theory2");
  TheoryOptions options;
  options.decomposition_instances = 10;
  options.gaussian_samples = 20000;
  auto a = run_verify_theory(options, dir1.string());
  auto b = run_verify_theory(options, dir2.string());
  CHECK(a.ok);
  CHECK(read_file(a.report_json) == read_file(b.report_json));

  options.inject_fault_drop_residual = true;
  auto faulty = run_verify_theory(options, fresh_dir("theory3").string());
  CHECK_FALSE(faulty.ok);
  CHECK(faulty.failures >= options.decomposition_instances);
  CHECK(fs::exists(faulty.failing_instance_json));
}

TEST_CASE("verify-theory can dump instance tensors in the checkpoint format") {
  auto dir = fresh_dir("theory_dump");
  TheoryOptions options;
  options.decomposition_instances = 2;
  options.gaussian_samples = 20000;
  options.dump_tensors = true;
  auto outcome = run_verify_theory(options, dir.string());
  CHECK(outcome.ok);
  for (const char* name : {"delta_grad.bin", "reg_grad.bin", "residual.bin"}) {
    REQUIRE(fs::exists(dir / name));
    PolicyParams tensor = load_policy((dir / name).string());
    CHECK(tensor.vocab_size() == 3);
    CHECK(tensor.max_len() == 2);
  }
  CHECK(read_file(outcome.report_json).find("tensor_max_norms") != std::string::npos);
}

TEST_CASE("eval temperature changes sampling but keeps the artifact schema") {
  auto dir = fresh_dir("eval_temp");
  PolicyParams params(1, 3, 5);
  Rng rng(3);
  for (double& v : params.logits.data) v = 2.0 * rng.normal();
  auto checkpoint = (dir / "policy.bin").string();
  save_policy(params, checkpoint);
  std::vector<TaskSpec> tasks = {tiny_tasks()[0]};
  auto cold = run_eval(checkpoint, tasks, 16, {1, 4}, 7, (dir / "cold").string(), 0.2);
  auto hot = run_eval(checkpoint, tasks, 16, {1, 4}, 7, (dir / "hot").string(), 5.0);
  CHECK(cold.pass_at_k.size() == 2);
  CHECK(hot.pass_at_k.size() == 2);
}
