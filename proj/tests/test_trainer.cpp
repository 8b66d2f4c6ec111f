#include <doctest.h>

#include <cmath>
#include <vector>

#include "acelab/trainer.hpp"

using namespace acelab;

namespace {

TaskSpec mod5_task(int target = 2, int length = 3, int prompt_class = 0) {
  TaskSpec t;
  t.modulus = 5;
  t.target = target;
  t.vocab_size = 5;
  t.length = length;
  t.prompt_class = prompt_class;
  return t;
}

PolicyParams random_params(int classes, int len, int vocab, std::uint64_t seed,
                           double scale = 1.0) {
  PolicyParams params(classes, len, vocab);
  Rng rng(seed);
  for (double& v : params.logits.data) v = scale * rng.normal();
  return params;
}

std::vector<TaskSpec> small_dataset() {
  return {mod5_task(0, 3, 0), mod5_task(3, 3, 1)};
}

// Loss with frozen advantages, for finite differences.
double loss_at(const RolloutGroup& group, const PolicyParams& params,
               const TrainerConfig& config) {
  return surrogate_loss(group, params, config).total;
}

}  // namespace

TEST_CASE("collect_group at the reference policy: zero confidence, scaled penalties") {
  TaskSpec task = mod5_task();
  PolicyParams params = random_params(1, 3, 5, 3);
  PolicyParams ref = snapshot(params);
  PolicyParams old = snapshot(params);
  TrainerConfig config;
  config.alpha = 1.0;
  Rng rng(11);
  auto group = collect_group(task, params, ref, old, config, rng);

  const double scale = 1.0 + std::log(2.0);  // 1 + alpha * softplus(0)
  for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
    CHECK(group.rollouts[i].confidence == 0.0);
    CHECK(group.rollouts[i].confidence_normalized == 0.0);
    if (group.rollouts[i].reward == 0.0) {
      CHECK(group.advantages.ace[i] ==
            doctest::Approx(group.advantages.grpo[i] * scale).epsilon(1e-12));
    } else {
      CHECK(group.advantages.ace[i] == group.advantages.grpo[i]);
    }
  }
  CHECK(kl_estimate(group) == 0.0);
}

TEST_CASE("collect_group populates consistent log-probs and index sets") {
  TaskSpec task = mod5_task();
  PolicyParams params = random_params(1, 3, 5, 17, 1.5);
  PolicyParams ref = random_params(1, 3, 5, 18, 1.5);
  PolicyParams old = random_params(1, 3, 5, 19, 1.5);
  TrainerConfig config;
  Rng rng(4);
  auto group = collect_group(task, params, ref, old, config, rng);

  CHECK(static_cast<int>(group.rollouts.size()) == config.group_size);
  for (const Rollout& r : group.rollouts) {
    CHECK(std::fabs(r.logp_theta - sequence_logprob(params, 0, r.tokens)) < 1e-12);
    CHECK(std::fabs(r.logp_ref - sequence_logprob(ref, 0, r.tokens)) < 1e-12);
    CHECK(std::fabs(r.logp_old - sequence_logprob(old, 0, r.tokens)) < 1e-12);
    CHECK(std::fabs(r.confidence - (r.logp_theta - r.logp_ref)) < 1e-12);
    CHECK(std::fabs(r.confidence_normalized - r.confidence / r.length) < 1e-12);
  }
  CHECK(group.positive_set.size() + group.negative_set.size() == group.rollouts.size());
  for (int i : group.positive_set) CHECK(group.rollouts[i].reward > group.stats.mean);
  for (int i : group.negative_set) CHECK(group.rollouts[i].reward <= group.stats.mean);
}

TEST_CASE("all-equal rewards give all-zero advantages") {
  TaskSpec task = mod5_task(1, 2);
  PolicyParams params(1, 2, 5);
  // Deterministic correct path [1, 0].
  for (int prev = 0; prev <= 5; ++prev) {
    params.logits.at(0, 0, prev, 1) = 1e6;
    params.logits.at(0, 1, prev, 0) = 1e6;
  }
  TrainerConfig config;
  Rng rng(5);
  auto group = collect_group(task, params, params, params, config, rng);
  for (double a : group.advantages.grpo) CHECK(a == 0.0);
  for (double a : group.advantages.ace) CHECK(a == 0.0);
}

TEST_CASE("group pass rate matches the exact rate in expectation") {
  TaskSpec task = mod5_task(4, 3);
  PolicyParams params = random_params(1, 3, 5, 23);
  double exact = exact_pass_rate(task, params);
  TrainerConfig config;
  const int groups = 3000;
  double total = 0.0;
  for (int g = 0; g < groups; ++g) {
    Rng rng(5000 + g);
    auto group = collect_group(task, params, params, params, config, rng);
    total += group.stats.pass_rate;
  }
  double mean = total / groups;
  double se = std::sqrt(exact * (1.0 - exact) / (groups * config.group_size));
  CHECK(std::fabs(mean - exact) <= 3.0 * se);
}

TEST_CASE("surrogate at the collection point is the negative mean advantage") {
  TaskSpec task = mod5_task();
  PolicyParams params = random_params(1, 3, 5, 31);
  TrainerConfig config;
  Rng rng(2);
  auto group = collect_group(task, params, params, params, config, rng);
  auto lb = surrogate_loss(group, params, config);
  for (double rho : lb.ratios) CHECK(rho > 0.0);

  double mean_adv = 0.0;
  for (double a : group.advantages.grpo) mean_adv += a;
  mean_adv /= group.advantages.grpo.size();
  CHECK(lb.surrogate == doctest::Approx(-mean_adv).epsilon(1e-12));
  for (double rho : lb.ratios) CHECK(rho == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(lb.clip_fraction == 0.0);
  CHECK(lb.total == lb.surrogate + config.kl_coeff * lb.kl_term);

  TrainerConfig no_kl = config;
  no_kl.kl_coeff = 0.0;
  auto lb0 = surrogate_loss(group, params, no_kl);
  CHECK(lb0.total == lb0.surrogate);
}

TEST_CASE("pessimistic min keeps the unclipped branch for negative advantages") {
  // Single incorrect rollout with A = -1 and a sequence-level ratio of 1.5:
  // min(1.5 * -1, 1.2 * -1) = -1.5, so the raw branch wins and nothing clips.
  RolloutGroup group;
  group.task = mod5_task(0, 1);
  Rollout r;
  r.tokens = {0};
  r.reward = 0.0;
  r.length = 1;
  r.per_token_logp_ref = {std::log(0.2)};
  r.per_token_logp_old = {std::log(0.2)};
  r.per_token_logp_theta = {std::log(0.3)};
  r.logp_old = std::log(0.2);
  group.rollouts.push_back(r);
  group.advantages.grpo = {-1.0};
  group.advantages.ace = {-1.0};

  PolicyParams params(1, 1, 5);
  // Four zero logits plus x on token 0: softmax gives 0.3 at x = ln(12/7),
  // so rho = 0.3 / 0.2 = 1.5 against the uniform old policy.
  params.logits.at(0, 0, params.bos(), 0) = std::log(12.0 / 7.0);

  TrainerConfig config;
  config.kl_coeff = 0.0;
  config.clip_low = 0.2;
  config.clip_high = 0.2;
  config.token_level_loss = false;

  auto lb = surrogate_loss(group, params, config);
  CHECK(lb.ratios.size() == 1);
  CHECK(lb.ratios[0] == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(lb.surrogate == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(lb.clip_fraction == 0.0);

  // Same ratio with a positive advantage does clip.
  group.advantages.grpo = {1.0};
  auto lb_pos = surrogate_loss(group, params, config);
  CHECK(lb_pos.surrogate == doctest::Approx(-1.2).epsilon(1e-9));
  CHECK(lb_pos.clip_fraction == 1.0);
}

TEST_CASE("clipped objective never beats the raw branch") {
  TaskSpec task = mod5_task();
  TrainerConfig config;
  config.token_level_loss = false;
  config.kl_coeff = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    PolicyParams collect_params = random_params(1, 3, 5, 100 + trial);
    PolicyParams old = random_params(1, 3, 5, 200 + trial);
    PolicyParams eval_params = random_params(1, 3, 5, 300 + trial);
    Rng rng(trial);
    auto group = collect_group(task, collect_params, collect_params, old, config, rng);
    auto lb = surrogate_loss(group, eval_params, config);
    // Reconstruct per-rollout terms: loss = -(1/G) sum min(rho A, clip A).
    for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
      double A = group.advantages.grpo[i];
      double rho = lb.ratios[i];
      double clipped = std::clamp(rho, 1.0 - config.clip_low,
                                  1.0 + config.resolved_clip_high()) *
                       A;
      CHECK(std::min(rho * A, clipped) <= rho * A + 1e-15);
    }
  }
}

TEST_CASE("kl estimator is pointwise non-negative and exact at equality") {
  TaskSpec task = mod5_task();
  PolicyParams params = random_params(1, 3, 5, 51);
  PolicyParams ref = random_params(1, 3, 5, 52);
  TrainerConfig config;
  Rng rng(9);
  auto group = collect_group(task, params, ref, params, config, rng);
  CHECK(kl_estimate(group) >= 0.0);
  for (const Rollout& r : group.rollouts) {
    for (int t = 0; t < r.length; ++t) {
      double d = r.per_token_logp_ref[t] - r.per_token_logp_theta[t];
      CHECK(std::expm1(d) - d >= 0.0);
    }
  }
}

TEST_CASE("kl estimator mean matches exact categorical KL") {
  PolicyParams params = random_params(1, 3, 4, 61, 1.2);
  PolicyParams ref = random_params(1, 3, 4, 62, 1.2);
  TaskSpec task;
  task.modulus = 4;
  task.target = 0;
  task.vocab_size = 4;
  task.length = 3;

  double exact = exact_mean_token_kl(params, ref, 0, 3);
  TrainerConfig config;
  const int groups = 4000;  // 32k sequences, ~1e5 tokens
  double total = 0.0;
  double total_sq = 0.0;
  for (int g = 0; g < groups; ++g) {
    Rng rng(900 + g);
    auto group = collect_group(task, params, ref, params, config, rng);
    double v = kl_estimate(group);
    total += v;
    total_sq += v * v;
  }
  double mean = total / groups;
  double var = total_sq / groups - mean * mean;
  double se = std::sqrt(var / groups);
  CHECK(std::fabs(mean - exact) <= 3.0 * se);
}

TEST_CASE("loss gradient matches central finite differences") {
  // Frozen advantages; ratios away from 1 via a perturbed old policy; both
  // aggregation modes; KL term active.
  TaskSpec task = mod5_task();
  for (bool token_level : {true, false}) {
    for (int trial = 0; trial < 6; ++trial) {
      PolicyParams params = random_params(1, 3, 5, 700 + trial, 0.8);
      PolicyParams ref = random_params(1, 3, 5, 800 + trial, 0.8);
      PolicyParams old = params;
      Rng jitter(70 + trial);
      for (double& v : old.logits.data) v += 0.03 * jitter.normal();

      TrainerConfig config;
      config.token_level_loss = token_level;
      config.kl_coeff = 0.05;
      Rng rng(10 + trial);
      auto group = collect_group(task, params, ref, old, config, rng);

      auto grad = loss_gradient(group, params, config);
      double max_rel = 0.0;
      const double h = 1e-5;
      for (std::size_t i = 0; i < grad.data.size(); ++i) {
        PolicyParams lo = params, hi = params;
        lo.logits.data[i] -= h;
        hi.logits.data[i] += h;
        double fd = (loss_at(group, hi, config) - loss_at(group, lo, config)) / (2 * h);
        double denom = std::max(1.0, std::fabs(grad.data[i]));
        max_rel = std::max(max_rel, std::fabs(fd - grad.data[i]) / denom);
      }
      CHECK(max_rel <= 1e-5);
    }
  }
}

TEST_CASE("apply_gradient identities") {
  PolicyParams params = random_params(1, 2, 3, 5);
  PolicyParams before = params;
  GradTensor zero(1, 2, 3);
  apply_gradient(params, zero, 0.5);
  CHECK(params.logits.data == before.logits.data);

  GradTensor grad(1, 2, 3);
  grad.data[0] = 1.0;
  apply_gradient(params, grad, 0.0);
  CHECK(params.logits.data == before.logits.data);

  GradTensor wrong(1, 2, 4);
  CHECK_THROWS_AS(apply_gradient(params, wrong, 0.1), std::invalid_argument);
}

TEST_CASE("one gradient step decreases the loss") {
  TaskSpec task = mod5_task();
  PolicyParams params = random_params(1, 3, 5, 81);
  TrainerConfig config;
  Rng rng(6);
  auto group = collect_group(task, params, params, params, config, rng);
  double before = loss_at(group, params, config);
  auto grad = loss_gradient(group, params, config);
  apply_gradient(params, grad, 1e-3);
  CHECK(loss_at(group, params, config) < before);
}

TEST_CASE("dynamic sampling filter removes degenerate groups") {
  TaskSpec task = mod5_task();
  auto make_group = [&](std::vector<double> rewards) {
    RolloutGroup g;
    g.task = task;
    for (double r : rewards) {
      Rollout roll;
      roll.reward = r;
      g.rollouts.push_back(roll);
    }
    return g;
  };
  std::vector<RolloutGroup> groups;
  groups.push_back(make_group({1, 1, 1, 1}));
  groups.push_back(make_group({0, 1, 0, 0}));
  groups.push_back(make_group({0, 0, 0, 0}));
  auto kept = dynamic_sampling_filter(std::move(groups));
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].rollouts[1].reward == 1.0);
}

TEST_CASE("training skips steps when every group is degenerate") {
  TaskSpec task = mod5_task(1, 2);
  TrainerConfig config;
  config.steps = 3;
  config.checkpoint_every = 1;
  config.dynamic_sampling = true;
  config.seed = 3;
  // Deterministic correct policy: every group is all-correct.
  PolicyParams params(1, 2, 5);
  for (int prev = 0; prev <= 5; ++prev) {
    params.logits.at(0, 0, prev, 1) = 1e6;
    params.logits.at(0, 1, prev, 0) = 1e6;
  }
  PolicyParams before = params;
  auto result = train(config, {task}, std::move(params));
  CHECK(result.skipped_steps == 3);
  CHECK(result.params.logits.data == before.logits.data);
}

TEST_CASE("steps = 0 returns the policy unchanged with no metrics") {
  TrainerConfig config;
  config.steps = 0;
  PolicyParams params = random_params(2, 3, 5, 5);
  PolicyParams before = params;
  auto result = train(config, small_dataset(), std::move(params));
  CHECK(result.metrics.empty());
  CHECK(result.params.logits.data == before.logits.data);
}

TEST_CASE("ace with alpha = 0 reproduces grpo exactly") {
  auto tasks = small_dataset();
  TrainerConfig grpo_config;
  grpo_config.steps = 40;
  grpo_config.checkpoint_every = 10;
  grpo_config.learning_rate = 0.5;
  grpo_config.seed = 12;
  grpo_config.algorithm = Algorithm::grpo;

  TrainerConfig ace_config = grpo_config;
  ace_config.algorithm = Algorithm::ace_grpo;
  ace_config.alpha = 0.0;

  auto a = train(grpo_config, tasks, make_policy_for(tasks));
  auto b = train(ace_config, tasks, make_policy_for(tasks));
  CHECK(a.params.logits.data == b.params.logits.data);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].mean_reward == b.metrics[i].mean_reward);
    CHECK(a.metrics[i].entropy == b.metrics[i].entropy);
    CHECK(a.metrics[i].oef == b.metrics[i].oef);
  }
}

TEST_CASE("ace-off equivalence holds per group for losses and gradients") {
  TaskSpec task = mod5_task();
  PolicyParams params = random_params(1, 3, 5, 90);
  PolicyParams ref = random_params(1, 3, 5, 91);
  TrainerConfig grpo_config;
  grpo_config.algorithm = Algorithm::grpo;
  TrainerConfig ace_config = grpo_config;
  ace_config.algorithm = Algorithm::ace_grpo;
  ace_config.alpha = 0.0;

  Rng rng1(77), rng2(77);
  auto g1 = collect_group(task, params, ref, params, grpo_config, rng1);
  auto g2 = collect_group(task, params, ref, params, ace_config, rng2);
  CHECK(surrogate_loss(g1, params, grpo_config).total ==
        surrogate_loss(g2, params, ace_config).total);
  CHECK(loss_gradient(g1, params, grpo_config).data ==
        loss_gradient(g2, params, ace_config).data);
}

TEST_CASE("training is bit-deterministic under a fixed seed") {
  auto tasks = small_dataset();
  TrainerConfig config;
  config.steps = 25;
  config.checkpoint_every = 5;
  config.learning_rate = 0.5;
  config.seed = 99;
  config.algorithm = Algorithm::ace_grpo;

  auto a = train(config, tasks, make_policy_for(tasks));
  auto b = train(config, tasks, make_policy_for(tasks));
  CHECK(a.params.logits.data == b.params.logits.data);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].mean_reward == b.metrics[i].mean_reward);
    CHECK(a.metrics[i].kl_to_ref == b.metrics[i].kl_to_ref);
    CHECK(a.metrics[i].entropy == b.metrics[i].entropy);
    CHECK(a.metrics[i].distinct_correct == b.metrics[i].distinct_correct);
  }
}

TEST_CASE("checkpoint cadence includes the final step") {
  auto tasks = small_dataset();
  TrainerConfig config;
  config.steps = 7;
  config.checkpoint_every = 3;
  config.seed = 1;
  auto result = train(config, tasks, make_policy_for(tasks));
  REQUIRE(result.metrics.size() == 3);
  CHECK(result.metrics[0].step == 3);
  CHECK(result.metrics[1].step == 6);
  CHECK(result.metrics[2].step == 7);
}

TEST_CASE("dapo mode resolves clip-higher and its component flags") {
  TrainerConfig config;
  config.algorithm = Algorithm::dapo;
  CHECK(config.resolved_clip_high() == doctest::Approx(0.28));
  CHECK(config.resolved_dynamic_sampling());
  CHECK(config.resolved_token_level_loss());

  TrainerConfig grpo;
  CHECK(grpo.resolved_clip_high() == doctest::Approx(grpo.clip_low));
  CHECK_FALSE(grpo.resolved_dynamic_sampling());

  config.clip_high = 0.1;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}

TEST_CASE("adamw optimizer trains deterministically") {
  auto tasks = small_dataset();
  TrainerConfig config;
  config.steps = 15;
  config.checkpoint_every = 5;
  config.optimizer = OptimizerKind::adamw;
  config.learning_rate = 0.01;
  config.adamw_weight_decay = 0.0;
  config.seed = 21;
  auto a = train(config, tasks, make_policy_for(tasks));
  auto b = train(config, tasks, make_policy_for(tasks));
  CHECK(a.params.logits.data == b.params.logits.data);
  CHECK(a.params.finite());
}

TEST_CASE("pretrain phase produces a nonuniform reference with zero start KL") {
  auto tasks = small_dataset();
  TrainerConfig config;
  config.steps = 1;
  config.checkpoint_every = 1;
  config.pretrain_steps = 50;
  config.pretrain_scale = 2.0;
  config.pretrain_learning_rate = 1.0;
  config.seed = 31;
  auto result = train(config, tasks, make_policy_for(tasks));
  // The pretrained policy is visibly nonuniform.
  CHECK(result.metrics.front().entropy < std::log(5.0) - 0.05);
}

TEST_CASE("variable-length mode marks short rollouts incorrect") {
  TaskSpec task = mod5_task(0, 3);
  PolicyParams params(1, 3, 5);
  // Always emit token 4 at position 0; with stop_token = 4 every rollout has
  // length 1 != 3.
  for (int prev = 0; prev <= 5; ++prev) params.logits.at(0, 0, prev, 4) = 1e6;
  TrainerConfig config;
  config.stop_token = 4;
  Rng rng(2);
  auto group = collect_group(task, params, params, params, config, rng);
  for (const Rollout& r : group.rollouts) {
    CHECK(r.length == 1);
    CHECK(r.reward == 0.0);
  }
}

TEST_CASE("config validation rejects out-of-range fields") {
  TrainerConfig config;
  config.group_size = 1;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = TrainerConfig{};
  config.alpha = -0.5;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = TrainerConfig{};
  config.learning_rate = 0.0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = TrainerConfig{};
  config.clip_low = 0.0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = TrainerConfig{};
  config.pass_ks = {};
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = TrainerConfig{};
  config.adamw_beta1 = 1.0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}
