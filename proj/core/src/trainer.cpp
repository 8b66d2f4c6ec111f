#include "acelab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace acelab {

namespace {

// k3 estimator term for one token: exp(d) - 1 - d, d = logp_ref - logp_theta.
// Pointwise non-negative (e^x >= 1 + x).
double k3_term(double logp_ref_token, double logp_theta_token) {
  double d = logp_ref_token - logp_theta_token;
  return std::expm1(d) - d;
}

double clip(double rho, double lo, double hi) { return std::clamp(rho, lo, hi); }

const std::vector<double>& selected_advantages(const RolloutGroup& group,
                                               const TrainerConfig& config) {
  return uses_ace(config.algorithm) ? group.advantages.ace : group.advantages.grpo;
}

}  // namespace

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "grpo") return Algorithm::grpo;
  if (name == "ace_grpo") return Algorithm::ace_grpo;
  if (name == "dapo") return Algorithm::dapo;
  if (name == "ace_dapo") return Algorithm::ace_dapo;
  throw std::invalid_argument("unknown algorithm '" + name + "'");
}

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::grpo: return "grpo";
    case Algorithm::ace_grpo: return "ace_grpo";
    case Algorithm::dapo: return "dapo";
    case Algorithm::ace_dapo: return "ace_dapo";
  }
  return "grpo";
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adamw") return OptimizerKind::adamw;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::sgd ? "sgd" : "adamw";
}

void TrainerConfig::validate() const {
  if (group_size < 2) throw std::invalid_argument("config: group_size must be >= 2");
  if (alpha < 0.0) throw std::invalid_argument("config: alpha must be >= 0");
  if (kl_coeff < 0.0) throw std::invalid_argument("config: kl_coeff must be >= 0");
  if (clip_low <= 0.0) throw std::invalid_argument("config: clip_low must be > 0");
  if (resolved_clip_high() < clip_low)
    throw std::invalid_argument("config: clip_high must be >= clip_low");
  if (learning_rate <= 0.0) throw std::invalid_argument("config: learning_rate must be > 0");
  if (steps < 0) throw std::invalid_argument("config: steps must be >= 0");
  if (checkpoint_every < 1) throw std::invalid_argument("config: checkpoint_every must be >= 1");
  if (inner_epochs < 1) throw std::invalid_argument("config: inner_epochs must be >= 1");
  if (advantage_epsilon <= 0.0)
    throw std::invalid_argument("config: advantage_epsilon must be > 0");
  if (eval_rollouts < 1) throw std::invalid_argument("config: eval_rollouts must be >= 1");
  if (entropy_samples < 1) throw std::invalid_argument("config: entropy_samples must be >= 1");
  if (pretrain_steps < 0) throw std::invalid_argument("config: pretrain_steps must be >= 0");
  if (pretrain_scale < 0.0) throw std::invalid_argument("config: pretrain_scale must be >= 0");
  if (pass_ks.empty()) throw std::invalid_argument("config: pass_ks must be non-empty");
  for (int k : pass_ks) {
    if (k < 1) throw std::invalid_argument("config: pass_ks entries must be >= 1");
  }
  if (adamw_beta1 < 0.0 || adamw_beta1 >= 1.0 || adamw_beta2 < 0.0 || adamw_beta2 >= 1.0)
    throw std::invalid_argument("config: adamw betas must be in [0, 1)");
  if (adamw_epsilon <= 0.0) throw std::invalid_argument("config: adamw_epsilon must be > 0");
  if (adamw_weight_decay < 0.0)
    throw std::invalid_argument("config: adamw_weight_decay must be >= 0");
}

RolloutGroup collect_group(const TaskSpec& task, const PolicyParams& params,
                           const PolicyParams& ref, const PolicyParams& old,
                           const TrainerConfig& config, Rng& rng) {
  if (config.group_size < 2) throw std::invalid_argument("collect_group: group_size must be >= 2");
  RolloutGroup group;
  group.task = task;
  group.rollouts.reserve(config.group_size);

  for (int i = 0; i < config.group_size; ++i) {
    Rollout r;
    auto sample = sample_sequence(params, task.prompt_class, task.length, rng,
                                  config.stop_token);
    r.tokens = std::move(sample.tokens);
    r.length = static_cast<int>(r.tokens.size());
    // All three log-probs go through the same replay route, so identical
    // policies give identical values and c is exactly zero at the start.
    r.per_token_logp_theta = sequence_per_token_logprob(params, task.prompt_class, r.tokens);
    r.per_token_logp_ref = sequence_per_token_logprob(ref, task.prompt_class, r.tokens);
    r.per_token_logp_old = sequence_per_token_logprob(old, task.prompt_class, r.tokens);
    for (double lp : r.per_token_logp_theta) r.logp_theta += lp;
    for (double lp : r.per_token_logp_ref) r.logp_ref += lp;
    for (double lp : r.per_token_logp_old) r.logp_old += lp;
    // Variable-length mode: a sequence that stopped early cannot satisfy the
    // fixed-length verifier and counts as incorrect.
    if (r.length != task.length) {
      r.reward = 0.0;
    } else {
      r.reward = static_cast<double>(verify(task, r.tokens).reward);
    }
    r.confidence = confidence_score(r.logp_theta, r.logp_ref, r.length, false);
    r.confidence_normalized = confidence_score(r.logp_theta, r.logp_ref, r.length, true);
    group.rollouts.push_back(std::move(r));
  }

  std::vector<double> rewards(group.rollouts.size());
  std::vector<double> modulated_confidence(group.rollouts.size());
  for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
    rewards[i] = group.rollouts[i].reward;
    modulated_confidence[i] = config.normalize_confidence
                                  ? group.rollouts[i].confidence_normalized
                                  : group.rollouts[i].confidence;
  }
  group.stats = group_stats(rewards);
  group.advantages.alpha = config.alpha;
  group.advantages.epsilon = config.advantage_epsilon;
  group.advantages.modulation_kind = config.modulation;
  group.advantages.grpo = grpo_advantages(rewards, group.stats, config.advantage_epsilon);
  group.advantages.ace = ace_advantages(group.advantages.grpo, rewards, modulated_confidence,
                                        config.alpha, config.modulation);
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    if (rewards[i] > group.stats.mean) {
      group.positive_set.push_back(static_cast<int>(i));
    } else {
      group.negative_set.push_back(static_cast<int>(i));
    }
  }
  return group;
}

LossBreakdown surrogate_loss(const RolloutGroup& group, const PolicyParams& params,
                             const TrainerConfig& config) {
  const auto& advantages = selected_advantages(group, config);
  const double lo = 1.0 - config.clip_low;
  const double hi = 1.0 + config.resolved_clip_high();
  const bool token_level = config.resolved_token_level_loss();
  const int G = static_cast<int>(group.rollouts.size());

  LossBreakdown lb;
  double surrogate_sum = 0.0;
  double kl_sum = 0.0;
  long long clipped = 0;
  long long terms = 0;

  for (int i = 0; i < G; ++i) {
    const Rollout& r = group.rollouts[i];
    const double A = advantages[i];
    auto lp_theta = sequence_per_token_logprob(params, group.task.prompt_class, r.tokens);

    double kl_seq = 0.0;
    for (int t = 0; t < r.length; ++t) kl_seq += k3_term(r.per_token_logp_ref[t], lp_theta[t]);
    kl_sum += kl_seq / r.length;

    if (token_level) {
      double seq_term = 0.0;
      for (int t = 0; t < r.length; ++t) {
        double rho = std::exp(lp_theta[t] - r.per_token_logp_old[t]);
        double raw = rho * A;
        double clipped_term = clip(rho, lo, hi) * A;
        seq_term += std::min(raw, clipped_term);
        lb.ratios.push_back(rho);
        ++terms;
        if (clipped_term < raw) ++clipped;
      }
      surrogate_sum += seq_term / r.length;
    } else {
      double lp_sum = 0.0;
      for (double lp : lp_theta) lp_sum += lp;
      double rho = std::exp(lp_sum - r.logp_old);
      double raw = rho * A;
      double clipped_term = clip(rho, lo, hi) * A;
      surrogate_sum += std::min(raw, clipped_term);
      lb.ratios.push_back(rho);
      ++terms;
      if (clipped_term < raw) ++clipped;
    }
  }

  lb.surrogate = -surrogate_sum / G;
  lb.kl_term = kl_sum / G;
  lb.total = lb.surrogate + config.kl_coeff * lb.kl_term;
  lb.clip_fraction = terms > 0 ? static_cast<double>(clipped) / terms : 0.0;
  return lb;
}

void accumulate_loss_gradient(const RolloutGroup& group, const PolicyParams& params,
                              const TrainerConfig& config, double weight, GradTensor& out) {
  if (!out.same_shape(params.logits))
    throw std::invalid_argument("accumulate_loss_gradient: shape mismatch");
  const auto& advantages = selected_advantages(group, config);
  const double lo = 1.0 - config.clip_low;
  const double hi = 1.0 + config.resolved_clip_high();
  const bool token_level = config.resolved_token_level_loss();
  const int G = static_cast<int>(group.rollouts.size());
  const int pc = group.task.prompt_class;

  std::vector<double> probs;
  for (int i = 0; i < G; ++i) {
    const Rollout& r = group.rollouts[i];
    const double A = advantages[i];
    auto lp_theta = sequence_per_token_logprob(params, pc, r.tokens);

    // Sequence-level ratio needs the full sum before distributing gradient.
    double rho_seq = 0.0;
    bool seq_active = false;
    if (!token_level) {
      double lp_sum = 0.0;
      for (double lp : lp_theta) lp_sum += lp;
      rho_seq = std::exp(lp_sum - r.logp_old);
      seq_active = rho_seq * A <= clip(rho_seq, lo, hi) * A;
    }

    for (int t = 0; t < r.length; ++t) {
      int prev = t == 0 ? params.bos() : r.tokens[t - 1];
      conditional_probs_into(params, pc, t, prev, probs);
      std::size_t base = out.row_offset(pc, t, prev);

      // Surrogate: gradient flows only through the unclipped branch; the
      // clipped branch is saturated wherever it is strictly smaller.
      double surrogate_coeff = 0.0;
      if (token_level) {
        double rho = std::exp(lp_theta[t] - r.per_token_logp_old[t]);
        bool active = rho * A <= clip(rho, lo, hi) * A;
        if (active) surrogate_coeff = -weight / G * A * rho / r.length;
      } else if (seq_active) {
        surrogate_coeff = -weight / G * A * rho_seq;
      }

      // KL: d/dtheta [exp(d) - 1 - d] = (1 - exp(d)) * dlogp_theta.
      double d = r.per_token_logp_ref[t] - lp_theta[t];
      double kl_coeff_t = weight / G * config.kl_coeff * (1.0 - std::exp(d)) / r.length;

      double coeff = surrogate_coeff + kl_coeff_t;
      if (coeff == 0.0) continue;
      for (int v = 0; v < params.vocab_size(); ++v) {
        double one_hot = (v == r.tokens[t]) ? 1.0 : 0.0;
        out.data[base + v] += coeff * (one_hot - probs[v]);
      }
    }
  }
}

GradTensor loss_gradient(const RolloutGroup& group, const PolicyParams& params,
                         const TrainerConfig& config) {
  GradTensor grad(params.num_prompt_classes(), params.max_len(), params.vocab_size());
  accumulate_loss_gradient(group, params, config, 1.0, grad);
  return grad;
}

double kl_estimate(const RolloutGroup& group) {
  if (group.rollouts.empty()) throw std::invalid_argument("kl_estimate: empty group");
  double total = 0.0;
  for (const Rollout& r : group.rollouts) {
    double seq = 0.0;
    for (int t = 0; t < r.length; ++t)
      seq += k3_term(r.per_token_logp_ref[t], r.per_token_logp_theta[t]);
    total += seq / r.length;
  }
  return total / group.rollouts.size();
}

double exact_mean_token_kl(const PolicyParams& params, const PolicyParams& ref,
                           int prompt_class, int length) {
  if (!params.logits.same_shape(ref.logits))
    throw std::invalid_argument("exact_mean_token_kl: shape mismatch");
  // Walk all prefixes, weighting each context's exact categorical KL by the
  // probability of reaching it under pi_theta.
  double total = 0.0;
  struct Frame {
    int prev;
    double prob;
  };
  std::vector<Frame> frontier = {{params.bos(), 1.0}};
  for (int pos = 0; pos < length; ++pos) {
    std::vector<Frame> next;
    for (const Frame& f : frontier) {
      auto p = conditional_distribution(params, prompt_class, pos, f.prev).probs;
      auto q = conditional_distribution(ref, prompt_class, pos, f.prev).probs;
      double kl = 0.0;
      for (std::size_t v = 0; v < p.size(); ++v) kl += p[v] * std::log(p[v] / q[v]);
      total += f.prob * kl;
      if (pos + 1 < length) {
        for (std::size_t v = 0; v < p.size(); ++v)
          next.push_back({static_cast<int>(v), f.prob * p[v]});
      }
    }
    // Contexts with the same (pos, prev) share a distribution; merge to keep
    // the frontier linear in vocab rather than exponential.
    if (pos + 1 < length) {
      std::vector<double> merged(params.vocab_size(), 0.0);
      for (const Frame& f : next) merged[f.prev] += f.prob;
      frontier.clear();
      for (int v = 0; v < params.vocab_size(); ++v) frontier.push_back({v, merged[v]});
    }
  }
  return total / length;
}

void apply_gradient(PolicyParams& params, const GradTensor& gradient, double learning_rate) {
  if (!params.logits.same_shape(gradient))
    throw std::invalid_argument("apply_gradient: shape mismatch");
  for (std::size_t i = 0; i < params.logits.data.size(); ++i)
    params.logits.data[i] -= learning_rate * gradient.data[i];
}

std::vector<RolloutGroup> dynamic_sampling_filter(std::vector<RolloutGroup> groups) {
  std::erase_if(groups, [](const RolloutGroup& g) {
    bool all_zero = true, all_one = true;
    for (const Rollout& r : g.rollouts) {
      if (r.reward != 0.0) all_zero = false;
      if (r.reward != 1.0) all_one = false;
    }
    return all_zero || all_one;
  });
  return groups;
}

namespace {

struct AdamWState {
  std::vector<double> m, v;
  long long t = 0;
};

void adamw_step(PolicyParams& params, const GradTensor& grad, const TrainerConfig& cfg,
                AdamWState& state) {
  if (state.m.empty()) {
    state.m.assign(params.logits.data.size(), 0.0);
    state.v.assign(params.logits.data.size(), 0.0);
  }
  ++state.t;
  double b1 = cfg.adamw_beta1, b2 = cfg.adamw_beta2;
  double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.logits.data.size(); ++i) {
    double g = grad.data[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    params.logits.data[i] -=
        cfg.learning_rate *
        (mhat / (std::sqrt(vhat) + cfg.adamw_epsilon) +
         cfg.adamw_weight_decay * params.logits.data[i]);
  }
}

}  // namespace

MetricsRecord evaluate_checkpoint(int step, const PolicyParams& params,
                                  const PolicyParams& ref,
                                  const std::vector<TaskSpec>& tasks,
                                  const TrainerConfig& config, double clip_fraction) {
  MetricsRecord rec;
  rec.step = step;
  rec.clip_fraction = clip_fraction;

  std::vector<double> incorrect_c;
  std::vector<std::vector<std::vector<int>>> correct_seqs(tasks.size());
  double reward_sum = 0.0;
  long long rollout_count = 0;
  double kl_sum = 0.0;
  long long kl_seqs = 0;
  std::map<int, double> passk_totals;
  for (int k : config.pass_ks) {
    if (k <= config.eval_rollouts) passk_totals[k] = 0.0;
  }

  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const TaskSpec& task = tasks[ti];
    Rng rng = Rng::stream(config.seed, {rng_purpose::kEval, static_cast<std::uint64_t>(step), ti});
    int correct = 0;
    for (int i = 0; i < config.eval_rollouts; ++i) {
      auto sample = sample_sequence(params, task.prompt_class, task.length, rng,
                                    config.stop_token);
      int length = static_cast<int>(sample.tokens.size());
      double reward = 0.0;
      if (length == task.length) reward = verify(task, sample.tokens).reward;
      reward_sum += reward;
      ++rollout_count;

      auto lp_ref = sequence_per_token_logprob(ref, task.prompt_class, sample.tokens);
      double logp_ref = 0.0;
      double kl_seq = 0.0;
      for (int t = 0; t < length; ++t) {
        logp_ref += lp_ref[t];
        kl_seq += k3_term(lp_ref[t], sample.per_token_logp[t]);
      }
      kl_sum += kl_seq / std::max(length, 1);
      ++kl_seqs;

      if (reward == 1.0) {
        correct += 1;
        correct_seqs[ti].push_back(sample.tokens);
      } else {
        bool raw = config.oef_use_raw_confidence || !config.normalize_confidence;
        incorrect_c.push_back(
            confidence_score(sample.logp_theta, logp_ref, std::max(length, 1), !raw));
      }
    }
    for (auto& [k, total] : passk_totals)
      total += pass_at_k(config.eval_rollouts, correct, k);
  }

  for (auto& [k, total] : passk_totals) rec.pass_at_k[k] = total / tasks.size();
  rec.mean_reward = rollout_count > 0 ? reward_sum / rollout_count : 0.0;
  auto summary = summarize_overconfidence(incorrect_c);
  rec.oef = summary.oef;
  rec.mean_overconfidence = summary.mean_overconfidence;
  rec.distinct_correct = distinct_correct(correct_seqs);
  rec.kl_to_ref = kl_seqs > 0 ? kl_sum / kl_seqs : 0.0;
  rec.entropy = exact_policy_entropy(params, tasks);
  return rec;
}

TrainResult train(const TrainerConfig& config, const std::vector<TaskSpec>& tasks,
                  PolicyParams params) {
  config.validate();
  if (tasks.empty()) throw std::invalid_argument("train: empty dataset");

  if (config.pretrain_steps > 0) {
    Rng rng = Rng::stream(config.seed, {rng_purpose::kPretrain});
    LogitTable seed_logits(params.num_prompt_classes(), params.max_len(), params.vocab_size());
    for (double& v : seed_logits.data) v = config.pretrain_scale * rng.normal();
    pretrain_toward(params, seed_logits, config.pretrain_steps,
                    config.pretrain_learning_rate);
  }

  const PolicyParams ref = snapshot(params);
  TrainResult result;
  AdamWState adamw;

  for (int step = 1; step <= config.steps; ++step) {
    PolicyParams old = snapshot(params);
    std::vector<RolloutGroup> groups;
    groups.reserve(tasks.size());
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
      Rng rng = Rng::stream(config.seed,
                            {rng_purpose::kRollout, static_cast<std::uint64_t>(step), ti});
      groups.push_back(collect_group(tasks[ti], params, ref, old, config, rng));
    }
    if (config.resolved_dynamic_sampling()) groups = dynamic_sampling_filter(std::move(groups));

    double clip_fraction = 0.0;
    if (groups.empty()) {
      ++result.skipped_steps;
    } else {
      for (int epoch = 0; epoch < config.inner_epochs; ++epoch) {
        GradTensor grad(params.num_prompt_classes(), params.max_len(), params.vocab_size());
        double cf = 0.0;
        for (const auto& group : groups) {
          accumulate_loss_gradient(group, params, config, 1.0 / groups.size(), grad);
          cf += surrogate_loss(group, params, config).clip_fraction;
        }
        clip_fraction = cf / groups.size();
        if (config.optimizer == OptimizerKind::adamw) {
          adamw_step(params, grad, config, adamw);
        } else {
          apply_gradient(params, grad, config.learning_rate);
        }
      }
    }

    if (step % config.checkpoint_every == 0 || step == config.steps) {
      result.metrics.push_back(
          evaluate_checkpoint(step, params, ref, tasks, config, clip_fraction));
    }
  }

  result.params = std::move(params);
  return result;
}

}  // namespace acelab
