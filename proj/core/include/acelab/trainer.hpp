// RLVR training loop: rollout collection, clipped surrogate loss with
// group-relative or confidence-amplified advantages, k3 KL penalty against a
// frozen reference, and plain-SGD (optionally AdamW) parameter updates.
//
// Advantages and confidence scores are treated as detached scalars: the loss
// gradient flows only through the importance ratios and the KL term.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "acelab/advantage.hpp"
#include "acelab/env.hpp"
#include "acelab/metrics.hpp"
#include "acelab/policy.hpp"
#include "acelab/rng.hpp"

namespace acelab {

enum class Algorithm { grpo, ace_grpo, dapo, ace_dapo };
enum class OptimizerKind { sgd, adamw };

Algorithm algorithm_from_string(const std::string& name);
std::string to_string(Algorithm algorithm);
OptimizerKind optimizer_from_string(const std::string& name);
std::string to_string(OptimizerKind kind);

inline bool uses_ace(Algorithm a) {
  return a == Algorithm::ace_grpo || a == Algorithm::ace_dapo;
}
inline bool is_dapo(Algorithm a) {
  return a == Algorithm::dapo || a == Algorithm::ace_dapo;
}

struct TrainerConfig {
  int group_size = 8;
  double alpha = 1.0;
  double kl_coeff = 0.001;
  double clip_low = 0.2;
  std::optional<double> clip_high;       // default: clip_low; 0.28 in DAPO modes
  double learning_rate = 0.1;
  int steps = 0;
  Algorithm algorithm = Algorithm::grpo;
  std::optional<bool> dynamic_sampling;  // default: on in DAPO modes
  std::optional<bool> token_level_loss;  // default: on (sequence advantage broadcast)
  Modulation modulation = Modulation::softplus;
  bool normalize_confidence = true;      // feed c/T rather than raw c to the modulation
  bool oef_use_raw_confidence = false;   // diagnostics follow the modulated quantity unless set
  std::uint64_t seed = 0;
  int checkpoint_every = 25;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double adamw_beta1 = 0.9;
  double adamw_beta2 = 0.999;
  double adamw_epsilon = 1e-8;
  double adamw_weight_decay = 0.01;
  int inner_epochs = 1;                  // gradient steps per collected batch
  double advantage_epsilon = kAdvantageEpsilon;
  int eval_rollouts = 32;                // checkpoint rollouts per task
  int entropy_samples = 16;              // checkpoint entropy trajectories per task
  std::vector<int> pass_ks = {1, 2, 4, 8, 16, 32};
  int pretrain_steps = 0;                // supervised steps toward a random seed policy
  double pretrain_learning_rate = 0.5;
  double pretrain_scale = 1.0;           // logit scale of the random seed policy
  std::optional<int> stop_token;         // variable-length mode; unset = fixed length

  double resolved_clip_high() const {
    if (clip_high) return *clip_high;
    return is_dapo(algorithm) ? 0.28 : clip_low;
  }
  bool resolved_dynamic_sampling() const {
    return dynamic_sampling ? *dynamic_sampling : is_dapo(algorithm);
  }
  bool resolved_token_level_loss() const {
    return token_level_loss ? *token_level_loss : true;
  }

  void validate() const;
};

struct Rollout {
  std::vector<int> tokens;
  double reward = 0.0;  // binary
  int length = 0;
  double logp_theta = 0.0;
  double logp_ref = 0.0;
  double logp_old = 0.0;
  std::vector<double> per_token_logp_theta;
  std::vector<double> per_token_logp_ref;
  std::vector<double> per_token_logp_old;
  double confidence = 0.0;             // logp_theta - logp_ref
  double confidence_normalized = 0.0;  // confidence / length
};

struct RolloutGroup {
  TaskSpec task;
  std::vector<Rollout> rollouts;
  GroupStats stats;
  AdvantageVector advantages;
  std::vector<int> positive_set;  // indices with r_i > mean
  std::vector<int> negative_set;  // indices with r_i <= mean
};

struct LossBreakdown {
  double surrogate = 0.0;
  double kl_term = 0.0;  // pre-beta k3 estimate
  double total = 0.0;    // surrogate + kl_coeff * kl_term
  std::vector<double> ratios;
  double clip_fraction = 0.0;
};

/// Samples group_size rollouts for one task, populates rewards, the three
/// log-probs, confidence shifts, group stats and both advantage vectors.
RolloutGroup collect_group(const TaskSpec& task, const PolicyParams& params,
                           const PolicyParams& ref, const PolicyParams& old,
                           const TrainerConfig& config, Rng& rng);

/// Clipped pessimistic surrogate plus KL penalty, evaluated at `params`
/// (ratios and the KL term are recomputed; stored advantages stay frozen).
LossBreakdown surrogate_loss(const RolloutGroup& group, const PolicyParams& params,
                             const TrainerConfig& config);

/// Analytic gradient of surrogate_loss with respect to the logits, with
/// advantages and confidence scores detached. `weight` scales the
/// contribution (1/num_groups for batch means).
void accumulate_loss_gradient(const RolloutGroup& group, const PolicyParams& params,
                              const TrainerConfig& config, double weight, GradTensor& out);
GradTensor loss_gradient(const RolloutGroup& group, const PolicyParams& params,
                         const TrainerConfig& config);

/// Per-token k3 estimator mean over the group's stored log-probs:
/// exp(d) - 1 - d with d = logp_ref - logp_theta. Pointwise non-negative.
double kl_estimate(const RolloutGroup& group);

/// Enumeration oracle: exact expected per-token KL(pi_theta || pi_ref) along
/// trajectories of `length`, averaged over positions. What kl_estimate
/// estimates in the fixed-length case.
double exact_mean_token_kl(const PolicyParams& params, const PolicyParams& ref,
                           int prompt_class, int length);

/// theta <- theta - learning_rate * gradient.
void apply_gradient(PolicyParams& params, const GradTensor& gradient, double learning_rate);

/// Drops groups whose rewards are all 0 or all 1 (zero-gradient groups).
std::vector<RolloutGroup> dynamic_sampling_filter(std::vector<RolloutGroup> groups);

struct TrainResult {
  PolicyParams params;
  std::vector<MetricsRecord> metrics;
  int skipped_steps = 0;  // steps where every group was degenerate
};

/// Runs the full loop: pi_ref snapshotted up front (after the optional
/// pretrain phase), pi_old refreshed every outer step, metrics recorded every
/// checkpoint_every steps and at the final step. Deterministic given
/// config.seed.
TrainResult train(const TrainerConfig& config, const std::vector<TaskSpec>& tasks,
                  PolicyParams params);

/// Checkpoint evaluation used by train(); exposed for tests and tools.
MetricsRecord evaluate_checkpoint(int step, const PolicyParams& params,
                                  const PolicyParams& ref,
                                  const std::vector<TaskSpec>& tasks,
                                  const TrainerConfig& config, double clip_fraction);

}  // namespace acelab
