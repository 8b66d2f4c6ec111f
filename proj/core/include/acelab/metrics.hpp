// Evaluation metrics: unbiased pass@k, overconfident-error diagnostics,
// policy entropy, and distinct-correct coverage.

#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "acelab/env.hpp"
#include "acelab/policy.hpp"
#include "acelab/rng.hpp"

namespace acelab {

/// Probability that at least one of k samples is correct, given c correct
/// among n: 1 - C(n-c, k) / C(n, k). Evaluated via the stable product
/// prod_{i<k} (n-c-i)/(n-i); small cases take an exact integer path so the
/// result matches subset enumeration bit-for-bit. Clamped to [0, 1].
double pass_at_k(long long n, long long c, long long k);

/// Samples n rollouts per task, counts correct, averages the estimator over
/// tasks for each requested k. `temperature` tempers the sampling
/// distribution (1.0 = the policy itself).
std::map<int, double> pass_at_k_eval(const std::vector<TaskSpec>& tasks,
                                     const PolicyParams& params, int n,
                                     std::span<const int> ks, Rng& rng,
                                     double temperature = 1.0);

struct OverconfidenceSummary {
  double oef = 0.0;  // fraction of incorrect rollouts with c > 0 (strict)
  std::optional<double> mean_overconfidence;  // mean of positive c; absent if none
  int num_incorrect = 0;
  int num_overconfident = 0;
};

OverconfidenceSummary summarize_overconfidence(std::span<const double> c_values_of_incorrect);

/// Fraction of incorrect-rollout confidence shifts that are strictly
/// positive; defined as 0 on an empty input.
double oef(std::span<const double> c_values_of_incorrect);

/// Mean of the strictly positive entries; absent (not 0) when there are none.
std::optional<double> mean_overconfidence(std::span<const double> c_values_of_incorrect);

/// Average exact conditional entropy over the contexts visited by sampled
/// trajectories, across tasks. The per-context entropy itself is the exact
/// full-vocabulary sum, never a sampled estimate.
double policy_entropy(const PolicyParams& params, const std::vector<TaskSpec>& tasks,
                      int samples_per_task, Rng& rng);

/// Noise-free counterpart: expected per-token entropy along on-policy
/// trajectories, computed from exact prefix marginals. What policy_entropy
/// estimates; used for checkpoint records so entropy curves carry no
/// evaluation noise.
double exact_policy_entropy(const PolicyParams& params, const std::vector<TaskSpec>& tasks);

/// Number of unique correct sequences, summed over tasks.
long long distinct_correct(
    const std::vector<std::vector<std::vector<int>>>& correct_sequences_per_task);

struct MetricsRecord {
  int step = 0;
  std::map<int, double> pass_at_k;
  double oef = 0.0;
  std::optional<double> mean_overconfidence;
  double entropy = 0.0;
  long long distinct_correct = 0;
  double kl_to_ref = 0.0;
  double mean_reward = 0.0;
  double clip_fraction = 0.0;
};

}  // namespace acelab
