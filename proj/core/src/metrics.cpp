#include "acelab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace acelab {

double pass_at_k(long long n, long long c, long long k) {
  if (n < 1) throw std::invalid_argument("pass_at_k: n must be >= 1");
  if (c < 0 || c > n) throw std::invalid_argument("pass_at_k: need 0 <= c <= n");
  if (k < 1 || k > n) throw std::invalid_argument("pass_at_k: need 1 <= k <= n");
  if (n - c < k) return 1.0;  // every k-subset hits a correct sample
  if (c == 0) return 0.0;

  // Exact integer path: numerator prod (n-c-i), denominator prod (n-i).
  // Both stay <= 2^53 for the sizes used in tests, making the final division
  // the only rounding step, so the value agrees exactly with brute-force
  // subset counting.
  constexpr double kExact = 9007199254740992.0;  // 2^53
  double num = 1.0, den = 1.0;
  bool exact = true;
  for (long long i = 0; i < k; ++i) {
    num *= static_cast<double>(n - c - i);
    den *= static_cast<double>(n - i);
    if (den > kExact) {
      exact = false;
      break;
    }
  }
  if (exact) return std::clamp((den - num) / den, 0.0, 1.0);

  double prod = 1.0;
  for (long long i = 0; i < k; ++i) {
    prod *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
  }
  return std::clamp(1.0 - prod, 0.0, 1.0);
}

std::map<int, double> pass_at_k_eval(const std::vector<TaskSpec>& tasks,
                                     const PolicyParams& params, int n,
                                     std::span<const int> ks, Rng& rng,
                                     double temperature) {
  if (tasks.empty()) throw std::invalid_argument("pass_at_k_eval: empty dataset");
  for (int k : ks) {
    if (k < 1 || k > n)
      throw std::invalid_argument("pass_at_k_eval: every k must satisfy 1 <= k <= n");
  }
  std::map<int, double> totals;
  for (int k : ks) totals[k] = 0.0;
  for (const auto& task : tasks) {
    int correct = 0;
    for (int i = 0; i < n; ++i) {
      auto sample =
          sample_sequence(params, task.prompt_class, task.length, rng, std::nullopt,
                          temperature);
      correct += verify(task, sample.tokens).reward;
    }
    for (int k : ks) totals[k] += pass_at_k(n, correct, k);
  }
  for (auto& [k, v] : totals) v /= static_cast<double>(tasks.size());
  return totals;
}

OverconfidenceSummary summarize_overconfidence(std::span<const double> c_values) {
  OverconfidenceSummary s;
  s.num_incorrect = static_cast<int>(c_values.size());
  double sum_pos = 0.0;
  for (double c : c_values) {
    if (c > 0.0) {
      ++s.num_overconfident;
      sum_pos += c;
    }
  }
  if (s.num_incorrect > 0)
    s.oef = static_cast<double>(s.num_overconfident) / s.num_incorrect;
  if (s.num_overconfident > 0) s.mean_overconfidence = sum_pos / s.num_overconfident;
  return s;
}

double oef(std::span<const double> c_values) { return summarize_overconfidence(c_values).oef; }

std::optional<double> mean_overconfidence(std::span<const double> c_values) {
  return summarize_overconfidence(c_values).mean_overconfidence;
}

double policy_entropy(const PolicyParams& params, const std::vector<TaskSpec>& tasks,
                      int samples_per_task, Rng& rng) {
  if (samples_per_task < 1)
    throw std::invalid_argument("policy_entropy: samples_per_task must be >= 1");
  if (tasks.empty()) throw std::invalid_argument("policy_entropy: empty dataset");
  double total = 0.0;
  long long contexts = 0;
  for (const auto& task : tasks) {
    for (int s = 0; s < samples_per_task; ++s) {
      auto sample = sample_sequence(params, task.prompt_class, task.length, rng);
      for (int pos = 0; pos < static_cast<int>(sample.tokens.size()); ++pos) {
        int prev = pos == 0 ? params.bos() : sample.tokens[pos - 1];
        total += token_entropy(params, task.prompt_class, pos, prev);
        ++contexts;
      }
    }
  }
  return contexts > 0 ? total / contexts : 0.0;
}

double exact_policy_entropy(const PolicyParams& params, const std::vector<TaskSpec>& tasks) {
  if (tasks.empty()) throw std::invalid_argument("exact_policy_entropy: empty dataset");
  double total = 0.0;
  long long positions = 0;
  for (const auto& task : tasks) {
    // Prefix marginals: P(prev token at position t) under the policy.
    std::vector<double> marginal(params.vocab_size() + 1, 0.0);
    marginal[params.bos()] = 1.0;
    for (int pos = 0; pos < task.length; ++pos) {
      std::vector<double> next(params.vocab_size(), 0.0);
      for (int prev = 0; prev <= params.vocab_size(); ++prev) {
        if (marginal[prev] == 0.0) continue;
        total += marginal[prev] * token_entropy(params, task.prompt_class, pos, prev);
        auto dist = conditional_distribution(params, task.prompt_class, pos, prev);
        for (int v = 0; v < params.vocab_size(); ++v)
          next[v] += marginal[prev] * dist.probs[v];
      }
      ++positions;
      marginal.assign(params.vocab_size() + 1, 0.0);
      std::copy(next.begin(), next.end(), marginal.begin());
    }
  }
  return total / positions;
}

long long distinct_correct(
    const std::vector<std::vector<std::vector<int>>>& correct_sequences_per_task) {
  long long total = 0;
  for (const auto& task_sequences : correct_sequences_per_task) {
    std::set<std::vector<int>> unique(task_sequences.begin(), task_sequences.end());
    total += static_cast<long long>(unique.size());
  }
  return total;
}

}  // namespace acelab
