// Synthetic verifiable tasks.
//
// The task family is mod_sum: a fixed-length token sequence is correct iff
// the sum of its tokens is congruent to a target modulo M. Deterministic
// binary verifier, exact brute-force oracles.

#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "acelab/policy.hpp"

namespace acelab {

enum class TaskKind { mod_sum };

struct TaskSpec {
  TaskKind kind = TaskKind::mod_sum;
  int modulus = 2;
  int target = 0;
  int vocab_size = 2;
  int length = 1;
  int prompt_class = 0;

  void validate() const;
};

struct VerdictRecord {
  int reward = 0;  // 0 or 1
};

/// reward = 1 iff (sum of tokens) mod M == target. Pure and deterministic.
/// Rejects wrong-length or out-of-range inputs.
VerdictRecord verify(const TaskSpec& task, std::span<const int> tokens);

/// Exact number of correct sequences, by brute force over vocab^length.
long long count_correct(const TaskSpec& task, std::size_t cap = kEnumerationCap);

/// Exact policy mass on the correct set: sum over correct sequences of
/// pi(y | prompt class). In [0, 1].
double exact_pass_rate(const TaskSpec& task, const PolicyParams& params,
                       std::size_t cap = kEnumerationCap);

/// Plain-text dataset: one task per line, "mod_sum M t V L", '#' comments.
/// Prompt classes are assigned in file order.
std::vector<TaskSpec> parse_tasks(std::istream& in);
std::vector<TaskSpec> load_tasks(const std::string& path);
void save_tasks(const std::vector<TaskSpec>& tasks, const std::string& path);

/// Smallest policy shape able to generate every task in the dataset.
PolicyParams make_policy_for(const std::vector<TaskSpec>& tasks);

}  // namespace acelab
