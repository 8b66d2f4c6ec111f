// Tabular autoregressive categorical policy.
//
// The policy is an order-1 autoregressive softmax table: one logit row per
// (prompt class, position, previous token), with a synthetic begin-of-sequence
// marker occupying previous-token index V. Small enough that log-probs,
// score functions, entropies and full sequence-space enumeration are exact.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "acelab/rng.hpp"

namespace acelab {

inline constexpr std::size_t kEnumerationCap = 1'000'000;

/// Thrown when an exhaustive enumeration would exceed the configured cap.
class EnumerationCapError : public std::runtime_error {
 public:
  EnumerationCapError(std::size_t requested, std::size_t cap)
      : std::runtime_error("enumeration refused: " + std::to_string(requested) +
                           " sequences exceeds cap of " + std::to_string(cap)),
        requested_(requested),
        cap_(cap) {}
  std::size_t requested() const { return requested_; }
  std::size_t cap() const { return cap_; }

 private:
  std::size_t requested_;
  std::size_t cap_;
};

/// Dense table indexed by (prompt class, position, previous token, token).
/// The previous-token axis has vocab+1 entries; index vocab is the
/// begin-of-sequence marker. Doubles as the gradient tensor, which shares
/// the same shape.
struct LogitTable {
  int classes = 0;
  int positions = 0;
  int vocab = 0;
  std::vector<double> data;

  LogitTable() = default;
  LogitTable(int num_classes, int num_positions, int vocab_size)
      : classes(num_classes),
        positions(num_positions),
        vocab(vocab_size),
        data(static_cast<std::size_t>(num_classes) * num_positions *
                 (vocab_size + 1) * vocab_size,
             0.0) {
    if (num_classes < 1 || num_positions < 1 || vocab_size < 2) {
      throw std::invalid_argument("LogitTable: need classes>=1, positions>=1, vocab>=2");
    }
  }

  int bos() const { return vocab; }

  std::size_t index(int prompt_class, int position, int prev_token, int token) const {
    check_context(prompt_class, position, prev_token);
    if (token < 0 || token >= vocab) throw std::out_of_range("LogitTable: token out of range");
    return ((static_cast<std::size_t>(prompt_class) * positions + position) *
                (vocab + 1) +
            prev_token) *
               vocab +
           token;
  }

  /// Offset of a full logit row (one conditional distribution).
  std::size_t row_offset(int prompt_class, int position, int prev_token) const {
    check_context(prompt_class, position, prev_token);
    return ((static_cast<std::size_t>(prompt_class) * positions + position) *
                (vocab + 1) +
            prev_token) *
           vocab;
  }

  double& at(int prompt_class, int position, int prev_token, int token) {
    return data[index(prompt_class, position, prev_token, token)];
  }
  double at(int prompt_class, int position, int prev_token, int token) const {
    return data[index(prompt_class, position, prev_token, token)];
  }

  std::span<const double> row(int prompt_class, int position, int prev_token) const {
    return {data.data() + row_offset(prompt_class, position, prev_token),
            static_cast<std::size_t>(vocab)};
  }

  bool same_shape(const LogitTable& other) const {
    return classes == other.classes && positions == other.positions && vocab == other.vocab;
  }

  double max_abs() const;

 private:
  void check_context(int prompt_class, int position, int prev_token) const {
    if (prompt_class < 0 || prompt_class >= classes)
      throw std::out_of_range("LogitTable: prompt class out of range");
    if (position < 0 || position >= positions)
      throw std::out_of_range("LogitTable: position out of range");
    if (prev_token < 0 || prev_token > vocab)
      throw std::out_of_range("LogitTable: previous token out of range");
  }
};

using GradTensor = LogitTable;

/// Policy parameters. Value semantics: copying is snapshotting.
struct PolicyParams {
  LogitTable logits;

  PolicyParams() = default;
  PolicyParams(int num_prompt_classes, int max_len, int vocab_size)
      : logits(num_prompt_classes, max_len, vocab_size) {}

  int num_prompt_classes() const { return logits.classes; }
  int max_len() const { return logits.positions; }
  int vocab_size() const { return logits.vocab; }
  int bos() const { return logits.bos(); }

  /// All entries finite?
  bool finite() const;
};

struct TokenDistribution {
  std::vector<double> probs;
};

struct SequenceSample {
  std::vector<int> tokens;
  double logp_theta = 0.0;
  std::vector<double> per_token_logp;
};

struct SequenceOutcome {
  std::vector<int> tokens;
  double probability = 0.0;
};

/// Deep copy of the parameters; later mutation of either side leaves the
/// other untouched.
inline PolicyParams snapshot(const PolicyParams& params) { return params; }

/// Softmax of the addressed logit row.
TokenDistribution conditional_distribution(const PolicyParams& params, int prompt_class,
                                           int position, int prev_token);

/// Per-token log-probabilities of the addressed row (logit - logsumexp).
std::vector<double> conditional_log_probs(const PolicyParams& params, int prompt_class,
                                          int position, int prev_token);

/// As conditional_distribution but writing into an existing buffer; for
/// inner loops.
void conditional_probs_into(const PolicyParams& params, int prompt_class, int position,
                            int prev_token, std::vector<double>& out);

/// Autoregressive draw of `length` tokens. Per-token log-probs are recorded
/// from the exact conditionals used for sampling. If `stop_token` is set,
/// generation ends early when it is drawn (the stop token is kept).
/// `temperature` scales the logits before the softmax (1.0 = the policy
/// itself); recorded log-probs are those of the tempered distribution.
SequenceSample sample_sequence(const PolicyParams& params, int prompt_class, int length,
                               Rng& rng, std::optional<int> stop_token = std::nullopt,
                               double temperature = 1.0);

/// Sum over positions of log pi(token | class, position, prev).
double sequence_logprob(const PolicyParams& params, int prompt_class,
                        std::span<const int> tokens);

/// Per-token log-probs of an existing token sequence.
std::vector<double> sequence_per_token_logprob(const PolicyParams& params, int prompt_class,
                                               std::span<const int> tokens);

/// Analytic gradient of sequence_logprob with respect to every logit entry:
/// (one-hot(chosen) - probs) at each visited row, zero elsewhere.
GradTensor score_function(const PolicyParams& params, int prompt_class,
                          std::span<const int> tokens);

/// As score_function but accumulating `weight * score` into an existing
/// tensor; avoids allocating per-sequence tensors in inner loops.
void accumulate_score(const PolicyParams& params, int prompt_class,
                      std::span<const int> tokens, double weight, GradTensor& out);

/// All vocab^length sequences with their exact probabilities. Refuses above
/// `cap` with an explicit size report.
std::vector<SequenceOutcome> enumerate_sequences(const PolicyParams& params, int prompt_class,
                                                 int length,
                                                 std::size_t cap = kEnumerationCap);

/// Shannon entropy (nats) of one conditional distribution; in [0, ln vocab].
double token_entropy(const PolicyParams& params, int prompt_class, int position,
                     int prev_token);

/// One full-batch cross-entropy step per row toward the softmax of
/// `seed_logits`, repeated `steps` times. Used to manufacture a nonuniform
/// reference policy before training.
void pretrain_toward(PolicyParams& params, const LogitTable& seed_logits, int steps,
                     double learning_rate);

/// Checkpoint I/O: little-endian binary, header (vocab, max_len, classes),
/// then float64 logits in (class, position, prev, token) order.
void save_policy(const PolicyParams& params, const std::string& path);
PolicyParams load_policy(const std::string& path);

}  // namespace acelab
