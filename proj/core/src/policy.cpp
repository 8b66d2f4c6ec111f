#include "acelab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace acelab {

namespace {

double logsumexp(std::span<const double> row) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : row) m = std::max(m, v);
  double s = 0.0;
  for (double v : row) s += std::exp(v - m);
  return m + std::log(s);
}

void softmax_into(std::span<const double> row, std::vector<double>& out) {
  out.resize(row.size());
  double m = -std::numeric_limits<double>::infinity();
  for (double v : row) m = std::max(m, v);
  double s = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    out[i] = std::exp(row[i] - m);
    s += out[i];
  }
  for (double& p : out) p /= s;
}

int prev_of(const PolicyParams& params, std::span<const int> tokens, int position) {
  return position == 0 ? params.bos() : tokens[position - 1];
}

void check_tokens(const PolicyParams& params, std::span<const int> tokens) {
  if (static_cast<int>(tokens.size()) > params.max_len())
    throw std::out_of_range("sequence longer than max_len");
  for (int t : tokens) {
    if (t < 0 || t >= params.vocab_size()) throw std::out_of_range("token out of range");
  }
}

// Little-endian scalar I/O. The in-memory representation on every supported
// platform is already little-endian; the byte copy keeps the format explicit.
template <typename T>
void write_le(std::ofstream& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in) {
  char buf[sizeof(T)];
  in.read(buf, sizeof(T));
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

constexpr char kPolicyMagic[8] = {'A', 'C', 'E', 'P', 'O', 'L', 'Y', '1'};

}  // namespace

double LogitTable::max_abs() const {
  double m = 0.0;
  for (double v : data) m = std::max(m, std::fabs(v));
  return m;
}

bool PolicyParams::finite() const {
  for (double v : logits.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

TokenDistribution conditional_distribution(const PolicyParams& params, int prompt_class,
                                           int position, int prev_token) {
  TokenDistribution dist;
  softmax_into(params.logits.row(prompt_class, position, prev_token), dist.probs);
  return dist;
}

void conditional_probs_into(const PolicyParams& params, int prompt_class, int position,
                            int prev_token, std::vector<double>& out) {
  softmax_into(params.logits.row(prompt_class, position, prev_token), out);
}

std::vector<double> conditional_log_probs(const PolicyParams& params, int prompt_class,
                                          int position, int prev_token) {
  auto row = params.logits.row(prompt_class, position, prev_token);
  double lse = logsumexp(row);
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = row[i] - lse;
  return out;
}

SequenceSample sample_sequence(const PolicyParams& params, int prompt_class, int length,
                               Rng& rng, std::optional<int> stop_token, double temperature) {
  if (length < 0 || length > params.max_len())
    throw std::out_of_range("sample_sequence: length exceeds max_len");
  if (temperature <= 0.0)
    throw std::invalid_argument("sample_sequence: temperature must be > 0");
  SequenceSample sample;
  sample.tokens.reserve(length);
  sample.per_token_logp.reserve(length);
  std::vector<double> probs;
  std::vector<double> scaled;
  for (int pos = 0; pos < length; ++pos) {
    int prev = pos == 0 ? params.bos() : sample.tokens.back();
    auto row = params.logits.row(prompt_class, pos, prev);
    if (temperature == 1.0) {
      softmax_into(row, probs);
    } else {
      scaled.assign(row.begin(), row.end());
      for (double& v : scaled) v /= temperature;
      softmax_into(scaled, probs);
    }
    int tok = rng.categorical(probs);
    sample.tokens.push_back(tok);
    double lp = std::log(probs[tok]);
    sample.per_token_logp.push_back(lp);
    sample.logp_theta += lp;
    if (stop_token && tok == *stop_token) break;
  }
  return sample;
}

double sequence_logprob(const PolicyParams& params, int prompt_class,
                        std::span<const int> tokens) {
  check_tokens(params, tokens);
  double total = 0.0;
  for (int pos = 0; pos < static_cast<int>(tokens.size()); ++pos) {
    auto row = params.logits.row(prompt_class, pos, prev_of(params, tokens, pos));
    total += row[tokens[pos]] - logsumexp(row);
  }
  return total;
}

std::vector<double> sequence_per_token_logprob(const PolicyParams& params, int prompt_class,
                                               std::span<const int> tokens) {
  check_tokens(params, tokens);
  std::vector<double> out(tokens.size());
  for (int pos = 0; pos < static_cast<int>(tokens.size()); ++pos) {
    auto row = params.logits.row(prompt_class, pos, prev_of(params, tokens, pos));
    out[pos] = row[tokens[pos]] - logsumexp(row);
  }
  return out;
}

GradTensor score_function(const PolicyParams& params, int prompt_class,
                          std::span<const int> tokens) {
  GradTensor grad(params.num_prompt_classes(), params.max_len(), params.vocab_size());
  accumulate_score(params, prompt_class, tokens, 1.0, grad);
  return grad;
}

void accumulate_score(const PolicyParams& params, int prompt_class,
                      std::span<const int> tokens, double weight, GradTensor& out) {
  check_tokens(params, tokens);
  if (!out.same_shape(params.logits))
    throw std::invalid_argument("accumulate_score: shape mismatch");
  std::vector<double> probs;
  for (int pos = 0; pos < static_cast<int>(tokens.size()); ++pos) {
    int prev = prev_of(params, tokens, pos);
    softmax_into(params.logits.row(prompt_class, pos, prev), probs);
    std::size_t base = out.row_offset(prompt_class, pos, prev);
    for (int v = 0; v < params.vocab_size(); ++v) {
      double one_hot = (v == tokens[pos]) ? 1.0 : 0.0;
      out.data[base + v] += weight * (one_hot - probs[v]);
    }
  }
}

std::vector<SequenceOutcome> enumerate_sequences(const PolicyParams& params, int prompt_class,
                                                 int length, std::size_t cap) {
  if (length < 0 || length > params.max_len())
    throw std::out_of_range("enumerate_sequences: length exceeds max_len");
  const int vocab = params.vocab_size();
  std::size_t total = 1;
  for (int i = 0; i < length; ++i) {
    if (total > cap / static_cast<std::size_t>(vocab)) {
      // vocab^length overflows the cap; report the exact requested size when
      // it still fits in a double for the message.
      double requested = std::pow(static_cast<double>(vocab), length);
      throw EnumerationCapError(
          requested > 1e18 ? std::numeric_limits<std::size_t>::max()
                           : static_cast<std::size_t>(requested),
          cap);
    }
    total *= static_cast<std::size_t>(vocab);
  }

  // Per-position conditionals are cached per previous token; contexts repeat
  // heavily across the odometer walk.
  std::vector<std::vector<std::vector<double>>> cond(length);
  std::vector<double> probs;
  for (int pos = 0; pos < length; ++pos) {
    cond[pos].resize(vocab + 1);
    for (int prev = 0; prev <= vocab; ++prev) {
      if (pos > 0 && prev == vocab) continue;  // BOS only precedes position 0
      softmax_into(params.logits.row(prompt_class, pos, prev), cond[pos][prev]);
    }
  }

  std::vector<SequenceOutcome> out;
  out.reserve(total);
  std::vector<int> tokens(length, 0);
  for (std::size_t n = 0; n < total; ++n) {
    double p = 1.0;
    for (int pos = 0; pos < length; ++pos) {
      int prev = pos == 0 ? vocab : tokens[pos - 1];
      p *= cond[pos][prev][tokens[pos]];
    }
    out.push_back({tokens, p});
    for (int pos = length - 1; pos >= 0; --pos) {  // odometer, last digit fastest
      if (++tokens[pos] < vocab) break;
      tokens[pos] = 0;
    }
  }
  return out;
}

double token_entropy(const PolicyParams& params, int prompt_class, int position,
                     int prev_token) {
  std::vector<double> probs;
  softmax_into(params.logits.row(prompt_class, position, prev_token), probs);
  double h = 0.0;
  for (double p : probs) h -= p * std::log(p);
  return h;
}

void pretrain_toward(PolicyParams& params, const LogitTable& seed_logits, int steps,
                     double learning_rate) {
  if (!params.logits.same_shape(seed_logits))
    throw std::invalid_argument("pretrain_toward: shape mismatch");
  const int vocab = params.vocab_size();
  std::vector<double> p, q;
  for (int step = 0; step < steps; ++step) {
    for (int pc = 0; pc < params.num_prompt_classes(); ++pc) {
      for (int pos = 0; pos < params.max_len(); ++pos) {
        for (int prev = 0; prev <= vocab; ++prev) {
          softmax_into(params.logits.row(pc, pos, prev), p);
          softmax_into(seed_logits.row(pc, pos, prev), q);
          std::size_t base = params.logits.row_offset(pc, pos, prev);
          for (int v = 0; v < vocab; ++v) {
            params.logits.data[base + v] -= learning_rate * (p[v] - q[v]);
          }
        }
      }
    }
  }
}

void save_policy(const PolicyParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_policy: cannot open " + path);
  out.write(kPolicyMagic, sizeof(kPolicyMagic));
  write_le<std::int32_t>(out, params.vocab_size());
  write_le<std::int32_t>(out, params.max_len());
  write_le<std::int32_t>(out, params.num_prompt_classes());
  for (double v : params.logits.data) write_le<double>(out, v);
  if (!out) throw std::runtime_error("save_policy: write failed for " + path);
}

PolicyParams load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_policy: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kPolicyMagic, sizeof(magic)) != 0)
    throw std::runtime_error("load_policy: bad magic in " + path);
  std::int32_t vocab = read_le<std::int32_t>(in);
  std::int32_t max_len = read_le<std::int32_t>(in);
  std::int32_t classes = read_le<std::int32_t>(in);
  if (!in || vocab < 2 || max_len < 1 || classes < 1)
    throw std::runtime_error("load_policy: bad header in " + path);
  PolicyParams params(classes, max_len, vocab);
  for (double& v : params.logits.data) v = read_le<double>(in);
  if (!in) throw std::runtime_error("load_policy: truncated tensor in " + path);
  return params;
}

}  // namespace acelab
