#include "acelab/advantage.hpp"

#include <cmath>

namespace acelab {

GroupStats group_stats(std::span<const double> rewards) {
  if (rewards.empty()) throw std::invalid_argument("group_stats: empty group");
  GroupStats stats;
  stats.group_size = static_cast<int>(rewards.size());
  double sum = 0.0;
  for (double r : rewards) sum += r;
  stats.mean = sum / stats.group_size;
  double ss = 0.0;
  for (double r : rewards) {
    double d = r - stats.mean;
    ss += d * d;
  }
  stats.stddev = std::sqrt(ss / stats.group_size);
  stats.pass_rate = stats.mean;
  return stats;
}

std::vector<double> grpo_advantages(std::span<const double> rewards, const GroupStats& stats,
                                    double epsilon) {
  if (epsilon <= 0.0) throw std::invalid_argument("grpo_advantages: epsilon must be > 0");
  std::vector<double> out(rewards.size());
  double denom = stats.stddev + epsilon;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - stats.mean) / denom;
  return out;
}

double confidence_score(double logp_theta, double logp_ref, int length, bool normalize) {
  if (length < 1) throw std::invalid_argument("confidence_score: length must be >= 1");
  double c = logp_theta - logp_ref;
  return normalize ? c / length : c;
}

double softplus(double c) {
  if (c > 30.0) return c + std::log1p(std::exp(-c));
  return std::log1p(std::exp(c));
}

double sigmoid(double c) { return 1.0 / (1.0 + std::exp(-c)); }

double modulate(double c, Modulation kind) {
  switch (kind) {
    case Modulation::softplus:
      return softplus(c);
    case Modulation::relu:
      return c > 0.0 ? c : 0.0;
  }
  throw std::invalid_argument("modulate: unknown modulation");
}

Modulation modulation_from_string(const std::string& name) {
  if (name == "softplus") return Modulation::softplus;
  if (name == "relu") return Modulation::relu;
  throw std::invalid_argument("unknown modulation '" + name + "'");
}

std::string to_string(Modulation kind) {
  return kind == Modulation::softplus ? "softplus" : "relu";
}

std::vector<double> ace_advantages(std::span<const double> grpo,
                                   std::span<const double> rewards,
                                   std::span<const double> confidence, double alpha,
                                   Modulation kind) {
  if (grpo.size() != rewards.size() || grpo.size() != confidence.size())
    throw std::invalid_argument("ace_advantages: length mismatch");
  if (alpha < 0.0) throw std::invalid_argument("ace_advantages: alpha must be >= 0");
  std::vector<double> out(grpo.size());
  for (std::size_t i = 0; i < grpo.size(); ++i) {
    if (rewards[i] == 0.0) {
      out[i] = grpo[i] * (1.0 + alpha * modulate(confidence[i], kind));
    } else {
      out[i] = grpo[i];
    }
  }
  return out;
}

ConfidenceRegime regime_of(double c, double tau) {
  if (tau < 0.0) throw std::invalid_argument("regime_of: tau must be >= 0");
  if (c > tau) return ConfidenceRegime::overconfident;
  if (c < -tau) return ConfidenceRegime::self_correcting;
  return ConfidenceRegime::exploratory;
}

}  // namespace acelab
