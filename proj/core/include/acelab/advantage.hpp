// Group-relative advantages and the confidence-aware error penalty.
//
// Groups of rollouts for one prompt are normalized by their empirical mean
// and population std. Incorrect rollouts additionally get their advantage
// amplified by (1 + alpha * modulate(c)), where c is the confidence shift
// log pi_theta(y) - log pi_ref(y) (optionally length-normalized) and the
// modulation is Softplus by default, ReLU as the ablation variant.

#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace acelab {

/// Epsilon added to the group std in the advantage denominator.
inline constexpr double kAdvantageEpsilon = 1e-8;

struct GroupStats {
  double mean = 0.0;
  double stddev = 0.0;    // population, divisor G
  double pass_rate = 0.0; // equals mean for binary rewards
  int group_size = 0;
};

enum class Modulation { softplus, relu };

enum class ConfidenceRegime { overconfident, exploratory, self_correcting };

struct AdvantageVector {
  std::vector<double> grpo;
  std::vector<double> ace;
  double alpha = 0.0;
  double epsilon = kAdvantageEpsilon;
  Modulation modulation_kind = Modulation::softplus;
};

/// Empirical mean and population std (divide by G, not G-1).
GroupStats group_stats(std::span<const double> rewards);

/// Group-normalized advantages (r_i - mean) / (std + epsilon). Rollouts with
/// identical rewards get identical advantages.
std::vector<double> grpo_advantages(std::span<const double> rewards, const GroupStats& stats,
                                    double epsilon = kAdvantageEpsilon);

/// Confidence shift c = logp_theta - logp_ref, divided by the sequence
/// length when `normalize` is set.
double confidence_score(double logp_theta, double logp_ref, int length, bool normalize);

/// Overflow-safe log(1 + e^c); switches to c + log1p(e^-c) above c = 30.
double softplus(double c);

/// d/dc softplus(c) = 1 / (1 + e^-c).
double sigmoid(double c);

double modulate(double c, Modulation kind);

Modulation modulation_from_string(const std::string& name);
std::string to_string(Modulation kind);

/// ACE advantages: incorrect rollouts (reward 0) are scaled by
/// (1 + alpha * modulate(c)); correct rollouts keep the group-normalized
/// advantage untouched. alpha = 0 returns the input element-wise.
std::vector<double> ace_advantages(std::span<const double> grpo,
                                   std::span<const double> rewards,
                                   std::span<const double> confidence, double alpha,
                                   Modulation kind);

/// Sign-based regime classification with tolerance band `tau` around zero.
ConfidenceRegime regime_of(double c, double tau = 0.0);

}  // namespace acelab
