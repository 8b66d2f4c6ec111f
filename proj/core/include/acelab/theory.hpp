// Numerical verification of the advantage-shaping algebra.
//
// Exact enumeration over the sequence space checks that the confidence-
// amplified gradient decomposes into the full gradient of a selective
// regularizer minus a sigmoid-weighted residual; Monte Carlo on a Gaussian
// linear model checks the gradient-quality claims. Confidence shifts here
// are the RAW sequence-level values (no length normalization).

#pragma once

#include <cstdint>
#include <stdexcept>

#include "acelab/advantage.hpp"
#include "acelab/env.hpp"
#include "acelab/policy.hpp"
#include "acelab/rng.hpp"

namespace acelab {

/// Thrown for tasks whose correct set is empty or exhaustive: the group-
/// normalized negative advantage is degenerate there and the decomposition
/// is vacuous.
class DegenerateTaskError : public std::runtime_error {
 public:
  explicit DegenerateTaskError(const std::string& what) : std::runtime_error(what) {}
};

/// |A^-| for a binary-reward task from the exact pass rate p:
/// p / (sqrt(p (1-p)) + epsilon).
double negative_advantage_magnitude(const PolicyParams& params, const TaskSpec& task,
                                    double epsilon = kAdvantageEpsilon);

/// Sum over incorrect sequences of pi_theta(y) * softplus(c(y)); the
/// selective regularizer without its difficulty factor. Exposed so tests can
/// finite-difference the regularizer with the difficulty factor frozen.
double selective_regularizer_sum(const PolicyParams& params, const PolicyParams& ref,
                                 const TaskSpec& task);

/// |A^-| * selective_regularizer_sum. Non-negative.
double selective_regularizer_value(const PolicyParams& params, const PolicyParams& ref,
                                   const TaskSpec& task);

/// Approximation of the regularizer as a difficulty-weighted reverse KL:
/// restrict to sequences with c > 0 and replace softplus(c) by c.
double selective_regularizer_kl_approximation(const PolicyParams& params,
                                              const PolicyParams& ref, const TaskSpec& task);

/// Exact alpha-dependent extra gradient of the confidence-amplified
/// objective: -alpha * |A^-| * sum over incorrect y of
/// pi(y) softplus(c(y)) grad log pi(y). The modulation is detached.
GradTensor ace_extra_gradient(const PolicyParams& params, const PolicyParams& ref,
                              const TaskSpec& task, double alpha);

/// Full product-rule gradient of the selective regularizer
/// (|A^-| held constant): |A^-| * sum over incorrect y of
/// [softplus(c) grad pi(y) + pi(y) sigmoid(c) grad log pi(y)].
GradTensor selective_regularizer_gradient(const PolicyParams& params, const PolicyParams& ref,
                                          const TaskSpec& task);

/// The through-confidence residual:
/// |A^-| * sum over incorrect y of pi(y) sigmoid(c(y)) grad log pi(y).
GradTensor residual_gradient(const PolicyParams& params, const PolicyParams& ref,
                             const TaskSpec& task);

struct DecompositionReport {
  GradTensor delta_grad;   // extra gradient, modulation detached
  GradTensor reg_grad;     // full regularizer gradient
  GradTensor residual;     // sigmoid-weighted residual
  double alpha = 0.0;
  double r_sel_value = 0.0;
  double identity_defect = 0.0;  // max-norm of delta + alpha*reg - alpha*residual
};

/// Max-norm defect of the identity; `drop_residual` omits the residual term
/// (negative control: the defect must then be large).
double decomposition_defect(const DecompositionReport& report, bool drop_residual = false);

/// Computes all three tensors and the identity defect. The identity is exact,
/// so the defect should be at floating-point noise level.
DecompositionReport verify_decomposition(const PolicyParams& params, const PolicyParams& ref,
                                         const TaskSpec& task, double alpha);

struct McGradient {
  GradTensor mean;
  GradTensor stderr_entries;
  long long samples = 0;
};

/// Sampled estimate of ace_extra_gradient from `num_samples` on-policy
/// rollouts (|A^-| taken from the exact pass rate), with a per-entry
/// standard error for law-of-large-numbers checks.
McGradient ace_extra_gradient_mc(const PolicyParams& params, const PolicyParams& ref,
                                 const TaskSpec& task, double alpha, long long num_samples,
                                 Rng& rng);

/// Exact conditional moments, on a tabular instance, of the quantities the
/// gradient-quality analysis assumes things about: among incorrect
/// sequences, phi = softplus(c) and u = the score projected on the expected
/// incorrect-score direction. Reported, never asserted; the analysis only
/// assumes Cov(phi, u^2) > 0 rather than deriving it.
struct AssumptionCheckReport {
  double pass_rate = 0.0;         // exact mass on the correct set
  bool signal_defined = false;    // expected incorrect score is nonzero
  double mean_u = 0.0;
  double var_u = 0.0;
  double mean_phi = 0.0;
  double cov_phi_u = 0.0;
  double cov_phi_u2 = 0.0;
  double q_std = 0.0;             // mean_u^2 / var_u
  bool cov_phi_u2_positive = false;
  bool high_variance_regime = false;  // q_std < 1
};

AssumptionCheckReport check_gradient_quality_assumptions(const PolicyParams& params,
                                                         const PolicyParams& ref,
                                                         const TaskSpec& task);

/// Gaussian linear model: u ~ N(mu, sigma^2), phi = a + b u.
struct GaussianModelConfig {
  double mu = 0.5;
  double sigma = 1.0;
  double phi_intercept = 0.5;  // a
  double phi_slope = 1.0;      // b
  double alpha = 0.05;
  long long n_samples = 1'000'000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct QualityReport {
  long long n_samples = 0;
  // Sample moments of the directional projection u and weight phi.
  double mean_u = 0.0, var_u = 0.0, mean_phi = 0.0;
  // Monte Carlo estimates.
  double delta1_mc = 0.0;       // E[phi u^2] - E[u] E[phi u]
  double cov_phi_u_mc = 0.0;    // C
  double cov_phi_u2_mc = 0.0;   // Cov(phi, u^2)
  double gamma_mc = 0.0;        // C mu (1 + Q_std) - Q_std Cov(phi, u^2)
  double q_std_mc = 0.0;        // mu^2 / Var[u]
  double q_ace_mc = 0.0;        // quality ratio under weights (1 + alpha phi)
  double var_wu_mc = 0.0;       // directional variance under the ACE weights
  // Influence-function standard errors for the 3-sigma checks.
  double delta1_se = 0.0, cov_phi_u_se = 0.0, cov_phi_u2_se = 0.0;
  // Closed forms for the Gaussian linear model.
  double delta1_analytic = 0.0;     // 2 b mu sigma^2 + a sigma^2
  double cov_phi_u_analytic = 0.0;  // b sigma^2
  double cov_phi_u2_analytic = 0.0; // 2 b mu sigma^2
  double c_mu_over_cov_ratio = 0.0; // C mu / Cov(phi, u^2); 1/2 when defined
  double q_std_analytic = 0.0;
  double q_ace_analytic = 0.0;
  double gamma_analytic = 0.0;      // b mu (sigma^2 - mu^2)
  double negative_phi_fraction = 0.0;
};

/// Refuses n_samples < 1000 (statistically meaningless).
QualityReport gaussian_quality_report(const GaussianModelConfig& config);

struct QualityVerdict {
  bool improved = false;        // MC Q_ace > MC Q_std
  bool hypothesis_held = false; // analytic Q_std < 1 and phi_slope > 0
  double q_std_mc = 0.0;
  double q_ace_mc = 0.0;
  double q_std_analytic = 0.0;
};

/// First-order regime only: refuses alpha > 0.1.
QualityVerdict quality_improvement_check(const GaussianModelConfig& config);

struct SecondMomentVerdict {
  bool increased = false;  // mean (1+alpha phi)^2 |s|^2 > mean |s|^2
  double moment_std_mc = 0.0;
  double moment_ace_mc = 0.0;
  double increase_mc = 0.0;
  double increase_analytic = 0.0;  // 2 alpha E[phi |s|^2] + alpha^2 E[phi^2 |s|^2]
  double increase_se = 0.0;
  int score_dim = 0;
};

/// Synthetic score vectors: projection u on the signal axis plus
/// independent unit-normal noise in the remaining score_dim - 1 axes.
/// At alpha = 0 the two moments coincide and the verdict is false.
SecondMomentVerdict second_moment_check(const GaussianModelConfig& config, int score_dim);

}  // namespace acelab
