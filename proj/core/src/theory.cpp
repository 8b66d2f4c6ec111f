#include "acelab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "acelab/advantage.hpp"

namespace acelab {

namespace {

// Shared enumeration: every sequence with its probability under pi_theta,
// raw confidence shift, and verifier outcome.
struct EnumeratedTask {
  std::vector<SequenceOutcome> outcomes;
  std::vector<double> confidence;  // raw c(y) = log pi_theta - log pi_ref
  std::vector<char> incorrect;
  double pass_mass = 0.0;  // exact pass rate under pi_theta
};

EnumeratedTask enumerate_task(const PolicyParams& params, const PolicyParams& ref,
                              const TaskSpec& task) {
  task.validate();
  if (task.vocab_size != params.vocab_size())
    throw std::invalid_argument("theory: task vocab does not match policy");
  if (!params.logits.same_shape(ref.logits))
    throw std::invalid_argument("theory: policy and reference shapes differ");

  EnumeratedTask e;
  e.outcomes = enumerate_sequences(params, task.prompt_class, task.length);
  e.confidence.reserve(e.outcomes.size());
  e.incorrect.reserve(e.outcomes.size());
  bool any_correct = false, any_incorrect = false;
  for (const auto& outcome : e.outcomes) {
    double lp_theta = sequence_logprob(params, task.prompt_class, outcome.tokens);
    double lp_ref = sequence_logprob(ref, task.prompt_class, outcome.tokens);
    e.confidence.push_back(lp_theta - lp_ref);
    bool correct = verify(task, outcome.tokens).reward == 1;
    e.incorrect.push_back(correct ? 0 : 1);
    if (correct) {
      any_correct = true;
      e.pass_mass += outcome.probability;
    } else {
      any_incorrect = true;
    }
  }
  if (!any_correct || !any_incorrect) {
    throw DegenerateTaskError(
        "task has an empty or exhaustive correct set; negative advantage is degenerate");
  }
  return e;
}

double neg_adv_from_pass_rate(double pass_rate, double epsilon) {
  double sigma = std::sqrt(pass_rate * (1.0 - pass_rate));
  return pass_rate / (sigma + epsilon);
}

double max_abs_combination(const GradTensor& delta, const GradTensor& reg,
                           const GradTensor& residual, double alpha, bool drop_residual) {
  double defect = 0.0;
  for (std::size_t i = 0; i < delta.data.size(); ++i) {
    double v = delta.data[i] + alpha * reg.data[i];
    if (!drop_residual) v -= alpha * residual.data[i];
    defect = std::max(defect, std::fabs(v));
  }
  return defect;
}

}  // namespace

double negative_advantage_magnitude(const PolicyParams& params, const TaskSpec& task,
                                    double epsilon) {
  long long correct = count_correct(task);
  long long total = 1;
  for (int i = 0; i < task.length; ++i) total *= task.vocab_size;
  if (correct == 0 || correct == total)
    throw DegenerateTaskError(
        "task has an empty or exhaustive correct set; negative advantage is degenerate");
  return neg_adv_from_pass_rate(exact_pass_rate(task, params), epsilon);
}

double selective_regularizer_sum(const PolicyParams& params, const PolicyParams& ref,
                                 const TaskSpec& task) {
  EnumeratedTask e = enumerate_task(params, ref, task);
  double sum = 0.0;
  for (std::size_t i = 0; i < e.outcomes.size(); ++i) {
    if (e.incorrect[i]) sum += e.outcomes[i].probability * softplus(e.confidence[i]);
  }
  return sum;
}

double selective_regularizer_value(const PolicyParams& params, const PolicyParams& ref,
                                   const TaskSpec& task) {
  EnumeratedTask e = enumerate_task(params, ref, task);
  double a = neg_adv_from_pass_rate(e.pass_mass, kAdvantageEpsilon);
  double sum = 0.0;
  for (std::size_t i = 0; i < e.outcomes.size(); ++i) {
    if (e.incorrect[i]) sum += e.outcomes[i].probability * softplus(e.confidence[i]);
  }
  return a * sum;
}

double selective_regularizer_kl_approximation(const PolicyParams& params,
                                              const PolicyParams& ref, const TaskSpec& task) {
  EnumeratedTask e = enumerate_task(params, ref, task);
  double a = neg_adv_from_pass_rate(e.pass_mass, kAdvantageEpsilon);
  double sum = 0.0;
  for (std::size_t i = 0; i < e.outcomes.size(); ++i) {
    if (e.incorrect[i] && e.confidence[i] > 0.0)
      sum += e.outcomes[i].probability * e.confidence[i];
  }
  return a * sum;
}

GradTensor ace_extra_gradient(const PolicyParams& params, const PolicyParams& ref,
                              const TaskSpec& task, double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("ace_extra_gradient: alpha must be >= 0");
  EnumeratedTask e = enumerate_task(params, ref, task);
  double a = neg_adv_from_pass_rate(e.pass_mass, kAdvantageEpsilon);
  GradTensor grad(params.num_prompt_classes(), params.max_len(), params.vocab_size());
  for (std::size_t i = 0; i < e.outcomes.size(); ++i) {
    if (!e.incorrect[i]) continue;
    double weight = -alpha * a * e.outcomes[i].probability * softplus(e.confidence[i]);
    accumulate_score(params, task.prompt_class, e.outcomes[i].tokens, weight, grad);
  }
  return grad;
}

GradTensor selective_regularizer_gradient(const PolicyParams& params, const PolicyParams& ref,
                                          const TaskSpec& task) {
  EnumeratedTask e = enumerate_task(params, ref, task);
  double a = neg_adv_from_pass_rate(e.pass_mass, kAdvantageEpsilon);
  GradTensor grad(params.num_prompt_classes(), params.max_len(), params.vocab_size());
  for (std::size_t i = 0; i < e.outcomes.size(); ++i) {
    if (!e.incorrect[i]) continue;
    double pi = e.outcomes[i].probability;
    double c = e.confidence[i];
    // Term I (softplus(c) * grad pi) plus Term II (pi * sigmoid(c) * score);
    // grad pi = pi * score collapses both onto the score function.
    double weight = a * (softplus(c) * pi + pi * sigmoid(c));
    accumulate_score(params, task.prompt_class, e.outcomes[i].tokens, weight, grad);
  }
  return grad;
}

GradTensor residual_gradient(const PolicyParams& params, const PolicyParams& ref,
                             const TaskSpec& task) {
  EnumeratedTask e = enumerate_task(params, ref, task);
  double a = neg_adv_from_pass_rate(e.pass_mass, kAdvantageEpsilon);
  GradTensor grad(params.num_prompt_classes(), params.max_len(), params.vocab_size());
  for (std::size_t i = 0; i < e.outcomes.size(); ++i) {
    if (!e.incorrect[i]) continue;
    double weight = a * e.outcomes[i].probability * sigmoid(e.confidence[i]);
    accumulate_score(params, task.prompt_class, e.outcomes[i].tokens, weight, grad);
  }
  return grad;
}

double decomposition_defect(const DecompositionReport& report, bool drop_residual) {
  return max_abs_combination(report.delta_grad, report.reg_grad, report.residual,
                             report.alpha, drop_residual);
}

DecompositionReport verify_decomposition(const PolicyParams& params, const PolicyParams& ref,
                                         const TaskSpec& task, double alpha) {
  DecompositionReport report;
  report.alpha = alpha;
  report.delta_grad = ace_extra_gradient(params, ref, task, alpha);
  report.reg_grad = selective_regularizer_gradient(params, ref, task);
  report.residual = residual_gradient(params, ref, task);
  report.r_sel_value = selective_regularizer_value(params, ref, task);
  report.identity_defect = decomposition_defect(report, false);
  return report;
}

McGradient ace_extra_gradient_mc(const PolicyParams& params, const PolicyParams& ref,
                                 const TaskSpec& task, double alpha, long long num_samples,
                                 Rng& rng) {
  if (num_samples < 1) throw std::invalid_argument("ace_extra_gradient_mc: need samples >= 1");
  double a = negative_advantage_magnitude(params, task);

  GradTensor sum(params.num_prompt_classes(), params.max_len(), params.vocab_size());
  GradTensor sumsq(params.num_prompt_classes(), params.max_len(), params.vocab_size());
  std::vector<double> probs;
  for (long long n = 0; n < num_samples; ++n) {
    auto sample = sample_sequence(params, task.prompt_class, task.length, rng);
    if (verify(task, sample.tokens).reward == 1) continue;
    double lp_ref = sequence_logprob(ref, task.prompt_class, sample.tokens);
    double c = sample.logp_theta - lp_ref;
    double w = -alpha * a * softplus(c);
    for (int t = 0; t < task.length; ++t) {
      int prev = t == 0 ? params.bos() : sample.tokens[t - 1];
      conditional_probs_into(params, task.prompt_class, t, prev, probs);
      std::size_t base = sum.row_offset(task.prompt_class, t, prev);
      for (int v = 0; v < params.vocab_size(); ++v) {
        double one_hot = (v == sample.tokens[t]) ? 1.0 : 0.0;
        double value = w * (one_hot - probs[v]);
        sum.data[base + v] += value;
        sumsq.data[base + v] += value * value;
      }
    }
  }

  McGradient result{GradTensor(params.num_prompt_classes(), params.max_len(),
                               params.vocab_size()),
                    GradTensor(params.num_prompt_classes(), params.max_len(),
                               params.vocab_size()),
                    num_samples};
  double n = static_cast<double>(num_samples);
  for (std::size_t i = 0; i < sum.data.size(); ++i) {
    double mean = sum.data[i] / n;
    double var = std::max(0.0, sumsq.data[i] / n - mean * mean);
    result.mean.data[i] = mean;
    result.stderr_entries.data[i] = std::sqrt(var / n);
  }
  return result;
}

void GaussianModelConfig::validate() const {
  if (sigma <= 0.0) throw std::invalid_argument("gaussian model: sigma must be > 0");
  if (phi_intercept <= 0.0) throw std::invalid_argument("gaussian model: a must be > 0");
  if (phi_slope < 0.0) throw std::invalid_argument("gaussian model: b must be >= 0");
  if (alpha < 0.0) throw std::invalid_argument("gaussian model: alpha must be >= 0");
  if (n_samples < 1) throw std::invalid_argument("gaussian model: n_samples must be >= 1");
}

QualityReport gaussian_quality_report(const GaussianModelConfig& config) {
  config.validate();
  if (config.n_samples < 1000)
    throw std::invalid_argument(
        "gaussian_quality_report: fewer than 1000 samples is statistically meaningless");

  const double mu = config.mu, sigma = config.sigma;
  const double a = config.phi_intercept, b = config.phi_slope;
  const long long n = config.n_samples;

  std::vector<double> u(static_cast<std::size_t>(n));
  Rng rng(config.seed);
  for (double& v : u) v = rng.normal(mu, sigma);

  // Pass 1: raw moments.
  double s_u = 0, s_u2 = 0, s_phi = 0, s_phiu = 0, s_phiu2 = 0, s_wu = 0, s_w2u2 = 0;
  long long neg_phi = 0;
  for (double ui : u) {
    double phi = a + b * ui;
    double w = 1.0 + config.alpha * phi;
    s_u += ui;
    s_u2 += ui * ui;
    s_phi += phi;
    s_phiu += phi * ui;
    s_phiu2 += phi * ui * ui;
    s_wu += w * ui;
    s_w2u2 += w * w * ui * ui;
    if (phi < 0.0) ++neg_phi;
  }
  const double dn = static_cast<double>(n);
  const double m_u = s_u / dn, m_u2 = s_u2 / dn, m_phi = s_phi / dn;
  const double m_phiu = s_phiu / dn, m_phiu2 = s_phiu2 / dn;
  const double m_wu = s_wu / dn, m_w2u2 = s_w2u2 / dn;

  QualityReport r;
  r.n_samples = n;
  r.mean_u = m_u;
  r.var_u = m_u2 - m_u * m_u;
  r.mean_phi = m_phi;
  r.delta1_mc = m_phiu2 - m_u * m_phiu;
  r.cov_phi_u_mc = m_phiu - m_phi * m_u;
  r.cov_phi_u2_mc = m_phiu2 - m_phi * m_u2;
  r.q_std_mc = m_u * m_u / r.var_u;
  r.q_ace_mc = m_wu * m_wu / (m_w2u2 - m_wu * m_wu);
  r.gamma_mc = r.cov_phi_u_mc * m_u * (1.0 + r.q_std_mc) - r.q_std_mc * r.cov_phi_u2_mc;
  r.negative_phi_fraction = static_cast<double>(neg_phi) / dn;

  // Pass 2: influence-function standard errors (delta method around the
  // plug-in means).
  double v_d1 = 0, v_c = 0, v_c2 = 0;
  for (double ui : u) {
    double phi = a + b * ui;
    double h_d1 = (phi * ui * ui - m_phiu2) - m_u * (phi * ui - m_phiu) -
                  m_phiu * (ui - m_u);
    double h_c = (phi - m_phi) * (ui - m_u) - r.cov_phi_u_mc;
    double h_c2 = (phi - m_phi) * (ui * ui - m_u2) - r.cov_phi_u2_mc;
    v_d1 += h_d1 * h_d1;
    v_c += h_c * h_c;
    v_c2 += h_c2 * h_c2;
  }
  r.delta1_se = std::sqrt(v_d1 / dn / dn);
  r.cov_phi_u_se = std::sqrt(v_c / dn / dn);
  r.cov_phi_u2_se = std::sqrt(v_c2 / dn / dn);

  // Closed forms for the Gaussian linear model.
  const double s2 = sigma * sigma;
  r.delta1_analytic = 2.0 * b * mu * s2 + a * s2;
  r.cov_phi_u_analytic = b * s2;
  r.cov_phi_u2_analytic = 2.0 * b * mu * s2;
  r.c_mu_over_cov_ratio = r.cov_phi_u2_analytic != 0.0
                              ? r.cov_phi_u_analytic * mu / r.cov_phi_u2_analytic
                              : std::numeric_limits<double>::quiet_NaN();
  r.q_std_analytic = mu * mu / s2;
  const double m2 = mu * mu + s2;
  const double m3 = mu * mu * mu + 3.0 * mu * s2;
  const double m4 = mu * mu * mu * mu + 6.0 * mu * mu * s2 + 3.0 * s2 * s2;
  const double e_phiu = a * mu + b * m2;
  const double e_phiu2 = a * m2 + b * m3;
  const double e_phi2u2 = a * a * m2 + 2.0 * a * b * m3 + b * b * m4;
  const double al = config.alpha;
  const double e_wu = mu + al * e_phiu;
  const double e_w2u2 = m2 + 2.0 * al * e_phiu2 + al * al * e_phi2u2;
  r.q_ace_analytic = e_wu * e_wu / (e_w2u2 - e_wu * e_wu);
  r.gamma_analytic = b * mu * (s2 - mu * mu);
  return r;
}

QualityVerdict quality_improvement_check(const GaussianModelConfig& config) {
  if (config.alpha > 0.1)
    throw std::invalid_argument(
        "quality_improvement_check: first-order regime only (alpha <= 0.1)");
  QualityReport r = gaussian_quality_report(config);
  QualityVerdict v;
  v.q_std_mc = r.q_std_mc;
  v.q_ace_mc = r.q_ace_mc;
  v.q_std_analytic = r.q_std_analytic;
  v.improved = r.q_ace_mc > r.q_std_mc;
  v.hypothesis_held = r.q_std_analytic < 1.0 && config.phi_slope > 0.0;
  return v;
}

SecondMomentVerdict second_moment_check(const GaussianModelConfig& config, int score_dim) {
  config.validate();
  if (score_dim < 1) throw std::invalid_argument("second_moment_check: score_dim must be >= 1");

  const double a = config.phi_intercept, b = config.phi_slope;
  const double al = config.alpha;
  Rng rng(config.seed);

  double s_std = 0, s_ace = 0, s_inc = 0, s_inc2 = 0;
  for (long long i = 0; i < config.n_samples; ++i) {
    double u = rng.normal(config.mu, config.sigma);
    double phi = a + b * u;
    double norm2 = u * u;
    for (int d = 1; d < score_dim; ++d) {
      double z = rng.normal();
      norm2 += z * z;
    }
    double w = 1.0 + al * phi;
    double inc = (w * w - 1.0) * norm2;
    s_std += norm2;
    s_ace += w * w * norm2;
    s_inc += inc;
    s_inc2 += inc * inc;
  }
  const double dn = static_cast<double>(config.n_samples);

  SecondMomentVerdict v;
  v.score_dim = score_dim;
  v.moment_std_mc = s_std / dn;
  v.moment_ace_mc = s_ace / dn;
  v.increase_mc = s_inc / dn;
  double var_inc = std::max(0.0, s_inc2 / dn - v.increase_mc * v.increase_mc);
  v.increase_se = std::sqrt(var_inc / dn);
  v.increased = v.moment_ace_mc > v.moment_std_mc;

  const double mu = config.mu, s2 = config.sigma * config.sigma;
  const double m2 = mu * mu + s2;
  const double m3 = mu * mu * mu + 3.0 * mu * s2;
  const double m4 = mu * mu * mu * mu + 6.0 * mu * mu * s2 + 3.0 * s2 * s2;
  const double e_phi = a + b * mu;
  const double e_phi2 = a * a + 2.0 * a * b * mu + b * b * m2;
  const double e_phi_s2 = (a * m2 + b * m3) + (score_dim - 1) * e_phi;
  const double e_phi2_s2 =
      (a * a * m2 + 2.0 * a * b * m3 + b * b * m4) + (score_dim - 1) * e_phi2;
  v.increase_analytic = 2.0 * al * e_phi_s2 + al * al * e_phi2_s2;
  return v;
}

}  // namespace acelab
