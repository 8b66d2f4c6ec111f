#include <doctest.h>

#include <cmath>
#include <vector>

#include "acelab/advantage.hpp"
#include "acelab/policy.hpp"

using namespace acelab;

TEST_CASE("group stats: hand arithmetic") {
  std::vector<double> rewards = {1, 1, 0, 0};
  auto stats = group_stats(rewards);
  CHECK(stats.mean == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(stats.stddev == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(stats.pass_rate == stats.mean);
  CHECK(stats.group_size == 4);
}

TEST_CASE("group stats: all-equal rewards have zero std") {
  std::vector<double> rewards = {1, 1, 1};
  CHECK(group_stats(rewards).stddev == 0.0);
}

TEST_CASE("group stats: 3 of 8 correct") {
  std::vector<double> rewards = {1, 0, 1, 0, 0, 1, 0, 0};
  auto stats = group_stats(rewards);
  CHECK(stats.pass_rate == doctest::Approx(0.375).epsilon(1e-15));
  CHECK(stats.stddev == doctest::Approx(std::sqrt(0.375 * 0.625)).epsilon(1e-12));
  CHECK(stats.stddev == doctest::Approx(0.4841).epsilon(1e-3));
}

TEST_CASE("binary groups satisfy std = sqrt(p(1-p))") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    int g = 2 + rng.uniform_int(15);
    std::vector<double> rewards(g);
    for (double& r : rewards) r = rng.uniform() < 0.4 ? 1.0 : 0.0;
    auto stats = group_stats(rewards);
    double p = stats.pass_rate;
    CHECK(std::fabs(stats.stddev - std::sqrt(p * (1.0 - p))) < 1e-12);
  }
}

TEST_CASE("group stats rejects an empty group") {
  CHECK_THROWS_AS(group_stats(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("grpo advantages: balanced binary group") {
  std::vector<double> rewards = {1, 1, 0, 0};
  auto adv = grpo_advantages(rewards, group_stats(rewards), 1e-8);
  CHECK(adv[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(adv[2] == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(adv[0] == adv[1]);
  CHECK(adv[2] == adv[3]);
}

TEST_CASE("grpo advantages: degenerate all-incorrect group is zero") {
  std::vector<double> rewards = {0, 0, 0, 0};
  auto adv = grpo_advantages(rewards, group_stats(rewards), 1e-8);
  for (double a : adv) CHECK(a == 0.0);
}

TEST_CASE("grpo advantages: group centering is exact for dyadic means") {
  std::vector<double> rewards = {1, 1, 0, 0, 1, 0, 0, 0};
  auto stats = group_stats(rewards);
  auto adv = grpo_advantages(rewards, stats, 1e-8);
  double centered = 0.0;
  for (double a : adv) centered += a * (stats.stddev + 1e-8);
  CHECK(centered == 0.0);
}

TEST_CASE("confidence score arithmetic") {
  CHECK(confidence_score(-3.5, -3.5, 10, false) == 0.0);
  CHECK(confidence_score(-1.0, -5.0, 2, true) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(confidence_score(-1.0, -5.0, 2, false) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK_THROWS_AS(confidence_score(0, 0, 0, true), std::invalid_argument);
}

TEST_CASE("token-level sum equals sequence-level confidence difference") {
  Rng seed_rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    PolicyParams theta(1, 4, 3), ref(1, 4, 3);
    for (double& v : theta.logits.data) v = seed_rng.normal();
    for (double& v : ref.logits.data) v = seed_rng.normal();
    Rng rng(trial);
    auto sample = sample_sequence(theta, 0, 4, rng);
    auto lp_t = sequence_per_token_logprob(theta, 0, sample.tokens);
    auto lp_r = sequence_per_token_logprob(ref, 0, sample.tokens);
    double token_sum = 0.0;
    for (std::size_t i = 0; i < lp_t.size(); ++i) token_sum += lp_t[i] - lp_r[i];
    double seq_diff = sequence_logprob(theta, 0, sample.tokens) -
                      sequence_logprob(ref, 0, sample.tokens);
    CHECK(std::fabs(token_sum - seq_diff) < 1e-12);
  }
}

TEST_CASE("modulation reproduces the quoted constants") {
  CHECK(std::fabs(modulate(0.0, Modulation::softplus) - std::log(2.0)) < 1e-15);
  CHECK(modulate(0.0, Modulation::softplus) == doctest::Approx(0.69).epsilon(0.01));
  CHECK(std::fabs(modulate(2.0, Modulation::softplus) - 2.13) < 0.005);
  CHECK(std::fabs(modulate(-3.0, Modulation::softplus) - 0.05) < 0.005);
  CHECK(modulate(-3.0, Modulation::relu) == 0.0);
  CHECK(modulate(2.0, Modulation::relu) == 2.0);
}

TEST_CASE("softplus is overflow-safe and matches the naive form") {
  CHECK(softplus(1000.0) == doctest::Approx(1000.0).epsilon(1e-12));
  CHECK(std::isfinite(softplus(1000.0)));
  CHECK(softplus(-1000.0) == 0.0);
  for (double c = -30.0; c <= 600.0; c += 7.3) {
    double naive = std::log(1.0 + std::exp(c));
    CHECK(std::fabs(softplus(c) - naive) <= 1e-13 * std::max(1.0, std::fabs(naive)));
  }
}

TEST_CASE("softplus dominates relu by at most ln 2, with the max at zero") {
  double max_gap = 0.0;
  for (double c = -20.0; c <= 20.0; c += 0.01) {
    double gap = softplus(c) - modulate(c, Modulation::relu);
    CHECK(gap > 0.0);
    CHECK(gap <= std::log(2.0) + 1e-12);
    max_gap = std::max(max_gap, gap);
  }
  CHECK(max_gap == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("sigmoid is the derivative of softplus") {
  for (double c = -8.0; c <= 8.0; c += 0.37) {
    double h = 1e-6;
    double fd = (softplus(c + h) - softplus(c - h)) / (2 * h);
    CHECK(std::fabs(fd - sigmoid(c)) < 1e-8);
  }
}

TEST_CASE("ace advantages reproduce the worked penalty differentiation") {
  std::vector<double> grpo = {-1.0, -1.0, -1.0};
  std::vector<double> rewards = {0, 0, 0};
  std::vector<double> c = {2.0, 0.0, -3.0};
  auto ace = ace_advantages(grpo, rewards, c, 1.0, Modulation::softplus);
  CHECK(ace[0] == doctest::Approx(-3.13).epsilon(0.002));
  CHECK(ace[1] == doctest::Approx(-1.69).epsilon(0.002));
  CHECK(ace[2] == doctest::Approx(-1.0486).epsilon(0.001));
}

TEST_CASE("alpha = 0 returns the grpo advantages bit-for-bit") {
  std::vector<double> grpo = {-0.57735, 1.73205, -0.57735};
  std::vector<double> rewards = {0, 1, 0};
  std::vector<double> c = {1.3, -0.2, 0.0};
  for (auto kind : {Modulation::softplus, Modulation::relu}) {
    auto ace = ace_advantages(grpo, rewards, c, 0.0, kind);
    for (std::size_t i = 0; i < grpo.size(); ++i) CHECK(ace[i] == grpo[i]);
  }
}

TEST_CASE("correct rollouts keep their advantage untouched") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    int g = 4 + rng.uniform_int(8);
    std::vector<double> rewards(g), c(g);
    for (int i = 0; i < g; ++i) {
      rewards[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
      c[i] = rng.normal();
    }
    auto grpo = grpo_advantages(rewards, group_stats(rewards), 1e-8);
    double alpha = rng.uniform() * 3.0;
    for (auto kind : {Modulation::softplus, Modulation::relu}) {
      auto ace = ace_advantages(grpo, rewards, c, alpha, kind);
      for (int i = 0; i < g; ++i) {
        if (rewards[i] == 1.0) {
          CHECK(ace[i] == grpo[i]);
        } else {
          CHECK(std::fabs(ace[i]) >= std::fabs(grpo[i]));
        }
      }
    }
  }
}

TEST_CASE("penalty magnitude is strictly increasing in confidence under softplus") {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    double c1 = rng.normal() * 3.0;
    double c2 = c1 + 0.01 + rng.uniform() * 2.0;
    std::vector<double> grpo = {-0.8, -0.8};
    std::vector<double> rewards = {0, 0};
    std::vector<double> c = {c1, c2};
    double alpha = 0.1 + rng.uniform() * 2.0;
    auto soft = ace_advantages(grpo, rewards, c, alpha, Modulation::softplus);
    CHECK(std::fabs(soft[0]) < std::fabs(soft[1]));
    auto relu = ace_advantages(grpo, rewards, c, alpha, Modulation::relu);
    if (c2 <= 0.0) {
      CHECK(std::fabs(relu[0]) == std::fabs(relu[1]));  // both in the zero region
    } else {
      CHECK(std::fabs(relu[0]) <= std::fabs(relu[1]));
    }
  }
}

TEST_CASE("sigmoid-to-softplus ratio stays inside the quoted band on [1, 3]") {
  for (double c = 1.0; c <= 3.0 + 1e-9; c += 0.1) {
    double ratio = sigmoid(c) / softplus(c);
    CHECK(ratio >= 0.31);
    CHECK(ratio <= 0.56);
  }
}

TEST_CASE("regime classification") {
  CHECK(regime_of(2.0, 0.05) == ConfidenceRegime::overconfident);
  CHECK(regime_of(0.0, 0.0) == ConfidenceRegime::exploratory);
  CHECK(regime_of(-3.0, 0.05) == ConfidenceRegime::self_correcting);
  CHECK(regime_of(0.04, 0.05) == ConfidenceRegime::exploratory);
  CHECK(regime_of(-0.04, 0.05) == ConfidenceRegime::exploratory);
  CHECK_THROWS_AS(regime_of(0.0, -1.0), std::invalid_argument);
}

TEST_CASE("mismatched vector lengths are rejected") {
  std::vector<double> grpo = {-1.0};
  std::vector<double> rewards = {0, 0};
  std::vector<double> c = {0.0};
  CHECK_THROWS_AS(ace_advantages(grpo, rewards, c, 1.0, Modulation::softplus),
                  std::invalid_argument);
}
