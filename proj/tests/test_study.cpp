#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "longsim/rng.hpp"
#include "longsim/study.hpp"
#include "model_fixture.hpp"

using namespace longsim;
using longsim::testing::small_model;

namespace {

StudyConfig small_study(std::size_t n = 400, std::size_t m = 20) {
  StudyConfig c;
  c.covariates = small_model();
  c.outcome.event = WeibullDist{1.2, 8.0};
  c.outcome.censor_target = 0.3;
  c.truth = {{"drug", "other", "age", "male"}, {0.5, 0.0, 0.02, 0.15}};
  c.subjects = n;
  c.intervals = m;
  return c;
}

FitResult fake_fit(std::vector<double> z, bool converged = true) {
  FitResult f;
  f.beta_hat = Eigen::Map<Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
  f.se = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(z.size()));
  f.converged = converged;
  return f;
}

}  // namespace

TEST(Accuracy, RowArithmetic) {
  const std::vector<double> est = {0.4, 0.6}, se = {0.1, 0.05};
  const AccuracyRow r = accuracy_row("x", 0.5, est, se);
  EXPECT_NEAR(r.mean_estimate, 0.5, 1e-15);
  EXPECT_NEAR(r.bias, 0.0, 1e-15);
  EXPECT_NEAR(r.sd_estimate, std::sqrt(0.02), 1e-15);
  EXPECT_NEAR(r.mse, 0.01, 1e-15);
  EXPECT_NEAR(r.avg_se, 0.075, 1e-15);
  EXPECT_NEAR(r.std_bias, 0.0, 1e-12);
  // 0.1 <= 1.96 * 0.1 but 0.1 > 1.96 * 0.05
  EXPECT_DOUBLE_EQ(r.coverage, 0.5);
  EXPECT_EQ(r.used, 2u);
}

TEST(Accuracy, StandardizedBiasIsPercentOfSd) {
  const std::vector<double> est = {1.0, 2.0, 3.0}, se = {1, 1, 1};
  const AccuracyRow r = accuracy_row("x", 1.5, est, se);
  EXPECT_NEAR(r.bias, 0.5, 1e-15);
  EXPECT_NEAR(r.sd_estimate, 1.0, 1e-15);
  EXPECT_NEAR(r.std_bias, 50.0, 1e-12);
  EXPECT_NEAR(r.mse, (0.25 + 0.25 + 2.25) / 3, 1e-15);
}

TEST(Accuracy, EmptyIsNan) {
  const AccuracyRow r = accuracy_row("x", 1.0, {}, {});
  EXPECT_TRUE(std::isnan(r.bias));
  EXPECT_EQ(r.used, 0u);
}

TEST(Accuracy, TableSkipsUnconverged) {
  StudyConfig c = small_study();
  c.truth = {{"drug", "age"}, {0.5, 0.0}};
  std::vector<ReplicationResult> rs(3);
  rs[0].fitted = rs[1].fitted = rs[2].fitted = true;
  rs[0].fit = fake_fit({0.4, 0.1});
  rs[1].fit = fake_fit({0.6, -0.1});
  rs[2].fit = fake_fit({9.0, 9.0}, false);
  const auto rows = accuracy_table(rs, c);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].variable, "drug");
  EXPECT_EQ(rows[0].used, 2u);
  EXPECT_NEAR(rows[0].mean_estimate, 0.5, 1e-15);
  EXPECT_NEAR(rows[1].truth, 0.0, 0.0);
  const std::string csv = accuracy_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "variable,truth,mean_estimate,bias,avg_se,sd_estimate,std_bias,mse,coverage,replications");
}

TEST(Power, HandCountedSummary) {
  StudyConfig c = small_study();
  c.truth = {{"drug", "other", "age"}, {0.5, 0.0, 0.0}};
  std::vector<ReplicationResult> rs(3);
  for (auto& r : rs) r.fitted = true;
  rs[0].fit = fake_fit({3.0, 0.5, 0.0});
  rs[1].fit = fake_fit({1.0, 2.5, 0.0});
  rs[2].fit = fake_fit({5.0, 5.0, 5.0}, false);
  const std::vector<std::string> drugs = {"drug", "other"};
  const PowerRow p = power_summary(rs, c, drugs, 0.05);
  EXPECT_EQ(p.converged, 2u);
  ASSERT_EQ(p.power.size(), 2u);
  EXPECT_DOUBLE_EQ(p.power[0], 0.5);
  EXPECT_DOUBLE_EQ(p.power[1], 0.5);
  EXPECT_DOUBLE_EQ(p.p_all, 0.5);
  EXPECT_DOUBLE_EQ(p.p_ge1, 0.5);
  EXPECT_DOUBLE_EQ(p.mean_detected, 0.5);
  // one rejection among two null terms over two replications
  EXPECT_DOUBLE_EQ(p.fpr, 0.25);
  ASSERT_EQ(p.detected.size(), 2u);
  EXPECT_DOUBLE_EQ(p.detected[0], 0.5);
  EXPECT_DOUBLE_EQ(p.detected[1], 0.5);
  EXPECT_NEAR(p.hazard_ratios[0], std::exp(0.5), 1e-15);
  EXPECT_DOUBLE_EQ(p.prevalences[0], 0.69);
}

TEST(Power, AlphaControlsThreshold) {
  StudyConfig c = small_study();
  c.truth = {{"drug"}, {0.5}};
  std::vector<ReplicationResult> rs(1);
  rs[0].fitted = true;
  rs[0].fit = fake_fit({2.5});
  const std::vector<std::string> drugs = {"drug"};
  EXPECT_DOUBLE_EQ(power_summary(rs, c, drugs, 0.05).power[0], 1.0);
  EXPECT_DOUBLE_EQ(power_summary(rs, c, drugs, 0.003).power[0], 0.0);
  EXPECT_TRUE(std::isnan(power_summary(rs, c, drugs, 0.05).fpr));
  const std::vector<std::string> bad = {"bmi"};
  EXPECT_THROW(power_summary(rs, c, bad, 0.05), std::invalid_argument);
}

TEST(Scenarios, PermutationsCoverEveryPairing) {
  const StudyConfig c = small_study();
  const std::vector<std::string> drugs = {"drug", "other", "male"};
  const std::vector<double> hr = {1.2, 1.5, 2.0}, prev = {0.1, 0.2, 0.4};
  const auto scs = permute_effects(c, drugs, hr, prev);
  ASSERT_EQ(scs.size(), 6u);
  std::set<std::vector<double>> seen;
  for (const auto& s : scs) {
    seen.insert(s.hazard_ratios);
    EXPECT_EQ(s.prevalences, prev);
    for (std::size_t d = 0; d < drugs.size(); ++d) {
      EXPECT_NEAR(s.config.truth_of(drugs[d]), std::log(s.hazard_ratios[d]), 1e-15);
      const auto v = s.config.covariates->index_of(drugs[d]);
      EXPECT_DOUBLE_EQ(*s.config.covariates->variables()[v].prevalence, prev[d]);
    }
    EXPECT_DOUBLE_EQ(s.config.truth_of("age"), 0.02);
  }
  EXPECT_EQ(seen.size(), 6u);
  EXPECT_EQ(scs.front().hazard_ratios, hr);
  // base model is untouched
  EXPECT_DOUBLE_EQ(*c.covariates->variables()[c.covariates->index_of("drug")].prevalence, 0.69);
}

TEST(Scenarios, RejectsBadInput) {
  const StudyConfig c = small_study();
  const std::vector<std::string> nine(9, "drug");
  const std::vector<double> nine_hr(9, 1.5), nine_prev(9, 0.2);
  EXPECT_THROW(permute_effects(c, nine, nine_hr, nine_prev), std::invalid_argument);
  const std::vector<std::string> two = {"drug", "other"};
  const std::vector<double> one = {1.5};
  EXPECT_THROW(permute_effects(c, two, one, one), std::invalid_argument);
  const std::vector<std::string> cont = {"age"};
  const std::vector<double> hr = {1.5}, prev = {0.2};
  EXPECT_THROW(make_scenario(c, cont, hr, prev), std::invalid_argument);
  const std::vector<double> neg = {-1.0};
  const std::vector<std::string> d1 = {"drug"};
  EXPECT_THROW(make_scenario(c, d1, neg, prev), std::invalid_argument);
}

TEST(Seeds, ReplicationSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::size_t s = 0; s < 20; ++s)
    for (std::size_t r = 0; r < 200; ++r) seen.insert(replication_seed(11, s, r));
  EXPECT_EQ(seen.size(), 4000u);
  EXPECT_EQ(replication_seed(11, 2, 3), mix_seed(11, 2, 3));
  EXPECT_NE(replication_seed(11, 0, 0), replication_seed(12, 0, 0));
}

TEST(Marginals, TargetsFollowModel) {
  const auto model = small_model();
  const std::size_t n = 1000, m = 30;
  const auto targets = marginal_targets(*model, n, m);
  auto find = [&](const std::string& v, const std::string& meas) {
    for (const auto& t : targets)
      if (t.variable == v && t.measure == meas) return t.target;
    ADD_FAILURE() << v << " " << meas;
    return 0.0;
  };
  EXPECT_DOUBLE_EQ(find("male", "prevalence"), 0.6);
  EXPECT_DOUBLE_EQ(find("drug", "prevalence"), 0.69);
  EXPECT_NEAR(find("drug", "record_fraction"), 0.69 * 0.6, 1e-15);
  EXPECT_DOUBLE_EQ(find("drug_prop", "mean_exposed"), 0.6);
  EXPECT_DOUBLE_EQ(find("age", "mean"), 46.0);
  const auto& vars = model->variables();
  const std::size_t age = model->index_of("age"), bmi = model->index_of("bmi");
  EXPECT_NEAR(find("age", "sd"), model->across_sd(age, n), 1e-12);
  const double sa = model->across_sd(bmi, n), sw = vars[bmi].within_sd();
  const double mean_t2 = (m + 1.0) * (2.0 * m + 1.0) / 6.0;
  EXPECT_NEAR(find("bmi", "sd"), std::sqrt(sa * sa + sw * sw + 0.02 * 0.02 * mean_t2), 1e-12);

  const auto probs = categorical_probabilities(model->categoricals()[0], std::vector<double>{46.0});
  EXPECT_NEAR(find("group.a", "proportion"), probs[0], 1e-15);
  EXPECT_NEAR(find("group.c", "proportion"), probs[2], 1e-15);
}

TEST(Marginals, GeneratedCohortMatchesTargets) {
  const auto model = small_model();
  const std::size_t n = 4000, m = 30;
  const auto targets = marginal_targets(*model, n, m);
  const CohortTable cohort = gen_cohort(*model, n, m, StreamSeed{99, 0});
  const auto got = summarize_marginals(cohort, *model);
  ASSERT_EQ(got.size(), targets.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double tol = targets[i].measure == "mean" || targets[i].measure == "sd" ? 0.02 * targets[i].target : 0.03;
    EXPECT_NEAR(got[i], targets[i].target, tol) << targets[i].variable << " " << targets[i].measure;
  }
}

TEST(Study, RunsAndRecoversEffects) {
  const StudyConfig c = small_study(600, 20);
  StudyOptions o;
  o.replications = 6;
  o.master_seed = 5;
  const auto rs = run_study(c, o);
  ASSERT_EQ(rs.size(), 6u);
  EXPECT_EQ(converged_count(rs), 6u);
  double drug = 0.0;
  for (const auto& r : rs) {
    EXPECT_TRUE(r.error.empty()) << r.error;
    EXPECT_EQ(r.event_histogram.size(), 20u);
    std::size_t drawn = 0;
    for (auto h : r.event_histogram) drawn += h;
    EXPECT_EQ(drawn, 600u);
    EXPECT_GT(r.events, 300u);
    EXPECT_LT(r.events, 600u);
    drug += r.fit.beta_hat(0) / 6.0;
  }
  EXPECT_NEAR(drug, 0.5, 0.15);
  const auto report = marginal_report(rs, marginal_targets(*c.covariates, c.subjects, c.intervals));
  EXPECT_FALSE(report.empty());
  const std::string csv = marginals_csv(report);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "variable,measure,target,average,distance");
}

TEST(Study, IndependentOfWorkerCount) {
  const StudyConfig c = small_study(200, 15);
  StudyOptions o;
  o.replications = 5;
  o.master_seed = 17;
  o.workers = 1;
  const auto a = run_study(c, o);
  o.workers = 3;
  const auto b = run_study(c, o);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].seed, b[i].seed);
    EXPECT_EQ(a[i].event_histogram, b[i].event_histogram);
    EXPECT_EQ(a[i].marginals, b[i].marginals);
    ASSERT_EQ(a[i].fitted, b[i].fitted);
    if (a[i].fitted) EXPECT_EQ(a[i].fit.beta_hat, b[i].fit.beta_hat);
  }
}

TEST(Study, ReplicationsDiffer) {
  const StudyConfig c = small_study(200, 15);
  StudyOptions o;
  o.replications = 2;
  const auto rs = run_study(c, o);
  EXPECT_NE(rs[0].event_histogram, rs[1].event_histogram);
}

TEST(Study, PmfLengthMustMatchGrid) {
  OutcomeSpec s;
  s.event = EmpiricalPmf{{1, 2, 3}};
  s.censor_target = 0.6;
  EXPECT_THROW(resolve_outcome(s, 4, 1), ConfigError);
  EXPECT_NO_THROW(resolve_outcome(s, 3, 1));
}
