#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "longsim/covgen.hpp"
#include "model_fixture.hpp"

using namespace longsim;
using namespace longsim::testing;

namespace {

std::size_t col(const CohortTable& t, const char* name) {
  const std::size_t c = t.column_index(name);
  EXPECT_NE(c, static_cast<std::size_t>(-1)) << name;
  return c;
}

}  // namespace

TEST(CovariateModel, ResolvesIndices) {
  const auto m = small_model();
  EXPECT_EQ(m->across_vars().size(), 7u);
  EXPECT_EQ(m->within_vars().size(), 4u);
  EXPECT_EQ(m->cohort_vars().size(), 8u);  // every variable except the id
  EXPECT_EQ(m->partner(m->index_of("drug")), m->index_of("drug_prop"));
  EXPECT_EQ(m->partner(m->index_of("age")), CovariateModel::npos);
  // proportion SD defaults to sqrt(mu (1 - mu) / N)
  EXPECT_NEAR(m->across_sd(m->index_of("other_prop"), 100), std::sqrt(0.4 * 0.6 / 100), 1e-15);
  EXPECT_EQ(m->across_sd(m->index_of("drug_prop"), 100), 0.15);
}

TEST(CovariateModel, RejectsMissingProportionPartner) {
  auto p = small_parts();
  p.vars[5].name = "drug_share";
  EXPECT_THROW(CovariateModel(p.vars, p.corr, p.cats), ConfigError);
}

TEST(CovariateModel, RejectsDuplicateAndBadNames) {
  auto p = small_parts();
  p.vars[2].name = "male";
  EXPECT_THROW(CovariateModel(p.vars, p.corr, p.cats), ConfigError);
  p = small_parts();
  p.vars[2].name = "a ge";
  EXPECT_THROW(CovariateModel(p.vars, p.corr, p.cats), ConfigError);
}

TEST(CovariateModel, RejectsBadMatrices) {
  auto p = small_parts();
  p.corr.sigma_a(0, 1) = 0.5;  // asymmetric
  EXPECT_THROW(CovariateModel(p.vars, p.corr, p.cats), ConfigError);
  p = small_parts();
  p.corr.sigma_a(2, 2) = 0.9;
  EXPECT_THROW(CovariateModel(p.vars, p.corr, p.cats), ConfigError);
  p = small_parts();
  p.corr.sigma_a(1, 2) = p.corr.sigma_a(2, 1) = 1.2;
  EXPECT_THROW(CovariateModel(p.vars, p.corr, p.cats), ConfigError);
  p = small_parts();
  p.corr.across_names.pop_back();
  p.corr.sigma_a = Eigen::MatrixXd::Identity(6, 6);
  EXPECT_THROW(CovariateModel(p.vars, p.corr, p.cats), ConfigError);
}

TEST(CovariateModel, RejectsBadFields) {
  auto p = small_parts();
  p.vars[1].prevalence = 1.5;
  EXPECT_THROW(CovariateModel(p.vars, p.corr, p.cats), ConfigError);
  p = small_parts();
  p.vars[3].slope_sd.reset();
  EXPECT_THROW(CovariateModel(p.vars, p.corr, p.cats), ConfigError);
  p = small_parts();
  p.cats[0].coefficients.pop_back();
  EXPECT_THROW(CovariateModel(p.vars, p.corr, p.cats), ConfigError);
}

TEST(CovariateModel, AcrossMatrixReorderedByName) {
  auto p = small_parts();
  // Reverse the matrix order; the model must map entries by name.
  std::vector<std::string> names(p.corr.across_names.rbegin(), p.corr.across_names.rend());
  Eigen::MatrixXd rev = p.corr.sigma_a.reverse();
  p.corr.across_names = names;
  p.corr.sigma_a = rev;
  const CovariateModel reordered(p.vars, p.corr, p.cats);
  const auto base = small_model();
  EXPECT_LT((reordered.across_latent().latent - base->across_latent().latent).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CovariateModel, InadmissibleCorrelationIsClampedAndLogged) {
  auto p = small_parts();
  // male (0.6) and drug (0.69): -0.95 is below the Frechet lower bound
  p.corr.sigma_a(0, 3) = p.corr.sigma_a(3, 0) = -0.95;
  Diagnostics d;
  const CovariateModel m(p.vars, p.corr, p.cats, &d);
  ASSERT_FALSE(m.correlations().repair_log.empty());
  EXPECT_NEAR(m.correlations().repair_log[0].applied, max_corr_bin_bin(0.6, 0.69).lo, 1e-12);
  EXPECT_GE(d.count(), 1u);
}

TEST(GenCohort, ShapeAndStaticColumns) {
  const auto m = small_model();
  const CohortTable t = gen_cohort(*m, 200, 12, StreamSeed{5, 0});
  EXPECT_EQ(t.rows(), 200u * 12u);
  EXPECT_EQ(t.width(), 8u);
  for (const char* name : {"male", "age", "group", "drug_prop"}) {
    const std::size_t c = col(t, name);
    for (std::size_t s = 0; s < t.subjects; ++s)
      for (std::size_t tt = 2; tt <= t.intervals; ++tt) ASSERT_EQ(t.at(s, tt, c), t.at(s, 1, c)) << name;
  }
  const std::size_t drug = col(t, "drug"), prop = col(t, "drug_prop"), male = col(t, "male");
  for (std::size_t s = 0; s < t.subjects; ++s) {
    const double v = t.at(s, 1, male);
    EXPECT_TRUE(v == 0.0 || v == 1.0);
    const double p = t.at(s, 1, prop);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
    for (std::size_t tt = 1; tt <= t.intervals; ++tt) {
      const double x = t.at(s, tt, drug);
      EXPECT_TRUE(x == 0.0 || x == 1.0);
      if (p == 0.0) EXPECT_EQ(x, 0.0);  // never-users are never on the drug
    }
  }
}

TEST(GenCohort, DeterministicAcrossWorkers) {
  const auto m = small_model();
  const CohortTable a = gen_cohort(*m, 300, 8, StreamSeed{77, 3}, 1);
  const CohortTable b = gen_cohort(*m, 300, 8, StreamSeed{77, 3}, 4);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(cohort_csv(a), cohort_csv(b));
  const CohortTable c = gen_cohort(*m, 300, 8, StreamSeed{77, 4}, 1);
  EXPECT_NE(a.values, c.values);
}

TEST(GenCohort, SubjectsIndependentOfCohortSize) {
  // A subject's streams depend only on its coordinates, so a prefix of a
  // larger cohort matches a smaller one exactly when the across SDs do.
  const auto m = small_model();
  const CohortTable small = gen_cohort(*m, 50, 6, StreamSeed{11, 0});
  const CohortTable large = gen_cohort(*m, 80, 6, StreamSeed{11, 0});
  const std::size_t age = col(small, "age");
  for (std::size_t s = 0; s < 50; ++s) EXPECT_EQ(small.at(s, 1, age), large.at(s, 1, age));
}

TEST(GenCohort, MarginalsMatchSpecification) {
  const auto m = small_model();
  const std::size_t n = 20000, steps = 10;
  const CohortTable t = gen_cohort(*m, n, steps, StreamSeed{2024, 0});
  const std::size_t male = col(t, "male"), age = col(t, "age"), drug = col(t, "drug"), prop = col(t, "drug_prop");
  double males = 0, ages = 0, ever = 0, on = 0, prop_sum = 0, exposed = 0;
  for (std::size_t s = 0; s < n; ++s) {
    males += t.at(s, 1, male);
    ages += t.at(s, 1, age);
    bool any = false;
    for (std::size_t tt = 1; tt <= steps; ++tt) {
      on += t.at(s, tt, drug);
      any = any || t.at(s, tt, drug) != 0.0;
    }
    if (t.at(s, 1, prop) > 0) {
      prop_sum += t.at(s, 1, prop);
      ++exposed;
    }
    ever += any;
  }
  EXPECT_NEAR(males / n, 0.6, 0.015);
  EXPECT_NEAR(ages / n, 46.0, 0.3);
  EXPECT_NEAR(exposed / n, 0.69, 0.015);
  EXPECT_NEAR(prop_sum / exposed, 0.6, 0.01);
  // share of all records on the drug: prevalence times mean proportion
  EXPECT_NEAR(on / (n * steps), 0.69 * 0.6, 0.01);
  // with 10 intervals nearly every exposed subject shows at least one record
  EXPECT_LE(ever / n, 0.69 + 0.015);
}

TEST(GenCohort, TimeFunctionTrend) {
  // Pooled variance of a time_function variable: across + within + slope part.
  const auto m = small_model();
  const std::size_t n = 4000, steps = 30;
  const CohortTable t = gen_cohort(*m, n, steps, StreamSeed{8, 0});
  const std::size_t bmi = col(t, "bmi");
  double s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const double x = t.values[i * t.width() + bmi];
    s1 += x;
    s2 += x * x;
  }
  const double N = static_cast<double>(t.rows());
  const double var = s2 / N - (s1 / N) * (s1 / N);
  const double want = 16.0 + 16.0 / 9.0 + 0.02 * 0.02 * (steps + 1) * (2.0 * steps + 1) / 6.0;
  EXPECT_NEAR(s1 / N, 25.0, 0.2);
  EXPECT_NEAR(var, want, 0.05 * want);
}

TEST(Housekeep, ZeroesClampsAndShares) {
  const auto m = small_model();
  auto profiles = gen_profiles(*m, 500, StreamSeed{3, 0});
  const std::size_t drug = m->index_of("drug"), prop = m->index_of("drug_prop");
  // force out-of-range proportions on two exposed subjects
  std::size_t forced = 0;
  for (auto& p : profiles)
    if (p.indicators[drug] && forced < 2) p.means[prop] = forced++ == 0 ? -0.2 : 1.3;
  Diagnostics d;
  const auto hk = housekeep(profiles, *m, &d, 2);
  EXPECT_EQ(d.count(), 1u);
  std::set<const WithinStructure*> distinct;
  std::size_t unexposed_both = 0;
  const WithinStructure* shared = nullptr;
  const std::size_t other = m->index_of("other");
  for (const auto& p : hk) {
    EXPECT_GE(p.means[prop], 0.0);
    EXPECT_LE(p.means[prop], 1.0);
    if (!p.indicators[drug]) EXPECT_EQ(p.means[prop], 0.0);
    ASSERT_TRUE(p.within);
    distinct.insert(p.within.get());
    if (!p.indicators[drug] && !p.indicators[other]) {
      ++unexposed_both;
      if (!shared) shared = p.within.get();
      EXPECT_EQ(p.within.get(), shared);  // identical proportion vectors share one structure
    }
  }
  EXPECT_GT(unexposed_both, 10u);
  EXPECT_LT(distinct.size(), hk.size());
}

TEST(Housekeep, DegenerateProportionZeroesWithinCorrelation) {
  const auto m = small_model();
  auto profiles = gen_profiles(*m, 200, StreamSeed{4, 0});
  const auto hk = housekeep(profiles, *m);
  const std::size_t drug = m->index_of("drug");
  for (const auto& p : hk)
    if (!p.indicators[drug]) {
      // within columns: age, bmi, drug, other
      EXPECT_EQ(p.within->latent(2, 3), 0.0);
    }
}

TEST(ExpandSubject, WithinCorrelationReproduced) {
  const auto m = small_model();
  auto profiles = gen_profiles(*m, 400, StreamSeed{6, 0});
  auto hk = housekeep(profiles, *m);
  const std::size_t drug = m->index_of("drug"), other = m->index_of("other");
  const std::size_t dprop = m->index_of("drug_prop"), oprop = m->index_of("other_prop");
  const SubjectProfile* chosen = nullptr;
  for (const auto& p : hk)
    if (p.indicators[drug] && p.indicators[other] && p.means[dprop] > 0.2 && p.means[dprop] < 0.8 &&
        p.means[oprop] > 0.2 && p.means[oprop] < 0.8) {
      chosen = &p;
      break;
    }
  ASSERT_NE(chosen, nullptr);
  const std::size_t steps = 100000;
  RandomStream rng(1, Purpose::within, 0, 0);
  const auto block = expand_subject(*chosen, *m, steps, rng);
  const std::size_t w = m->cohort_vars().size();
  const std::size_t cd = m->cohort_column(drug), co = m->cohort_column(other);
  double a = 0, b = 0, ab = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    a += block[t * w + cd];
    b += block[t * w + co];
    ab += block[t * w + cd] * block[t * w + co];
  }
  a /= steps;
  b /= steps;
  ab /= steps;
  EXPECT_NEAR(a, chosen->means[dprop], 0.01);
  EXPECT_NEAR(b, chosen->means[oprop], 0.01);
  EXPECT_NEAR((ab - a * b) / std::sqrt(a * (1 - a) * b * (1 - b)), 0.25, 0.02);
}

TEST(Categorical, SoftmaxProbabilities) {
  CategoricalSpec spec;
  spec.name = "race";
  spec.levels = {"white", "black", "other"};
  spec.coefficients = {{std::log(0.424 / 0.338)}, {std::log(0.012 / 0.338)}};
  const auto p = categorical_probabilities(spec, {});
  const double total = 0.338 + 0.424 + 0.012;
  EXPECT_NEAR(p[0], 0.338 / total, 1e-14);
  EXPECT_NEAR(p[1], 0.424 / total, 1e-14);
  EXPECT_NEAR(p[2], 0.012 / total, 1e-14);
  // large logits stay finite
  spec.coefficients = {{800.0}, {-800.0}};
  const auto q = categorical_probabilities(spec, {});
  EXPECT_NEAR(q[1], 1.0, 1e-15);
}

TEST(Categorical, MarginalsWithResidualLevel) {
  // Intercept-only model whose levels cover all of the mass reproduces the
  // requested marginals.
  CategoricalSpec spec;
  spec.name = "race";
  spec.levels = {"white", "black", "other", "unknown"};
  spec.coefficients = {{std::log(0.424 / 0.338)}, {std::log(0.012 / 0.338)}, {std::log(0.226 / 0.338)}};
  const std::size_t n = 100000;
  const auto level = gen_categorical(spec, {}, n, StreamSeed{13, 0});
  std::vector<double> freq(4, 0.0);
  for (auto l : level) freq[l] += 1.0 / n;
  EXPECT_NEAR(freq[0], 0.338, 0.01);
  EXPECT_NEAR(freq[1], 0.424, 0.01);
  EXPECT_NEAR(freq[2], 0.012, 0.01);
  EXPECT_NEAR(freq[3], 0.226, 0.01);
}

TEST(Categorical, DependsOnBaseline) {
  const auto m = small_model();
  const CohortTable t = gen_cohort(*m, 20000, 2, StreamSeed{17, 0});
  const std::size_t g = col(t, "group"), age = col(t, "age");
  double old_b = 0, old_n = 0, young_b = 0, young_n = 0;
  for (std::size_t s = 0; s < t.subjects; ++s) {
    const bool old = t.at(s, 1, age) > 46;
    (old ? old_n : young_n) += 1;
    if (t.at(s, 1, g) == 1.0) (old ? old_b : young_b) += 1;
  }
  EXPECT_GT(old_b / old_n, young_b / young_n + 0.03);
  EXPECT_EQ(t.levels[g], (std::vector<std::string>{"a", "b", "c"}));
}

TEST(CohortCsv, HeaderAndLevels) {
  const auto m = small_model();
  const CohortTable t = gen_cohort(*m, 2, 3, StreamSeed{1, 0});
  const std::string text = cohort_csv(t);
  EXPECT_EQ(text.substr(0, text.find('\n')), "subject_id,t,male,age,bmi,drug,drug_prop,other,other_prop,group");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
  EXPECT_NE(text.find("\n2,3,"), std::string::npos);
}
