#pragma once

// Longitudinal covariate generation in three stages:
//   1. one row of subject-level random effects per subject (means, slopes,
//      binary indicators) drawn jointly from the across-subject structure;
//   2. m interval-level observations per subject drawn around those effects
//      from the within-subject structure;
//   3. a static categorical variable drawn from a multinomial-logit model of
//      each subject's first-interval covariates.
//
// A drug is described by two variables: a binary_time_varying variable whose
// prevalence is the probability of ever being exposed, and a proportion_mean
// variable named "<drug>_prop" holding the share of intervals on the drug
// among the exposed.

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "longsim/corrspec.hpp"
#include "longsim/diagnostics.hpp"
#include "longsim/rng.hpp"

namespace longsim {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CategoricalSpec {
  std::string name;
  std::vector<std::string> levels;      // levels[0] is the reference
  std::vector<std::string> covariates;  // baseline covariates, by variable name
  // One vector per non-reference level: intercept followed by one weight per
  // covariate, on the log-odds-versus-reference scale.
  std::vector<std::vector<double>> coefficients;
};

inline constexpr std::string_view kProportionSuffix = "_prop";

// Validated covariate configuration with every name resolved to an index.
class CovariateModel {
 public:
  CovariateModel(std::vector<VariableSpec> variables, CorrelationSpec correlations,
                 std::vector<CategoricalSpec> categoricals, Diagnostics* diag = nullptr);

  const std::vector<VariableSpec>& variables() const { return variables_; }
  const std::vector<CategoricalSpec>& categoricals() const { return categoricals_; }
  const CorrelationSpec& correlations() const { return correlations_; }

  // Variable indices of the across-subject (step 1) and within-subject
  // (step 2) joint draws, in matrix order.
  const std::vector<std::size_t>& across_vars() const { return across_vars_; }
  const std::vector<std::size_t>& within_vars() const { return within_vars_; }

  // Latent across-subject matrix after bound clamping and PD repair.
  const LatentCorrelation& across_latent() const { return across_latent_; }
  // Within-subject Pearson targets restricted to within_vars().
  const Eigen::MatrixXd& within_target() const { return within_target_; }

  // For a binary_time_varying variable, the index of its proportion_mean
  // partner; npos otherwise.
  std::size_t partner(std::size_t var) const { return partner_[var]; }
  std::size_t index_of(std::string_view name) const;

  // Cohort columns: every non-id variable in declaration order.
  const std::vector<std::size_t>& cohort_vars() const { return cohort_vars_; }
  // Cohort column of a variable; npos for the id variable.
  std::size_t cohort_column(std::size_t var) const { return cohort_column_[var]; }

  // Across-subject SD used in step 1 for a cohort of n subjects.
  double across_sd(std::size_t var, std::size_t n) const;

  // Copy with the given binary prevalences replaced (and the latent across
  // structure rebuilt).
  CovariateModel with_prevalence(std::string_view var, double prevalence, Diagnostics* diag = nullptr) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  void resolve(Diagnostics* diag);

  std::vector<VariableSpec> variables_;
  CorrelationSpec correlations_;
  std::vector<CategoricalSpec> categoricals_;
  std::vector<std::size_t> across_vars_;
  std::vector<std::size_t> within_vars_;
  std::vector<std::size_t> cohort_vars_;
  std::vector<std::size_t> cohort_column_;
  std::vector<std::size_t> partner_;
  LatentCorrelation across_latent_;
  Eigen::MatrixXd within_target_;
};

// Per-subject within-subject structure after housekeeping.
struct WithinStructure {
  Eigen::MatrixXd latent;           // repaired latent correlation
  std::vector<double> prevalence;   // per within column (binary columns only)
  std::size_t adjusted_entries = 0; // entries zeroed, clamped or PD-repaired
  std::shared_ptr<const JointSampler> sampler;
};

struct SubjectProfile {
  std::uint64_t subject_id = 0;
  // Indexed by variable. means: normal, time_function and proportion_mean
  // variables; slopes: time_function; indicators: binary kinds. Entries for
  // inapplicable kinds are 0.
  std::vector<double> means;
  std::vector<double> slopes;
  std::vector<std::uint8_t> indicators;
  std::shared_ptr<const WithinStructure> within;  // set by housekeep
};

struct CohortTable {
  std::vector<std::string> columns;
  std::vector<VariableKind> kinds;
  std::vector<std::vector<std::string>> levels;  // categorical columns only
  std::size_t subjects = 0;
  std::size_t intervals = 0;
  std::vector<double> values;  // row (subject, t) major; t = 1..intervals

  std::size_t width() const { return columns.size(); }
  std::size_t rows() const { return subjects * intervals; }
  std::size_t row_index(std::size_t subject, std::size_t t) const { return subject * intervals + (t - 1); }
  double at(std::size_t subject, std::size_t t, std::size_t col) const {
    return values[row_index(subject, t) * width() + col];
  }
  std::span<const double> row(std::size_t subject, std::size_t t) const {
    return {values.data() + row_index(subject, t) * width(), width()};
  }
  std::size_t column_index(std::string_view name) const;
};

// Seed and replication from which every subject's streams are derived.
struct StreamSeed {
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;

  RandomStream stream(Purpose purpose, std::uint64_t subject) const {
    return RandomStream(seed, purpose, replication, subject);
  }
};

std::vector<SubjectProfile> gen_profiles(const CovariateModel& model, std::size_t n, const StreamSeed& seeds);

// Zeroes unexposed drug proportions, clamps proportions to [0, 1] and builds
// each subject's repaired within-subject structure. Subjects with identical
// drug proportions share one structure.
std::vector<SubjectProfile> housekeep(std::vector<SubjectProfile> profiles, const CovariateModel& model,
                                      Diagnostics* diag = nullptr, unsigned workers = 1);

// m x width() block of cohort values (row-major) for one housekept subject.
// Categorical columns are left at 0 for gen_categorical.
std::vector<double> expand_subject(const SubjectProfile& profile, const CovariateModel& model, std::size_t m,
                                   RandomStream& rng);

// Level index per subject. `baseline` is n x covariates.size() row-major.
std::vector<std::size_t> gen_categorical(const CategoricalSpec& spec, std::span<const double> baseline,
                                         std::size_t n, const StreamSeed& seeds);

// Level probabilities for one subject's baseline covariates.
std::vector<double> categorical_probabilities(const CategoricalSpec& spec, std::span<const double> baseline);

CohortTable gen_cohort(const CovariateModel& model, std::size_t n, std::size_t m, const StreamSeed& seeds,
                       unsigned workers = 1, Diagnostics* diag = nullptr);

// subject_id,t,<columns>; categorical cells carry level names.
std::string cohort_csv(const CohortTable& cohort);

}  // namespace longsim
