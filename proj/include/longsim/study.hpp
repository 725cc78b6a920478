#pragma once

// Replication harness: generate a cohort, assign outcomes, refit, and
// aggregate estimator accuracy, marginal fidelity and power over many
// independent replications.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "longsim/coxfit.hpp"
#include "longsim/covgen.hpp"
#include "longsim/diagnostics.hpp"
#include "longsim/outcomegen.hpp"

namespace longsim {

struct OutcomeSpec {
  TimeDistribution event = WeibullDist{};
  std::optional<TimeDistribution> censoring;  // explicit; otherwise calibrated
  double censor_target = 0.4;
  CensoringFamily family = CensoringFamily::uniform;
  double censor_shape = 1.0;  // Weibull censoring only
};

struct ResolvedOutcome {
  TimeDistribution event;
  TimeDistribution censoring;
  double censored_fraction = 0.0;  // simulated, before matching
};

// Validates the distributions and calibrates censoring when no explicit
// distribution is given.
ResolvedOutcome resolve_outcome(const OutcomeSpec& spec, std::size_t m, std::uint64_t seed);

struct StudyConfig {
  std::shared_ptr<const CovariateModel> covariates;
  OutcomeSpec outcome;
  HazardModel truth;
  std::vector<std::string> fit_terms;  // empty: the terms of `truth`
  std::size_t subjects = 0;
  std::size_t intervals = 0;

  const std::vector<std::string>& terms() const { return fit_terms.empty() ? truth.terms : fit_terms; }
  double truth_of(const std::string& term) const;  // 0 for terms absent from truth
};

struct SimulatedData {
  CohortTable cohort;
  std::vector<std::size_t> event_times;  // drawn before matching
  std::vector<ObservedTime> observed;
  Assignment assignment;
};

// One full replication's data. `workers` parallelises covariate expansion.
SimulatedData simulate(const StudyConfig& config, const ResolvedOutcome& outcome, const StreamSeed& seeds,
                       unsigned workers = 1, Diagnostics* diag = nullptr);

// Marginal statistics tracked per replication.
struct MarginalTarget {
  std::string variable;
  std::string measure;  // prevalence | record_fraction | mean_exposed | mean | sd | proportion
  double target = 0.0;
};
std::vector<MarginalTarget> marginal_targets(const CovariateModel& model, std::size_t n, std::size_t m);
// Values aligned with marginal_targets().
std::vector<double> summarize_marginals(const CohortTable& cohort, const CovariateModel& model);

struct ReplicationResult {
  std::size_t scenario = 0;
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  bool fitted = false;
  FitResult fit;
  std::string error;
  std::vector<double> marginals;
  std::vector<std::size_t> event_histogram;  // drawn event times, index t - 1
  std::size_t events = 0;                    // observed events
};

struct StudyOptions {
  std::size_t replications = 1;
  std::uint64_t master_seed = 1;
  unsigned workers = 1;
  bool fit = true;
  bool marginals = true;
};

std::uint64_t replication_seed(std::uint64_t master, std::size_t scenario, std::size_t replication);

ReplicationResult run_replication(const StudyConfig& config, const ResolvedOutcome& outcome, std::size_t scenario,
                                  std::size_t replication, std::uint64_t master_seed, bool fit = true,
                                  bool marginals = true);

// Scenario-by-replication units share one work queue. Censoring is
// calibrated once per scenario from the master seed.
std::vector<std::vector<ReplicationResult>> run_scenarios(std::span<const StudyConfig> scenarios,
                                                          const StudyOptions& options, Diagnostics* diag = nullptr);
std::vector<ReplicationResult> run_study(const StudyConfig& config, const StudyOptions& options,
                                         Diagnostics* diag = nullptr);

std::size_t converged_count(std::span<const ReplicationResult> results);

struct AccuracyRow {
  std::string variable;
  double truth = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double avg_se = 0.0;
  double sd_estimate = 0.0;
  double std_bias = 0.0;  // percent of the empirical SD
  double mse = 0.0;
  double coverage = 0.0;
  std::size_t used = 0;  // converged replications with a finite SE
};

// Per fitted term over converged replications.
std::vector<AccuracyRow> accuracy_table(std::span<const ReplicationResult> results, const StudyConfig& config);
// Same from raw estimates; exposed for checking the arithmetic.
AccuracyRow accuracy_row(const std::string& variable, double truth, std::span<const double> estimates,
                         std::span<const double> ses);
std::string accuracy_csv(std::span<const AccuracyRow> rows);

struct MarginalRow {
  std::string variable;
  std::string measure;
  double target = 0.0;
  double average = 0.0;
  double distance = 0.0;
};
std::vector<MarginalRow> marginal_report(std::span<const ReplicationResult> results,
                                         std::span<const MarginalTarget> targets);
std::string marginals_csv(std::span<const MarginalRow> rows);

struct PowerRow {
  std::size_t scenario = 0;
  std::vector<std::string> drugs;
  std::vector<double> hazard_ratios;
  std::vector<double> prevalences;
  std::vector<double> power;  // per drug
  double p_all = 0.0;
  double p_ge1 = 0.0;
  double mean_detected = 0.0;
  double fpr = 0.0;                  // NaN without null terms
  std::vector<double> detected;      // detected[k] = P(exactly k effects detected)
  std::size_t converged = 0;
};

// `drugs` lists the terms whose detection is summarised; nonzero-truth drugs
// are the effects of interest. Null terms are every fitted term with zero
// truth.
PowerRow power_summary(std::span<const ReplicationResult> results, const StudyConfig& config,
                       std::span<const std::string> drugs, double alpha);
std::string power_csv(std::span<const PowerRow> rows);

struct Scenario {
  StudyConfig config;
  std::vector<std::string> drugs;
  std::vector<double> hazard_ratios;  // per drug
  std::vector<double> prevalences;    // per drug
};

// Every pairing of hazard ratios to the drugs (drug i keeps prevalence i),
// in lexicographic order of the permutation. Throws std::invalid_argument for
// mismatched lengths or more than 8 drugs.
std::vector<Scenario> permute_effects(const StudyConfig& base, std::span<const std::string> drugs,
                                      std::span<const double> hazard_ratios, std::span<const double> prevalences,
                                      Diagnostics* diag = nullptr);
// One scenario with the given per-drug hazard ratios and prevalences.
Scenario make_scenario(const StudyConfig& base, std::span<const std::string> drugs,
                       std::span<const double> hazard_ratios, std::span<const double> prevalences,
                       Diagnostics* diag = nullptr);

}  // namespace longsim
