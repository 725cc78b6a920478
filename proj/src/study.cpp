#include "longsim/study.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "longsim/csv.hpp"
#include "longsim/normal.hpp"
#include "longsim/parallel.hpp"

namespace longsim {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

ResolvedOutcome resolve_outcome(const OutcomeSpec& spec, std::size_t m, std::uint64_t seed) {
  ResolvedOutcome out;
  out.event = validated(spec.event);
  if (const auto* pmf = std::get_if<EmpiricalPmf>(&out.event); pmf && pmf->weights.size() != m)
    throw ConfigError("event PMF covers " + std::to_string(pmf->weights.size()) + " grid points but the cohort has " +
                      std::to_string(m) + " intervals");
  if (spec.censoring) {
    out.censoring = validated(*spec.censoring);
    out.censored_fraction = censored_fraction(out.event, out.censoring, m, seed);
  } else {
    const Calibration cal = calibrate_censoring(out.event, spec.censor_target, spec.family, m, seed, spec.censor_shape);
    out.censoring = cal.censoring;
    out.censored_fraction = cal.achieved;
  }
  return out;
}

double StudyConfig::truth_of(const std::string& term) const {
  for (std::size_t i = 0; i < truth.terms.size(); ++i)
    if (truth.terms[i] == term) return truth.beta[i];
  return 0.0;
}

SimulatedData simulate(const StudyConfig& config, const ResolvedOutcome& outcome, const StreamSeed& seeds,
                       unsigned workers, Diagnostics* diag) {
  const std::size_t n = config.subjects, m = config.intervals;
  SimulatedData data;
  data.cohort = gen_cohort(*config.covariates, n, m, seeds, workers, diag);

  RandomStream event_rng = seeds.stream(Purpose::event_times, 0);
  data.event_times = draw_times(outcome.event, n, m, event_rng, diag);
  RandomStream censor_rng = seeds.stream(Purpose::censor_times, 0);
  // Censoring beyond the grid is administrative censoring at m.
  const auto censor_times = draw_times(outcome.censoring, n, m, censor_rng, nullptr);
  data.observed = make_observed(data.event_times, censor_times);

  const auto eta = linear_predictor(data.cohort, config.truth);
  RandomStream assign_rng = seeds.stream(Purpose::assignment, 0);
  data.assignment = assign_times(data.observed, eta, n, m, assign_rng);
  return data;
}

std::vector<MarginalTarget> marginal_targets(const CovariateModel& model, std::size_t n, std::size_t m) {
  const auto& vars = model.variables();
  std::vector<MarginalTarget> out;
  const double mean_t2 = static_cast<double>((m + 1) * (2 * m + 1)) / 6.0;
  // Population mean of each variable at t = 1, used for categorical targets.
  auto baseline_mean = [&](std::size_t v) {
    const VariableSpec& s = vars[v];
    switch (s.kind) {
      case VariableKind::binary_static: return s.prevalence.value_or(0.0);
      case VariableKind::binary_time_varying: return s.prevalence.value_or(0.0) * vars[model.partner(v)].mu;
      case VariableKind::proportion_mean: {
        for (std::size_t b = 0; b < vars.size(); ++b)
          if (model.partner(b) == v) return vars[b].prevalence.value_or(0.0) * s.mu;
        return s.mu;
      }
      default: return s.mu;
    }
  };

  for (std::size_t v : model.cohort_vars()) {
    const VariableSpec& s = vars[v];
    switch (s.kind) {
      case VariableKind::binary_time_varying:
        out.push_back({s.name, "prevalence", s.prevalence.value_or(0.0)});
        out.push_back({s.name, "record_fraction", s.prevalence.value_or(0.0) * vars[model.partner(v)].mu});
        break;
      case VariableKind::binary_static: out.push_back({s.name, "prevalence", s.prevalence.value_or(0.0)}); break;
      case VariableKind::proportion_mean: out.push_back({s.name, "mean_exposed", s.mu}); break;
      case VariableKind::normal:
      case VariableKind::time_function: {
        const double sa = model.across_sd(v, n), sw = s.within_sd(), ss = s.slope_sd.value_or(0.0);
        out.push_back({s.name, "mean", s.mu});
        out.push_back({s.name, "sd", std::sqrt(sa * sa + sw * sw + ss * ss * mean_t2)});
        break;
      }
      case VariableKind::categorical: {
        for (const auto& c : model.categoricals()) {
          if (c.name != s.name) continue;
          std::vector<double> base;
          for (const auto& cov : c.covariates) base.push_back(baseline_mean(model.index_of(cov)));
          const auto probs = categorical_probabilities(c, base);
          for (std::size_t l = 0; l < c.levels.size(); ++l)
            out.push_back({s.name + "." + c.levels[l], "proportion", probs[l]});
        }
        break;
      }
      case VariableKind::id: break;
    }
  }
  return out;
}

std::vector<double> summarize_marginals(const CohortTable& cohort, const CovariateModel& model) {
  const auto& vars = model.variables();
  const std::size_t n = cohort.subjects, m = cohort.intervals;
  std::vector<double> out;
  for (std::size_t v : model.cohort_vars()) {
    const VariableSpec& s = vars[v];
    const std::size_t c = model.cohort_column(v);
    switch (s.kind) {
      case VariableKind::binary_time_varying: {
        std::size_t ever = 0;
        double records = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          bool any = false;
          for (std::size_t t = 1; t <= m; ++t) {
            const double x = cohort.at(i, t, c);
            records += x;
            any = any || x != 0.0;
          }
          ever += any;
        }
        out.push_back(n ? static_cast<double>(ever) / static_cast<double>(n) : kNaN);
        out.push_back(n ? records / static_cast<double>(n * m) : kNaN);
        break;
      }
      case VariableKind::binary_static: {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += cohort.at(i, 1, c);
        out.push_back(n ? sum / static_cast<double>(n) : kNaN);
        break;
      }
      case VariableKind::proportion_mean: {
        double sum = 0.0;
        std::size_t exposed = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const double x = cohort.at(i, 1, c);
          if (x > 0.0) {
            sum += x;
            ++exposed;
          }
        }
        out.push_back(exposed ? sum / static_cast<double>(exposed) : kNaN);
        break;
      }
      case VariableKind::normal:
      case VariableKind::time_function: {
        double mean = 0.0, m2 = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t t = 1; t <= m; ++t) {
            const double x = cohort.at(i, t, c);
            ++count;
            const double d = x - mean;
            mean += d / static_cast<double>(count);
            m2 += d * (x - mean);
          }
        out.push_back(count ? mean : kNaN);
        out.push_back(count > 1 ? std::sqrt(m2 / static_cast<double>(count - 1)) : kNaN);
        break;
      }
      case VariableKind::categorical: {
        std::size_t levels = 0;
        for (const auto& cat : model.categoricals())
          if (cat.name == s.name) levels = cat.levels.size();
        std::vector<double> counts(levels, 0.0);
        for (std::size_t i = 0; i < n; ++i) counts[static_cast<std::size_t>(cohort.at(i, 1, c))] += 1.0;
        for (double k : counts) out.push_back(n ? k / static_cast<double>(n) : kNaN);
        break;
      }
      case VariableKind::id: break;
    }
  }
  return out;
}

std::uint64_t replication_seed(std::uint64_t master, std::size_t scenario, std::size_t replication) {
  return mix_seed(master, scenario, replication);
}

ReplicationResult run_replication(const StudyConfig& config, const ResolvedOutcome& outcome, std::size_t scenario,
                                  std::size_t replication, std::uint64_t master_seed, bool fit, bool marginals) {
  ReplicationResult r;
  r.scenario = scenario;
  r.replication = replication;
  r.seed = replication_seed(master_seed, scenario, replication);
  const SimulatedData data = simulate(config, outcome, StreamSeed{r.seed, replication});

  r.event_histogram.assign(config.intervals, 0);
  for (std::size_t t : data.event_times) ++r.event_histogram[t - 1];
  r.events = static_cast<std::size_t>(std::count(data.assignment.event.begin(), data.assignment.event.end(), 1));
  if (marginals) r.marginals = summarize_marginals(data.cohort, *config.covariates);
  if (fit) {
    try {
      const auto design = design_from_cohort(data.cohort, data.assignment, config.terms());
      r.fit = fit_cox(design);
      r.fitted = true;
      if (!r.fit.converged) r.error = r.fit.message;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
  }
  return r;
}

std::vector<std::vector<ReplicationResult>> run_scenarios(std::span<const StudyConfig> scenarios,
                                                          const StudyOptions& options, Diagnostics* diag) {
  std::vector<ResolvedOutcome> outcomes;
  outcomes.reserve(scenarios.size());
  for (const auto& s : scenarios) outcomes.push_back(resolve_outcome(s.outcome, s.intervals, options.master_seed));

  const std::size_t reps = options.replications;
  std::vector<std::vector<ReplicationResult>> results(scenarios.size(), std::vector<ReplicationResult>(reps));
  parallel_for(scenarios.size() * reps, options.workers, [&](std::size_t unit) {
    const std::size_t s = unit / reps, r = unit % reps;
    results[s][r] = run_replication(scenarios[s], outcomes[s], s, r, options.master_seed, options.fit,
                                    options.marginals);
  });

  if (options.fit) {
    for (std::size_t s = 0; s < results.size(); ++s) {
      const std::size_t ok = converged_count(results[s]);
      const std::size_t failed = reps - ok;
      if (failed * 10 > reps)
        warn(diag, "scenario " + std::to_string(s) + ": " + std::to_string(failed) + " of " + std::to_string(reps) +
                       " fits did not converge (more than 10%)");
    }
  }
  return results;
}

std::vector<ReplicationResult> run_study(const StudyConfig& config, const StudyOptions& options, Diagnostics* diag) {
  auto all = run_scenarios(std::span<const StudyConfig>(&config, 1), options, diag);
  return std::move(all.front());
}

std::size_t converged_count(std::span<const ReplicationResult> results) {
  return static_cast<std::size_t>(
      std::count_if(results.begin(), results.end(), [](const ReplicationResult& r) { return r.fitted && r.fit.converged; }));
}

AccuracyRow accuracy_row(const std::string& variable, double truth, std::span<const double> estimates,
                         std::span<const double> ses) {
  AccuracyRow row;
  row.variable = variable;
  row.truth = truth;
  row.used = estimates.size();
  if (estimates.empty()) {
    row.mean_estimate = row.bias = row.avg_se = row.sd_estimate = row.std_bias = row.mse = row.coverage = kNaN;
    return row;
  }
  const double k = static_cast<double>(estimates.size());
  const double z = std_normal_quantile(0.975);
  double sum = 0.0, se_sum = 0.0, sq = 0.0, covered = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    sum += estimates[i];
    se_sum += ses[i];
    sq += (estimates[i] - truth) * (estimates[i] - truth);
    if (std::fabs(estimates[i] - truth) <= z * ses[i]) covered += 1.0;
  }
  row.mean_estimate = sum / k;
  row.bias = row.mean_estimate - truth;
  row.avg_se = se_sum / k;
  row.mse = sq / k;
  row.coverage = covered / k;
  double var = 0.0;
  for (double e : estimates) var += (e - row.mean_estimate) * (e - row.mean_estimate);
  row.sd_estimate = estimates.size() > 1 ? std::sqrt(var / (k - 1.0)) : kNaN;
  if (row.sd_estimate > 0.0)
    row.std_bias = 100.0 * row.bias / row.sd_estimate;
  else
    row.std_bias = row.bias == 0.0 ? 0.0 : kNaN;
  return row;
}

std::vector<AccuracyRow> accuracy_table(std::span<const ReplicationResult> results, const StudyConfig& config) {
  const auto& terms = config.terms();
  std::vector<AccuracyRow> rows;
  for (std::size_t j = 0; j < terms.size(); ++j) {
    std::vector<double> est, ses;
    for (const auto& r : results) {
      if (!r.fitted || !r.fit.converged) continue;
      const auto ji = static_cast<Eigen::Index>(j);
      if (!(r.fit.se(ji) > 0.0)) continue;
      est.push_back(r.fit.beta_hat(ji));
      ses.push_back(r.fit.se(ji));
    }
    rows.push_back(accuracy_row(terms[j], config.truth_of(terms[j]), est, ses));
  }
  return rows;
}

std::string accuracy_csv(std::span<const AccuracyRow> rows) {
  std::string out = "variable,truth,mean_estimate,bias,avg_se,sd_estimate,std_bias,mse,coverage,replications\n";
  for (const auto& r : rows)
    out += r.variable + ',' + csv::format(r.truth) + ',' + csv::format(r.mean_estimate) + ',' + csv::format(r.bias) +
           ',' + csv::format(r.avg_se) + ',' + csv::format(r.sd_estimate) + ',' + csv::format(r.std_bias) + ',' +
           csv::format(r.mse) + ',' + csv::format(r.coverage) + ',' + std::to_string(r.used) + '\n';
  return out;
}

std::vector<MarginalRow> marginal_report(std::span<const ReplicationResult> results,
                                         std::span<const MarginalTarget> targets) {
  std::vector<MarginalRow> rows;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    double sum = 0.0;
    std::size_t k = 0;
    for (const auto& r : results) {
      if (i >= r.marginals.size() || std::isnan(r.marginals[i])) continue;
      sum += r.marginals[i];
      ++k;
    }
    const double avg = k ? sum / static_cast<double>(k) : kNaN;
    rows.push_back({targets[i].variable, targets[i].measure, targets[i].target, avg, avg - targets[i].target});
  }
  return rows;
}

std::string marginals_csv(std::span<const MarginalRow> rows) {
  std::string out = "variable,measure,target,average,distance\n";
  for (const auto& r : rows)
    out += r.variable + ',' + r.measure + ',' + csv::format(r.target) + ',' + csv::format(r.average) + ',' +
           csv::format(r.distance) + '\n';
  return out;
}

PowerRow power_summary(std::span<const ReplicationResult> results, const StudyConfig& config,
                       std::span<const std::string> drugs, double alpha) {
  const auto& terms = config.terms();
  auto term_index = [&](const std::string& name) {
    const auto it = std::find(terms.begin(), terms.end(), name);
    if (it == terms.end()) throw std::invalid_argument("power: '" + name + "' is not a fitted term");
    return static_cast<std::size_t>(it - terms.begin());
  };

  PowerRow row;
  row.drugs.assign(drugs.begin(), drugs.end());
  std::vector<std::size_t> drug_idx, effect_idx, null_idx;
  for (const auto& d : drugs) {
    const std::size_t j = term_index(d);
    drug_idx.push_back(j);
    const double b = config.truth_of(d);
    row.hazard_ratios.push_back(std::exp(b));
    const std::size_t v = config.covariates->index_of(d);
    row.prevalences.push_back(v != CovariateModel::npos ? config.covariates->variables()[v].prevalence.value_or(kNaN)
                                                        : kNaN);
    if (b != 0.0) effect_idx.push_back(j);
  }
  for (std::size_t j = 0; j < terms.size(); ++j)
    if (config.truth_of(terms[j]) == 0.0) null_idx.push_back(j);

  const double crit = wald_critical(alpha);
  auto rejects = [&](const FitResult& f, std::size_t j) {
    const auto ji = static_cast<Eigen::Index>(j);
    return f.se(ji) > 0.0 && std::fabs(f.beta_hat(ji) / f.se(ji)) > crit;
  };

  std::vector<double> drug_hits(drugs.size(), 0.0);
  row.detected.assign(effect_idx.size() + 1, 0.0);
  double null_hits = 0.0, all = 0.0, ge1 = 0.0, detected_sum = 0.0;
  for (const auto& r : results) {
    if (!r.fitted || !r.fit.converged) continue;
    ++row.converged;
    for (std::size_t d = 0; d < drug_idx.size(); ++d) drug_hits[d] += rejects(r.fit, drug_idx[d]);
    std::size_t detected = 0;
    for (std::size_t j : effect_idx) detected += rejects(r.fit, j);
    for (std::size_t j : null_idx) null_hits += rejects(r.fit, j);
    row.detected[detected] += 1.0;
    detected_sum += static_cast<double>(detected);
    all += detected == effect_idx.size() && !effect_idx.empty();
    ge1 += detected >= 1;
  }
  const double k = static_cast<double>(row.converged);
  for (double h : drug_hits) row.power.push_back(k > 0 ? h / k : kNaN);
  for (double& d : row.detected) d = k > 0 ? d / k : kNaN;
  row.p_all = k > 0 ? all / k : kNaN;
  row.p_ge1 = k > 0 ? ge1 / k : kNaN;
  row.mean_detected = k > 0 ? detected_sum / k : kNaN;
  row.fpr = k > 0 && !null_idx.empty() ? null_hits / (k * static_cast<double>(null_idx.size())) : kNaN;
  return row;
}

std::string power_csv(std::span<const PowerRow> rows) {
  if (rows.empty()) return "scenario_id,p_all,p_ge1,mean_detected,fpr,converged\n";
  const PowerRow& first = rows.front();
  std::string out = "scenario_id";
  for (const auto& d : first.drugs) out += ',' + d + "_hr," + d + "_prevalence," + d + "_power";
  out += ",p_all,p_ge1,mean_detected,fpr,converged";
  for (std::size_t k = 0; k < first.detected.size(); ++k) out += ",detected_" + std::to_string(k);
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.scenario);
    for (std::size_t d = 0; d < r.drugs.size(); ++d)
      out += ',' + csv::format(r.hazard_ratios[d]) + ',' + csv::format(r.prevalences[d]) + ',' + csv::format(r.power[d]);
    out += ',' + csv::format(r.p_all) + ',' + csv::format(r.p_ge1) + ',' + csv::format(r.mean_detected) + ',' +
           csv::format(r.fpr) + ',' + std::to_string(r.converged);
    for (double d : r.detected) out += ',' + csv::format(d);
    out += '\n';
  }
  return out;
}

Scenario make_scenario(const StudyConfig& base, std::span<const std::string> drugs,
                       std::span<const double> hazard_ratios, std::span<const double> prevalences, Diagnostics* diag) {
  if (hazard_ratios.size() != drugs.size() || prevalences.size() != drugs.size())
    throw std::invalid_argument("scenario: drugs, hazard ratios and prevalences differ in length");
  const CovariateModel& model = *base.covariates;
  std::vector<VariableSpec> vars = model.variables();
  Scenario sc;
  sc.config = base;
  for (std::size_t d = 0; d < drugs.size(); ++d) {
    if (!(hazard_ratios[d] > 0.0)) throw std::invalid_argument("scenario: hazard ratios must be positive");
    const std::size_t v = model.index_of(drugs[d]);
    if (v == CovariateModel::npos || !vars[v].is_binary())
      throw std::invalid_argument("scenario: '" + drugs[d] + "' is not a binary variable");
    if (!(prevalences[d] >= 0.0 && prevalences[d] <= 1.0))
      throw std::invalid_argument("scenario: prevalence for '" + drugs[d] + "' outside [0, 1]");
    vars[v].prevalence = prevalences[d];
    auto& truth = sc.config.truth;
    const auto it = std::find(truth.terms.begin(), truth.terms.end(), drugs[d]);
    const double b = std::log(hazard_ratios[d]);
    if (it == truth.terms.end()) {
      truth.terms.push_back(drugs[d]);
      truth.beta.push_back(b);
    } else {
      truth.beta[static_cast<std::size_t>(it - truth.terms.begin())] = b;
    }
  }
  CorrelationSpec corr = model.correlations();
  corr.repair_log.clear();
  sc.config.covariates = std::make_shared<const CovariateModel>(std::move(vars), std::move(corr), model.categoricals(), diag);
  sc.drugs.assign(drugs.begin(), drugs.end());
  sc.hazard_ratios.assign(hazard_ratios.begin(), hazard_ratios.end());
  sc.prevalences.assign(prevalences.begin(), prevalences.end());
  return sc;
}

std::vector<Scenario> permute_effects(const StudyConfig& base, std::span<const std::string> drugs,
                                      std::span<const double> hazard_ratios, std::span<const double> prevalences,
                                      Diagnostics* diag) {
  const std::size_t k = drugs.size();
  if (hazard_ratios.size() != k || prevalences.size() != k)
    throw std::invalid_argument("permute_effects: drugs, hazard ratios and prevalences differ in length");
  if (k == 0) throw std::invalid_argument("permute_effects: no drugs given");
  if (k > 8)
    throw std::invalid_argument("permute_effects: " + std::to_string(k) +
                                " drugs give too many arrangements; run a random subset of permutations instead");
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<Scenario> out;
  std::vector<double> hr(k);
  do {
    for (std::size_t j = 0; j < k; ++j) hr[j] = hazard_ratios[perm[j]];
    out.push_back(make_scenario(base, drugs, hr, prevalences, diag));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

}  // namespace longsim
