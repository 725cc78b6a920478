#pragma once

// Right-censored outcomes matched to covariate histories.
//
// Event and censoring times are drawn from their marginal distributions
// without reference to covariates. The observed times are then handed out to
// subjects one at a time in ascending order: an event time goes to a subject
// in the current risk set with probability proportional to exp(beta' x(t)),
// a censoring time goes to a uniformly chosen one. The resulting data follow
// the Cox model with the supplied coefficients.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "longsim/covgen.hpp"
#include "longsim/diagnostics.hpp"
#include "longsim/rng.hpp"

namespace longsim {

// All times are on the integer grid 1..m.
struct EmpiricalPmf {
  std::vector<double> weights;  // weights[t - 1] = P(T = t)
};
struct WeibullDist {
  double shape = 1.0;
  double scale = 1.0;
};
struct UniformDist {
  double lo = 0.0;
  double hi = 1.0;
};
using TimeDistribution = std::variant<EmpiricalPmf, WeibullDist, UniformDist>;

// Throws ConfigError on negative or all-zero weights or non-positive shape /
// scale. Normalises PMF weights.
TimeDistribution validated(TimeDistribution dist);
std::string describe(const TimeDistribution& dist);

// ceil(raw / (max(raw) / m)), kept within 1..m.
std::vector<std::size_t> rescale_times(std::span<const double> raw, std::size_t m);
// Relative frequencies of grid times over 1..m.
EmpiricalPmf make_pmf(std::span<const std::size_t> grid_times, std::size_t m);

// One grid time; continuous draws are rounded up. *truncated is set when the
// draw exceeded m and was set to m.
std::size_t draw_time(const TimeDistribution& dist, std::size_t m, RandomStream& rng, bool* truncated = nullptr);
std::vector<std::size_t> draw_times(const TimeDistribution& dist, std::size_t n, std::size_t m, RandomStream& rng,
                                    Diagnostics* diag = nullptr);

enum class CensoringFamily { uniform, weibull };

class CalibrationError : public std::runtime_error {
 public:
  CalibrationError(const std::string& what, double lo, double hi) : std::runtime_error(what), lo_(lo), hi_(hi) {}
  // Range of censored fractions the family can reach.
  double achievable_lo() const { return lo_; }
  double achievable_hi() const { return hi_; }

 private:
  double lo_, hi_;
};

struct Calibration {
  TimeDistribution censoring;
  double achieved = 0.0;  // simulated censored fraction
};

// Chooses the scale of a censoring distribution so that a fraction
// `target` of subjects is censored (C <= T). Uniform censoring is
// uniform(0, hi); Weibull censoring keeps `weibull_shape` and varies the
// scale. Uses `draws` common random pairs so the search is deterministic.
Calibration calibrate_censoring(const TimeDistribution& event, double target, CensoringFamily family,
                                std::size_t m, std::uint64_t seed, double weibull_shape = 1.0,
                                std::size_t draws = 100000);
// Censored fraction of a fixed censoring distribution, same estimator.
double censored_fraction(const TimeDistribution& event, const TimeDistribution& censoring, std::size_t m,
                         std::uint64_t seed, std::size_t draws = 100000);

struct ObservedTime {
  std::size_t t_star = 0;
  bool event = false;
};

// min(T, C) with event = T < C, sorted ascending; at equal times events come
// first, then input order.
std::vector<ObservedTime> make_observed(std::span<const std::size_t> event_times,
                                        std::span<const std::size_t> censor_times);

// A model term is a numeric cohort column ("age") or one level of a
// categorical column ("race.black", an indicator).
struct ModelTerm {
  std::string name;
  std::size_t column = 0;
  std::optional<std::size_t> level;
};

std::vector<ModelTerm> resolve_terms(const CohortTable& cohort, std::span<const std::string> names);
inline double term_value(const ModelTerm& term, std::span<const double> row) {
  const double v = row[term.column];
  return term.level ? (static_cast<std::size_t>(v) == *term.level ? 1.0 : 0.0) : v;
}

struct HazardModel {
  std::vector<std::string> terms;
  std::vector<double> beta;
};

struct Assignment {
  std::vector<std::size_t> t_star;  // per subject
  std::vector<std::uint8_t> event;  // per subject
  std::vector<std::size_t> risk_set_sizes;  // |R| before each observed time
};

// Linear predictor beta' x for every (subject, t), laid out by time:
// eta[(t - 1) * N + subject].
std::vector<double> linear_predictor(const CohortTable& cohort, const HazardModel& model);

// Hands out `observed` to the cohort's subjects. Throws std::invalid_argument
// if the count differs from the subject count and std::domain_error for a
// non-finite weight.
Assignment assign_times(std::span<const ObservedTime> observed, const CohortTable& cohort, const HazardModel& model,
                        RandomStream& rng);
// Same, from a precomputed linear predictor of N subjects over m intervals.
Assignment assign_times(std::span<const ObservedTime> observed, std::span<const double> eta, std::size_t n,
                        std::size_t m, RandomStream& rng);

// Long-format analysis rows: each subject's intervals up to its t_star with
// (t_start, t_stop] = (t - 1, t] and the event flag on the last row.
struct AnalysisTable {
  const CohortTable* cohort = nullptr;
  std::vector<std::size_t> subject;  // 0-based
  std::vector<std::size_t> t;
  std::vector<std::uint8_t> event;

  std::size_t rows() const { return subject.size(); }
};

AnalysisTable truncate_history(const CohortTable& cohort, const Assignment& assignment);

// subject_id,t,t_start,t_stop,event,<cohort columns>
std::string analysis_csv(const AnalysisTable& table);

}  // namespace longsim
