#include "longsim/outcomegen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "longsim/csv.hpp"
#include "longsim/kernels.hpp"

namespace longsim {
namespace {

// Draws grid times from one distribution; the PMF's CDF is built once.
class GridSampler {
 public:
  GridSampler(const TimeDistribution& dist, std::size_t m) : dist_(dist), m_(m) {
    if (const auto* pmf = std::get_if<EmpiricalPmf>(&dist_)) {
      cdf_.resize(pmf->weights.size());
      std::partial_sum(pmf->weights.begin(), pmf->weights.end(), cdf_.begin());
    }
  }

  // Continuous (unrounded) time for a uniform variate; PMFs return the grid time.
  double raw(double u) const {
    if (const auto* w = std::get_if<WeibullDist>(&dist_)) return w->scale * std::pow(-std::log(u), 1.0 / w->shape);
    if (const auto* un = std::get_if<UniformDist>(&dist_)) return un->lo + (un->hi - un->lo) * u;
    const double target = u * cdf_.back();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
    const auto idx = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf_.begin(),
                                                                       static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
    return static_cast<double>(idx + 1);
  }

  std::size_t grid(double u, bool* truncated) const {
    const double t = std::ceil(raw(u));
    if (t > static_cast<double>(m_)) {
      if (truncated) *truncated = true;
      return m_;
    }
    return t < 1.0 ? 1 : static_cast<std::size_t>(t);
  }

 private:
  const TimeDistribution& dist_;
  std::size_t m_;
  std::vector<double> cdf_;
};

}  // namespace

TimeDistribution validated(TimeDistribution dist) {
  if (auto* pmf = std::get_if<EmpiricalPmf>(&dist)) {
    double total = 0.0;
    for (double w : pmf->weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("event PMF has a negative or non-finite weight");
      total += w;
    }
    if (!(total > 0.0)) throw ConfigError("event PMF has no positive weight");
    for (double& w : pmf->weights) w /= total;
  } else if (const auto* w = std::get_if<WeibullDist>(&dist)) {
    if (!(w->shape > 0.0) || !(w->scale > 0.0) || !std::isfinite(w->shape) || !std::isfinite(w->scale))
      throw ConfigError("Weibull shape and scale must be positive");
  } else if (const auto* u = std::get_if<UniformDist>(&dist)) {
    if (!(u->lo >= 0.0) || !(u->hi > u->lo) || !std::isfinite(u->hi))
      throw ConfigError("uniform distribution needs 0 <= lo < hi");
  }
  return dist;
}

std::string describe(const TimeDistribution& dist) {
  if (const auto* pmf = std::get_if<EmpiricalPmf>(&dist))
    return "pmf over 1.." + std::to_string(pmf->weights.size());
  if (const auto* w = std::get_if<WeibullDist>(&dist))
    return "weibull(shape=" + csv::format(w->shape) + ", scale=" + csv::format(w->scale) + ")";
  const auto& u = std::get<UniformDist>(dist);
  return "uniform(" + csv::format(u.lo) + ", " + csv::format(u.hi) + ")";
}

std::vector<std::size_t> rescale_times(std::span<const double> raw, std::size_t m) {
  if (raw.empty()) return {};
  if (m == 0) throw std::invalid_argument("rescale_times: grid size must be at least 1");
  const double mx = *std::max_element(raw.begin(), raw.end());
  if (!(mx > 0.0)) throw std::invalid_argument("rescale_times: times must be positive");
  const double scale = mx / static_cast<double>(m);
  std::vector<std::size_t> out;
  out.reserve(raw.size());
  for (double r : raw) {
    if (!(r > 0.0)) throw std::invalid_argument("rescale_times: times must be positive");
    const double g = std::ceil(r / scale);
    out.push_back(std::clamp<std::size_t>(static_cast<std::size_t>(g), 1, m));
  }
  return out;
}

EmpiricalPmf make_pmf(std::span<const std::size_t> grid_times, std::size_t m) {
  EmpiricalPmf pmf;
  pmf.weights.assign(m, 0.0);
  for (std::size_t t : grid_times) {
    if (t < 1 || t > m) throw std::invalid_argument("make_pmf: time " + std::to_string(t) + " outside 1.." + std::to_string(m));
    pmf.weights[t - 1] += 1.0;
  }
  if (!grid_times.empty())
    for (double& w : pmf.weights) w /= static_cast<double>(grid_times.size());
  return pmf;
}

std::size_t draw_time(const TimeDistribution& dist, std::size_t m, RandomStream& rng, bool* truncated) {
  return GridSampler(dist, m).grid(rng.uniform(), truncated);
}

std::vector<std::size_t> draw_times(const TimeDistribution& dist, std::size_t n, std::size_t m, RandomStream& rng,
                                    Diagnostics* diag) {
  const GridSampler sampler(dist, m);
  std::vector<std::size_t> out(n);
  std::size_t truncated = 0;
  for (auto& t : out) {
    bool trunc = false;
    t = sampler.grid(rng.uniform(), &trunc);
    truncated += trunc;
  }
  if (truncated > 0)
    warn(diag, std::to_string(truncated) + " of " + std::to_string(n) + " draws from " + describe(dist) +
                   " exceeded the grid and were set to " + std::to_string(m));
  return out;
}

namespace {

struct CommonDraws {
  std::vector<std::size_t> event;
  std::vector<double> u;
};

CommonDraws common_draws(const TimeDistribution& event, std::size_t m, std::uint64_t seed, std::size_t draws) {
  RandomStream te(seed, Purpose::calibration, 0, 0);
  RandomStream tc(seed, Purpose::calibration, 0, 1);
  CommonDraws d;
  const GridSampler sampler(event, m);
  d.event.resize(draws);
  d.u.resize(draws);
  for (std::size_t i = 0; i < draws; ++i) {
    d.event[i] = sampler.grid(te.uniform(), nullptr);
    d.u[i] = tc.uniform();
  }
  return d;
}

double fraction(const CommonDraws& d, const TimeDistribution& censoring, std::size_t m) {
  const GridSampler sampler(censoring, m);
  std::size_t censored = 0;
  for (std::size_t i = 0; i < d.u.size(); ++i) censored += sampler.grid(d.u[i], nullptr) <= d.event[i];
  return d.u.empty() ? 0.0 : static_cast<double>(censored) / static_cast<double>(d.u.size());
}

}  // namespace

double censored_fraction(const TimeDistribution& event, const TimeDistribution& censoring, std::size_t m,
                         std::uint64_t seed, std::size_t draws) {
  return fraction(common_draws(event, m, seed, draws), censoring, m);
}

Calibration calibrate_censoring(const TimeDistribution& event, double target, CensoringFamily family,
                                std::size_t m, std::uint64_t seed, double weibull_shape, std::size_t draws) {
  if (!(target > 0.0 && target < 1.0)) throw ConfigError("censoring target must lie strictly inside (0, 1)");
  if (!(weibull_shape > 0.0)) throw ConfigError("censoring Weibull shape must be positive");
  const CommonDraws d = common_draws(event, m, seed, draws);
  auto make = [&](double scale) -> TimeDistribution {
    if (family == CensoringFamily::uniform) return UniformDist{0.0, scale};
    return WeibullDist{weibull_shape, scale};
  };

  // The censored fraction falls from 1 (every C = 1) towards P(T = m) (every
  // C = m) as the scale grows.
  const double cap = static_cast<double>(m) * 1e9;
  double lo = 1e-6, hi = static_cast<double>(m);
  double f_hi = fraction(d, make(hi), m);
  while (f_hi > target && hi < cap) {
    lo = hi;
    hi *= 4.0;
    f_hi = fraction(d, make(hi), m);
  }
  const double floor_frac = fraction(d, make(cap), m);
  if (f_hi > target + 0.01)
    throw CalibrationError("censoring target " + csv::format(target) + " is unattainable; fractions in [" +
                               csv::format(floor_frac) + ", 1] are reachable",
                           floor_frac, 1.0);

  Calibration best{make(hi), f_hi};
  for (int it = 0; it < 200; ++it) {
    if (std::fabs(best.achieved - target) <= 0.002) break;
    const double mid = std::sqrt(lo * hi);
    const double f = fraction(d, make(mid), m);
    if (std::fabs(f - target) < std::fabs(best.achieved - target)) best = {make(mid), f};
    if (f > target)
      lo = mid;
    else
      hi = mid;
    if (hi / lo < 1.0 + 1e-12) break;
  }
  if (std::fabs(best.achieved - target) > 0.01)
    throw CalibrationError("censoring target " + csv::format(target) + " is not reachable on this grid; closest is " +
                               csv::format(best.achieved),
                           floor_frac, 1.0);
  return best;
}

std::vector<ObservedTime> make_observed(std::span<const std::size_t> event_times,
                                        std::span<const std::size_t> censor_times) {
  if (event_times.size() != censor_times.size())
    throw std::invalid_argument("make_observed: event and censoring vectors differ in length");
  std::vector<ObservedTime> out(event_times.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool event = event_times[i] < censor_times[i];
    out[i] = {event ? event_times[i] : censor_times[i], event};
  }
  std::stable_sort(out.begin(), out.end(), [](const ObservedTime& a, const ObservedTime& b) {
    if (a.t_star != b.t_star) return a.t_star < b.t_star;
    return a.event && !b.event;
  });
  return out;
}

std::vector<ModelTerm> resolve_terms(const CohortTable& cohort, std::span<const std::string> names) {
  std::vector<ModelTerm> terms;
  terms.reserve(names.size());
  for (const auto& name : names) {
    const auto dot = name.find('.');
    const std::string base = name.substr(0, dot);
    const std::size_t col = cohort.column_index(base);
    if (col == static_cast<std::size_t>(-1)) throw ConfigError("model term '" + name + "' names no cohort column");
    ModelTerm term{name, col, std::nullopt};
    const bool categorical = cohort.kinds[col] == VariableKind::categorical;
    if (dot == std::string::npos) {
      if (categorical)
        throw ConfigError("model term '" + name + "' is categorical; use '" + name + ".<level>' per non-reference level");
    } else {
      if (!categorical) throw ConfigError("model term '" + name + "': '" + base + "' is not categorical");
      const std::string level = name.substr(dot + 1);
      const auto& levels = cohort.levels[col];
      const auto it = std::find(levels.begin(), levels.end(), level);
      if (it == levels.end()) throw ConfigError("model term '" + name + "': unknown level '" + level + "'");
      term.level = static_cast<std::size_t>(it - levels.begin());
    }
    terms.push_back(std::move(term));
  }
  return terms;
}

std::vector<double> linear_predictor(const CohortTable& cohort, const HazardModel& model) {
  if (model.terms.size() != model.beta.size())
    throw std::invalid_argument("linear_predictor: term and coefficient counts differ");
  for (double b : model.beta)
    if (!std::isfinite(b)) throw ConfigError("hazard coefficients must be finite");
  const auto terms = resolve_terms(cohort, model.terms);
  const std::size_t n = cohort.subjects, m = cohort.intervals;
  std::vector<double> eta(n * m, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 1; t <= m; ++t) {
      const auto row = cohort.row(s, t);
      double e = 0.0;
      for (std::size_t k = 0; k < terms.size(); ++k) e += model.beta[k] * term_value(terms[k], row);
      eta[(t - 1) * n + s] = e;
    }
  return eta;
}

Assignment assign_times(std::span<const ObservedTime> observed, const CohortTable& cohort, const HazardModel& model,
                        RandomStream& rng) {
  const auto eta = linear_predictor(cohort, model);
  return assign_times(observed, eta, cohort.subjects, cohort.intervals, rng);
}

Assignment assign_times(std::span<const ObservedTime> observed, std::span<const double> eta, std::size_t n,
                        std::size_t m, RandomStream& rng) {
  if (observed.size() != n)
    throw std::invalid_argument("assign_times: " + std::to_string(observed.size()) + " observed times for " +
                                std::to_string(n) + " subjects");
  if (eta.size() != n * m) throw std::invalid_argument("assign_times: linear predictor has the wrong size");

  // Risk-set members occupy positions 0..R-1 of every time row; removal moves
  // the last member into the vacated slot so each row stays contiguous.
  std::vector<double> work(eta.begin(), eta.end());
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::vector<double> weights(n);

  Assignment out;
  out.t_star.assign(n, 0);
  out.event.assign(n, 0);
  out.risk_set_sizes.reserve(n);
  const auto& k = kernels::active();

  for (std::size_t step = 0; step < n; ++step) {
    const ObservedTime& ob = observed[step];
    const std::size_t r = n - step;
    out.risk_set_sizes.push_back(r);
    if (ob.t_star < 1 || ob.t_star > m)
      throw std::invalid_argument("assign_times: no covariates at t = " + std::to_string(ob.t_star) +
                                  " (grid is 1.." + std::to_string(m) + ")");
    std::size_t pick;
    if (ob.event) {
      const double* row = work.data() + (ob.t_star - 1) * n;
      const double shift = k.max(row, r);
      const double total = k.exp_shifted(row, shift, weights.data(), r);
      if (!std::isfinite(shift) || !std::isfinite(total) || !(total > 0.0))
        throw std::domain_error("assign_times: non-finite hazard weight at t = " + std::to_string(ob.t_star));
      const double u = rng.uniform() * total;
      double acc = 0.0;
      pick = r - 1;
      for (std::size_t i = 0; i < r; ++i) {
        acc += weights[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::min(r - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(r)));
    }

    const std::size_t subject = ids[pick];
    out.t_star[subject] = ob.t_star;
    out.event[subject] = ob.event ? 1 : 0;
    const std::size_t last = r - 1;
    if (pick != last) {
      ids[pick] = ids[last];
      for (std::size_t t = 0; t < m; ++t) work[t * n + pick] = work[t * n + last];
    }
  }
  return out;
}

AnalysisTable truncate_history(const CohortTable& cohort, const Assignment& assignment) {
  if (assignment.t_star.size() != cohort.subjects)
    throw std::invalid_argument("truncate_history: assignment does not cover the cohort");
  AnalysisTable table;
  table.cohort = &cohort;
  std::size_t rows = 0;
  for (std::size_t t : assignment.t_star) rows += t;
  table.subject.reserve(rows);
  table.t.reserve(rows);
  table.event.reserve(rows);
  for (std::size_t s = 0; s < cohort.subjects; ++s) {
    const std::size_t last = assignment.t_star[s];
    if (last < 1 || last > cohort.intervals) throw std::invalid_argument("truncate_history: subject has no valid time");
    for (std::size_t t = 1; t <= last; ++t) {
      table.subject.push_back(s);
      table.t.push_back(t);
      table.event.push_back(t == last ? assignment.event[s] : 0);
    }
  }
  return table;
}

std::string analysis_csv(const AnalysisTable& table) {
  const CohortTable& cohort = *table.cohort;
  std::string out = "subject_id,t,t_start,t_stop,event";
  for (const auto& c : cohort.columns) out += "," + c;
  out += "\n";
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const std::size_t t = table.t[i];
    out += std::to_string(table.subject[i] + 1) + ',' + std::to_string(t) + ',' + std::to_string(t - 1) + ',' +
           std::to_string(t) + ',' + (table.event[i] ? '1' : '0');
    const auto row = cohort.row(table.subject[i], t);
    for (std::size_t c = 0; c < cohort.width(); ++c) {
      out += ',';
      if (cohort.kinds[c] == VariableKind::categorical)
        out += cohort.levels[c][static_cast<std::size_t>(row[c])];
      else
        out += csv::format(row[c]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace longsim
