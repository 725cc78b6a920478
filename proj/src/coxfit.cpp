#include "longsim/coxfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "longsim/kernels.hpp"
#include "longsim/normal.hpp"

namespace longsim {

void CountingProcessData::add_row(std::uint64_t id, double t0, double t1, bool ev, std::span<const double> values) {
  subject.push_back(id);
  start.push_back(t0);
  stop.push_back(t1);
  event.push_back(ev ? 1 : 0);
  x.insert(x.end(), values.begin(), values.end());
}

void check(const CountingProcessData& data) {
  const std::size_t n = data.rows();
  if (data.start.size() != n || data.event.size() != n || data.subject.size() != n || data.x.size() != n * data.cols())
    throw std::invalid_argument("counting-process data: column lengths differ");
  for (std::size_t i = 0; i < n; ++i)
    if (!(data.start[i] < data.stop[i]))
      throw std::invalid_argument("counting-process data: row " + std::to_string(i + 1) + " has start >= stop");
}

CountingProcessData design_from_cohort(const CohortTable& cohort, const Assignment& assignment,
                                       std::span<const std::string> terms) {
  const auto resolved = resolve_terms(cohort, terms);
  CountingProcessData data;
  data.names.assign(terms.begin(), terms.end());
  std::size_t rows = 0;
  for (std::size_t t : assignment.t_star) rows += t;
  data.subject.reserve(rows);
  data.start.reserve(rows);
  data.stop.reserve(rows);
  data.event.reserve(rows);
  data.x.reserve(rows * resolved.size());
  std::vector<double> values(resolved.size());
  for (std::size_t s = 0; s < cohort.subjects; ++s) {
    const std::size_t last = assignment.t_star[s];
    for (std::size_t t = 1; t <= last; ++t) {
      const auto row = cohort.row(s, t);
      for (std::size_t k = 0; k < resolved.size(); ++k) values[k] = term_value(resolved[k], row);
      data.add_row(s + 1, static_cast<double>(t - 1), static_cast<double>(t), t == last && assignment.event[s],
                   values);
    }
  }
  return data;
}

CountingProcessData design_from_analysis(const AnalysisTable& table, std::span<const std::string> terms) {
  const CohortTable& cohort = *table.cohort;
  const auto resolved = resolve_terms(cohort, terms);
  CountingProcessData data;
  data.names.assign(terms.begin(), terms.end());
  std::vector<double> values(resolved.size());
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const auto row = cohort.row(table.subject[i], table.t[i]);
    for (std::size_t k = 0; k < resolved.size(); ++k) values[k] = term_value(resolved[k], row);
    data.add_row(table.subject[i] + 1, static_cast<double>(table.t[i] - 1), static_cast<double>(table.t[i]),
                 table.event[i] != 0, values);
  }
  return data;
}

CountingProcessData design_from_csv(const csv::Table& table, std::span<const std::string> terms) {
  auto need = [&](const char* name) {
    const std::size_t c = table.column(name);
    if (c == csv::Table::npos) throw ParseError(table.source, 1, std::string("missing column '") + name + "'");
    return c;
  };
  const std::size_t c_id = need("subject_id"), c_start = need("t_start"), c_stop = need("t_stop"),
                    c_event = need("event");

  struct Source {
    std::size_t column;
    std::string level;  // empty for numeric
  };
  std::vector<Source> sources;
  for (const auto& term : terms) {
    const std::size_t direct = table.column(term);
    if (direct != csv::Table::npos) {
      sources.push_back({direct, {}});
      continue;
    }
    const auto dot = term.find('.');
    const std::size_t base = dot == std::string::npos ? csv::Table::npos : table.column(term.substr(0, dot));
    if (base == csv::Table::npos) throw ParseError(table.source, 1, "no column for model term '" + term + "'");
    sources.push_back({base, term.substr(dot + 1)});
  }

  CountingProcessData data;
  data.names.assign(terms.begin(), terms.end());
  std::vector<double> values(sources.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    for (std::size_t k = 0; k < sources.size(); ++k) {
      const auto& cell = row[sources[k].column];
      values[k] = sources[k].level.empty() ? csv::to_double(cell, table, r) : (cell == sources[k].level ? 1.0 : 0.0);
    }
    const long long ev = csv::to_integer(row[c_event], table, r);
    if (ev != 0 && ev != 1) throw ParseError(table.source, table.line_numbers[r], "event must be 0 or 1");
    data.add_row(static_cast<std::uint64_t>(csv::to_integer(row[c_id], table, r)),
                 csv::to_double(row[c_start], table, r), csv::to_double(row[c_stop], table, r), ev == 1, values);
  }
  check(data);
  return data;
}

namespace {

// Sorted views of the rows reused across Newton iterations.
struct RiskSetIndex {
  std::vector<std::size_t> by_stop;   // descending stop
  std::vector<std::size_t> by_start;  // descending start
  std::vector<std::size_t> events;    // event rows, descending stop
  std::vector<double> centered;       // x minus column means
};

RiskSetIndex index_rows(const CountingProcessData& data) {
  const std::size_t n = data.rows(), p = data.cols();
  RiskSetIndex ix;
  ix.by_stop.resize(n);
  std::iota(ix.by_stop.begin(), ix.by_stop.end(), std::size_t{0});
  ix.by_start = ix.by_stop;
  std::stable_sort(ix.by_stop.begin(), ix.by_stop.end(),
                   [&](std::size_t a, std::size_t b) { return data.stop[a] > data.stop[b]; });
  std::stable_sort(ix.by_start.begin(), ix.by_start.end(),
                   [&](std::size_t a, std::size_t b) { return data.start[a] > data.start[b]; });
  for (std::size_t i : ix.by_stop)
    if (data.event[i]) ix.events.push_back(i);

  std::vector<double> mean(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) mean[j] += data.x[i * p + j];
  for (double& v : mean) v /= n > 0 ? static_cast<double>(n) : 1.0;
  ix.centered.resize(n * p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) ix.centered[i * p + j] = data.x[i * p + j] - mean[j];
  return ix;
}

PartialLikelihood evaluate(const CountingProcessData& data, const RiskSetIndex& ix, const Eigen::VectorXd& beta) {
  const std::size_t n = data.rows(), p = data.cols();
  PartialLikelihood out;
  out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  out.hessian = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  if (ix.events.empty() || n == 0) return out;

  const auto& k = kernels::active();
  std::vector<double> eta(n), w(n);
  k.gemv(ix.centered.data(), n, p, p, beta.data(), eta.data());
  const double shift = k.max(eta.data(), n);
  k.exp_shifted(eta.data(), shift, w.data(), n);

  double s0 = 0.0, s0_peak = 0.0;
  std::vector<double> s1(p, 0.0), s2(p * p, 0.0);
  std::vector<std::uint8_t> active(n, 0);
  std::vector<double> ev_x(p);
  std::vector<double> mean1(p);

  auto recompute = [&] {
    s0 = 0.0;
    std::fill(s1.begin(), s1.end(), 0.0);
    std::fill(s2.begin(), s2.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      const double* xi = ix.centered.data() + i * p;
      s0 += w[i];
      k.axpy(w[i], xi, s1.data(), p);
      k.syr_lower(w[i], xi, s2.data(), p);
    }
    s0_peak = s0;
  };

  std::size_t a = 0, b = 0, e = 0;
  while (e < ix.events.size()) {
    const double te = data.stop[ix.events[e]];
    for (; a < n && data.stop[ix.by_stop[a]] >= te; ++a) {
      const std::size_t i = ix.by_stop[a];
      const double* xi = ix.centered.data() + i * p;
      active[i] = 1;
      s0 += w[i];
      k.axpy(w[i], xi, s1.data(), p);
      k.syr_lower(w[i], xi, s2.data(), p);
    }
    s0_peak = std::max(s0_peak, s0);
    bool removed = false;
    for (; b < n && data.start[ix.by_start[b]] >= te; ++b) {
      const std::size_t i = ix.by_start[b];
      if (!active[i]) continue;
      const double* xi = ix.centered.data() + i * p;
      active[i] = 0;
      s0 -= w[i];
      k.axpy(-w[i], xi, s1.data(), p);
      k.syr_lower(-w[i], xi, s2.data(), p);
      removed = true;
    }
    // Subtraction loses precision once most of the accumulated weight has
    // left the risk set; start over from the surviving rows.
    if (removed && s0 < 1e-6 * s0_peak) recompute();

    double d = 0.0, eta_sum = 0.0;
    std::fill(ev_x.begin(), ev_x.end(), 0.0);
    for (; e < ix.events.size() && data.stop[ix.events[e]] == te; ++e) {
      const std::size_t i = ix.events[e];
      d += 1.0;
      eta_sum += eta[i];
      k.axpy(1.0, ix.centered.data() + i * p, ev_x.data(), p);
    }
    out.loglik += eta_sum - d * (std::log(s0) + shift);
    for (std::size_t j = 0; j < p; ++j) {
      mean1[j] = s1[j] / s0;
      out.gradient[static_cast<Eigen::Index>(j)] += ev_x[j] - d * mean1[j];
    }
    for (std::size_t r = 0; r < p; ++r)
      for (std::size_t c = 0; c <= r; ++c)
        out.hessian(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) -=
            d * (s2[r * p + c] / s0 - mean1[r] * mean1[c]);
  }
  for (Eigen::Index r = 0; r < out.hessian.rows(); ++r)
    for (Eigen::Index c = r + 1; c < out.hessian.cols(); ++c) out.hessian(r, c) = out.hessian(c, r);
  return out;
}

// Names the columns that carry a (near) null direction of the information.
void check_information(const Eigen::MatrixXd& info, const std::vector<std::string>& names) {
  const Eigen::Index p = info.rows();
  std::vector<std::string> flagged;
  const double scale = std::max(1.0, info.diagonal().cwiseAbs().maxCoeff());
  for (Eigen::Index j = 0; j < p; ++j)
    if (!(info(j, j) > 1e-12 * scale)) flagged.push_back(names[static_cast<std::size_t>(j)]);
  if (flagged.empty()) {
    const Eigen::VectorXd inv_sd = info.diagonal().cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd corr = inv_sd.asDiagonal() * info * inv_sd.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
    if (es.eigenvalues()(0) > 1e-10) return;
    const Eigen::VectorXd v = es.eigenvectors().col(0);
    const double vmax = v.cwiseAbs().maxCoeff();
    for (Eigen::Index j = 0; j < p; ++j)
      if (std::fabs(v(j)) > 0.1 * vmax) flagged.push_back(names[static_cast<std::size_t>(j)]);
  }
  std::string list;
  for (const auto& f : flagged) list += (list.empty() ? "" : ", ") + f;
  throw SingularInformation("information matrix is singular; collinear or constant columns: " + list, flagged);
}

}  // namespace

PartialLikelihood partial_loglik_and_derivatives(const CountingProcessData& data, const Eigen::VectorXd& beta) {
  check(data);
  if (static_cast<std::size_t>(beta.size()) != data.cols())
    throw std::invalid_argument("partial likelihood: coefficient vector has the wrong length");
  return evaluate(data, index_rows(data), beta);
}

FitResult fit_cox(const CountingProcessData& data, const Eigen::VectorXd& init, const FitOptions& options) {
  check(data);
  const std::size_t p = data.cols();
  if (p == 0) throw std::invalid_argument("fit_cox: no covariates");
  if (std::none_of(data.event.begin(), data.event.end(), [](std::uint8_t e) { return e != 0; }))
    throw std::invalid_argument("fit_cox: no events");
  const auto pi = static_cast<Eigen::Index>(p);

  FitResult fit;
  fit.names = data.names;
  Eigen::VectorXd beta = init.size() == 0 ? Eigen::VectorXd::Zero(pi) : init;
  if (beta.size() != pi) throw std::invalid_argument("fit_cox: initial vector has the wrong length");

  const RiskSetIndex ix = index_rows(data);
  PartialLikelihood cur = evaluate(data, ix, beta);
  check_information(-cur.hessian, data.names);

  for (fit.iterations = 1; fit.iterations <= options.max_iterations; ++fit.iterations) {
    const Eigen::MatrixXd info = -cur.hessian;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    Eigen::VectorXd step = ldlt.solve(cur.gradient);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      fit.message = "information matrix became singular during iteration";
      break;
    }

    PartialLikelihood next;
    Eigen::VectorXd trial;
    bool improved = false;
    for (std::size_t h = 0; h <= options.max_halvings; ++h) {
      trial = beta + step;
      next = evaluate(data, ix, trial);
      if (std::isfinite(next.loglik) && next.loglik >= cur.loglik - 1e-12 * std::fabs(cur.loglik)) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) {
      fit.message = "step halving failed to increase the partial likelihood";
      break;
    }

    const double change = std::fabs(next.loglik - cur.loglik) / std::max(1.0, std::fabs(next.loglik));
    beta = trial;
    cur = std::move(next);

    Eigen::Index worst;
    if (beta.cwiseAbs().maxCoeff(&worst) > options.divergence_bound) {
      fit.message = "coefficient '" + data.names[static_cast<std::size_t>(worst)] + "' is diverging toward " +
                    (beta(worst) > 0 ? "+inf" : "-inf") + " (monotone likelihood)";
      break;
    }
    if (change < options.loglik_tol && cur.gradient.norm() < options.gradient_tol) {
      // A flat ridge also has a vanishing gradient; there the next Newton
      // step stays large because the information vanishes with it.
      Eigen::LDLT<Eigen::MatrixXd> at_end(-cur.hessian);
      const Eigen::VectorXd rest = at_end.solve(cur.gradient);
      Eigen::Index far;
      if (at_end.info() == Eigen::Success && rest.allFinite() && rest.cwiseAbs().maxCoeff(&far) > 1e-4) {
        fit.message = "coefficient '" + data.names[static_cast<std::size_t>(far)] + "' is diverging toward " +
                      (beta(far) > 0 ? "+inf" : "-inf") + " (monotone likelihood)";
        break;
      }
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged && fit.message.empty())
    fit.message = "no convergence in " + std::to_string(options.max_iterations) + " iterations";
  fit.iterations = std::min(fit.iterations, options.max_iterations);

  fit.beta_hat = beta;
  fit.loglik = cur.loglik;
  fit.gradient_norm = cur.gradient.norm();
  fit.se = Eigen::VectorXd::Constant(pi, std::numeric_limits<double>::quiet_NaN());
  Eigen::LDLT<Eigen::MatrixXd> ldlt(-cur.hessian);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(pi, pi));
    for (Eigen::Index j = 0; j < pi; ++j)
      if (cov(j, j) > 0.0) fit.se(j) = std::sqrt(cov(j, j));
  }
  if (fit.converged) fit.message = "converged";
  return fit;
}

double wald_critical(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("significance level must lie in (0, 1)");
  return std_normal_quantile(1.0 - alpha / 2.0);
}

WaldTest wald_test(const FitResult& fit, std::size_t j, double alpha) {
  if (!fit.converged) throw std::invalid_argument("wald_test: fit did not converge");
  const auto ji = static_cast<Eigen::Index>(j);
  if (ji >= fit.beta_hat.size()) throw std::out_of_range("wald_test: coefficient index out of range");
  const double se = fit.se(ji);
  if (!(se > 0.0)) throw std::invalid_argument("wald_test: standard error is not positive");
  const double crit = wald_critical(alpha);
  const double z95 = std_normal_quantile(0.975);
  WaldTest t;
  t.z = fit.beta_hat(ji) / se;
  t.reject = std::fabs(t.z) > crit;
  t.ci_lo = fit.beta_hat(ji) - z95 * se;
  t.ci_hi = fit.beta_hat(ji) + z95 * se;
  return t;
}

}  // namespace longsim
