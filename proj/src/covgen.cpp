#include "longsim/covgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "longsim/csv.hpp"
#include "longsim/parallel.hpp"

namespace longsim {
namespace {

bool valid_identifier(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  });
}

bool in_across(VariableKind k) { return k != VariableKind::id && k != VariableKind::categorical; }

bool in_within(VariableKind k) {
  return k == VariableKind::normal || k == VariableKind::time_function || k == VariableKind::binary_time_varying;
}

// Reorders a named square matrix onto `wanted` names. Every wanted name must
// be present; extra names are ignored.
Eigen::MatrixXd select_named(const Eigen::MatrixXd& m, const std::vector<std::string>& names,
                             const std::vector<std::string>& wanted, const std::string& artifact) {
  std::vector<Eigen::Index> pos;
  pos.reserve(wanted.size());
  for (const auto& w : wanted) {
    auto it = std::find(names.begin(), names.end(), w);
    if (it == names.end()) throw ConfigError(artifact + " has no column for variable '" + w + "' (variables.csv)");
    pos.push_back(static_cast<Eigen::Index>(it - names.begin()));
  }
  const auto n = static_cast<Eigen::Index>(wanted.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = m(pos[static_cast<std::size_t>(i)], pos[static_cast<std::size_t>(j)]);
  return out;
}

void check_correlation_matrix(const Eigen::MatrixXd& m, const std::vector<std::string>& names,
                              const std::string& artifact) {
  if (m.rows() != m.cols() || static_cast<std::size_t>(m.rows()) != names.size())
    throw ConfigError(artifact + ": matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                      " but header names " + std::to_string(names.size()) + " variables");
  std::set<std::string> seen;
  for (const auto& n : names)
    if (!seen.insert(n).second) throw ConfigError(artifact + ": duplicate column '" + n + "'");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (std::fabs(m(i, i) - 1.0) > 1e-9)
      throw ConfigError(artifact + ": diagonal entry for '" + names[static_cast<std::size_t>(i)] + "' is not 1");
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (std::fabs(m(i, j) - m(j, i)) > 1e-9)
        throw ConfigError(artifact + ": matrix is not symmetric at (" + names[static_cast<std::size_t>(i)] + ", " +
                          names[static_cast<std::size_t>(j)] + ")");
      if (!(std::fabs(m(i, j)) <= 1.0))
        throw ConfigError(artifact + ": entry (" + names[static_cast<std::size_t>(i)] + ", " +
                          names[static_cast<std::size_t>(j)] + ") lies outside [-1, 1]");
    }
  }
}

}  // namespace

CovariateModel::CovariateModel(std::vector<VariableSpec> variables, CorrelationSpec correlations,
                               std::vector<CategoricalSpec> categoricals, Diagnostics* diag)
    : variables_(std::move(variables)),
      correlations_(std::move(correlations)),
      categoricals_(std::move(categoricals)) {
  resolve(diag);
}

std::size_t CovariateModel::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < variables_.size(); ++i)
    if (variables_[i].name == name) return i;
  return npos;
}

double CovariateModel::across_sd(std::size_t var, std::size_t n) const {
  const VariableSpec& v = variables_[var];
  if (v.sigma_across) return *v.sigma_across;
  if (v.kind == VariableKind::proportion_mean && n > 0) return std::sqrt(v.mu * (1.0 - v.mu) / static_cast<double>(n));
  return 0.0;
}

CovariateModel CovariateModel::with_prevalence(std::string_view var, double prevalence, Diagnostics* diag) const {
  std::vector<VariableSpec> vars = variables_;
  const std::size_t i = index_of(var);
  if (i == npos || !vars[i].is_binary()) throw ConfigError("'" + std::string(var) + "' is not a binary variable");
  vars[i].prevalence = prevalence;
  CorrelationSpec corr = correlations_;
  corr.repair_log.clear();
  return CovariateModel(std::move(vars), std::move(corr), categoricals_, diag);
}

void CovariateModel::resolve(Diagnostics* diag) {
  std::set<std::string> names;
  std::size_t ids = 0;
  for (const auto& v : variables_) {
    if (!valid_identifier(v.name)) throw ConfigError("variables.csv: invalid variable name '" + v.name + "'");
    if (!names.insert(v.name).second) throw ConfigError("variables.csv: duplicate variable '" + v.name + "'");
    const std::string where = "variables.csv: variable '" + v.name + "'";
    switch (v.kind) {
      case VariableKind::id: ++ids; break;
      case VariableKind::normal:
      case VariableKind::time_function:
        if (!v.sigma_across || *v.sigma_across < 0.0) throw ConfigError(where + " needs sigma_across >= 0");
        if (v.kind == VariableKind::time_function && (!v.slope_sd || *v.slope_sd < 0.0))
          throw ConfigError(where + " needs slope_sd >= 0");
        break;
      case VariableKind::proportion_mean:
        if (!(v.mu >= 0.0 && v.mu <= 1.0)) throw ConfigError(where + " needs mu in [0, 1]");
        if (v.sigma_across && *v.sigma_across < 0.0) throw ConfigError(where + " has negative sigma_across");
        break;
      case VariableKind::binary_time_varying:
      case VariableKind::binary_static:
        if (!v.prevalence || !(*v.prevalence >= 0.0 && *v.prevalence <= 1.0))
          throw ConfigError(where + " needs prevalence in [0, 1]");
        break;
      case VariableKind::categorical: break;
    }
    if (v.prevalence && !v.is_binary()) throw ConfigError(where + ": prevalence is only valid for binary kinds");
    if (v.slope_sd && v.kind != VariableKind::time_function)
      throw ConfigError(where + ": slope_sd is only valid for time_function");
    if (v.sigma_within && *v.sigma_within < 0.0) throw ConfigError(where + " has negative sigma_within");
    if (v.clamp && !(v.clamp->lo <= v.clamp->hi)) throw ConfigError(where + " has clamp_lo > clamp_hi");
  }
  if (ids > 1) throw ConfigError("variables.csv: more than one id variable");

  const std::size_t nv = variables_.size();
  partner_.assign(nv, npos);
  std::vector<bool> paired(nv, false);
  for (std::size_t i = 0; i < nv; ++i) {
    if (variables_[i].kind != VariableKind::binary_time_varying) continue;
    const std::size_t p = index_of(variables_[i].name + std::string(kProportionSuffix));
    if (p == npos || variables_[p].kind != VariableKind::proportion_mean)
      throw ConfigError("variables.csv: binary_time_varying '" + variables_[i].name + "' needs a proportion_mean '" +
                        variables_[i].name + std::string(kProportionSuffix) + "'");
    partner_[i] = p;
    paired[p] = true;
  }
  for (std::size_t i = 0; i < nv; ++i)
    if (variables_[i].kind == VariableKind::proportion_mean && !paired[i])
      throw ConfigError("variables.csv: proportion_mean '" + variables_[i].name +
                        "' does not name a binary_time_varying variable");

  across_vars_.clear();
  within_vars_.clear();
  cohort_vars_.clear();
  cohort_column_.assign(nv, npos);
  std::vector<std::string> across_names, within_names;
  for (std::size_t i = 0; i < nv; ++i) {
    const VariableKind k = variables_[i].kind;
    if (in_across(k)) {
      across_vars_.push_back(i);
      across_names.push_back(variables_[i].name);
    }
    if (in_within(k)) {
      within_vars_.push_back(i);
      within_names.push_back(variables_[i].name);
    }
    if (k != VariableKind::id) {
      cohort_column_[i] = cohort_vars_.size();
      cohort_vars_.push_back(i);
    }
  }

  check_correlation_matrix(correlations_.sigma_a, correlations_.across_names, "corr_across.csv");
  if (correlations_.across_names.size() != across_names.size())
    throw ConfigError("corr_across.csv names " + std::to_string(correlations_.across_names.size()) +
                      " variables but variables.csv declares " + std::to_string(across_names.size()) +
                      " non-id, non-categorical variables");
  const Eigen::MatrixXd across = select_named(correlations_.sigma_a, correlations_.across_names, across_names,
                                              "corr_across.csv");
  correlations_.sigma_a = across;
  correlations_.across_names = across_names;

  check_correlation_matrix(correlations_.sigma_w, correlations_.within_names, "corr_within.csv");
  for (const auto& n : correlations_.within_names)
    if (std::find(across_names.begin(), across_names.end(), n) == across_names.end())
      throw ConfigError("corr_within.csv column '" + n + "' is not a non-id, non-categorical variable in variables.csv");
  within_target_ = select_named(correlations_.sigma_w, correlations_.within_names, within_names, "corr_within.csv");

  std::vector<LatentColumn> cols;
  for (std::size_t v : across_vars_) cols.push_back({variables_[v].is_binary(), variables_[v].prevalence.value_or(0.0)});
  across_latent_ = build_latent_corr(across, cols, nullptr);
  for (const auto& e : across_latent_.repair_log) {
    warn(diag, "corr_across.csv: (" + across_names[e.row] + ", " + across_names[e.col] + ") adjusted from " +
                   csv::format(e.requested) + " to " + csv::format(e.applied) + " (" + e.reason + ")");
    correlations_.repair_log.push_back(e);
  }

  std::set<std::string> cat_names;
  for (const auto& c : categoricals_) {
    const std::size_t vi = index_of(c.name);
    if (vi == npos || variables_[vi].kind != VariableKind::categorical)
      throw ConfigError("categorical config: '" + c.name + "' is not a categorical variable in variables.csv");
    if (!cat_names.insert(c.name).second) throw ConfigError("categorical config: duplicate model for '" + c.name + "'");
    if (c.levels.size() < 2) throw ConfigError("categorical config: '" + c.name + "' needs at least 2 levels");
    std::set<std::string> lv(c.levels.begin(), c.levels.end());
    if (lv.size() != c.levels.size()) throw ConfigError("categorical config: '" + c.name + "' has duplicate levels");
    for (const auto& l : c.levels)
      if (!valid_identifier(l)) throw ConfigError("categorical config: invalid level name '" + l + "'");
    if (c.coefficients.size() != c.levels.size() - 1)
      throw ConfigError("categorical config: '" + c.name + "' needs coefficients for each of " +
                        std::to_string(c.levels.size() - 1) + " non-reference levels");
    for (const auto& w : c.coefficients)
      if (w.size() != c.covariates.size() + 1)
        throw ConfigError("categorical config: '" + c.name + "' coefficient vectors must have " +
                          std::to_string(c.covariates.size() + 1) + " entries (intercept + one per covariate)");
    for (const auto& cov : c.covariates) {
      const std::size_t ci = index_of(cov);
      if (ci == npos || variables_[ci].kind == VariableKind::id || variables_[ci].kind == VariableKind::categorical)
        throw ConfigError("categorical config: covariate '" + cov + "' of '" + c.name +
                          "' is not a numeric variable in variables.csv");
    }
  }
  for (std::size_t i = 0; i < nv; ++i)
    if (variables_[i].kind == VariableKind::categorical && !cat_names.count(variables_[i].name))
      throw ConfigError("variables.csv: categorical '" + variables_[i].name + "' has no model in the categorical config");
}

std::size_t CohortTable::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  return static_cast<std::size_t>(-1);
}

std::vector<SubjectProfile> gen_profiles(const CovariateModel& model, std::size_t n, const StreamSeed& seeds) {
  const auto& vars = model.variables();
  const auto& across = model.across_vars();
  std::vector<JointSampler::Column> cols;
  cols.reserve(across.size());
  for (std::size_t v : across) {
    const VariableSpec& spec = vars[v];
    if (spec.is_binary())
      cols.push_back({true, spec.prevalence.value_or(0.0), 0.0, 0.0});
    else
      cols.push_back({false, 0.0, spec.mu, model.across_sd(v, n)});
  }
  const JointSampler sampler(model.across_latent().latent, std::move(cols));

  std::vector<SubjectProfile> profiles(n);
  std::vector<double> row(across.size());
  for (std::size_t s = 0; s < n; ++s) {
    RandomStream rng = seeds.stream(Purpose::profiles, s);
    sampler.draw(rng, row);
    SubjectProfile& p = profiles[s];
    p.subject_id = s + 1;
    p.means.assign(vars.size(), 0.0);
    p.slopes.assign(vars.size(), 0.0);
    p.indicators.assign(vars.size(), 0);
    for (std::size_t k = 0; k < across.size(); ++k) {
      const std::size_t v = across[k];
      if (vars[v].is_binary())
        p.indicators[v] = row[k] != 0.0 ? 1 : 0;
      else
        p.means[v] = row[k];
    }
    for (std::size_t v = 0; v < vars.size(); ++v)
      if (vars[v].kind == VariableKind::time_function) p.slopes[v] = vars[v].slope_sd.value_or(0.0) * rng.normal();
  }
  return profiles;
}

namespace {

std::shared_ptr<const WithinStructure> build_within(const CovariateModel& model, const std::vector<double>& prevalence) {
  const auto& vars = model.variables();
  const auto& within = model.within_vars();
  std::vector<LatentColumn> cols(within.size());
  std::vector<JointSampler::Column> sampler_cols(within.size());
  for (std::size_t k = 0; k < within.size(); ++k) {
    const bool binary = vars[within[k]].is_binary();
    cols[k] = {binary, prevalence[k]};
    sampler_cols[k] = {binary, prevalence[k], 0.0, 1.0};
  }
  auto ws = std::make_shared<WithinStructure>();
  LatentCorrelation lc = build_latent_corr(model.within_target(), cols, nullptr);
  ws->latent = std::move(lc.latent);
  ws->prevalence = prevalence;
  ws->adjusted_entries = lc.repair_log.size();
  ws->sampler = std::make_shared<JointSampler>(ws->latent, std::move(sampler_cols));
  return ws;
}

}  // namespace

std::vector<SubjectProfile> housekeep(std::vector<SubjectProfile> profiles, const CovariateModel& model,
                                      Diagnostics* diag, unsigned workers) {
  const auto& vars = model.variables();
  const auto& within = model.within_vars();
  std::size_t clamped = 0;

  std::vector<std::vector<double>> keys(profiles.size());
  for (std::size_t s = 0; s < profiles.size(); ++s) {
    SubjectProfile& p = profiles[s];
    for (std::size_t v = 0; v < vars.size(); ++v) {
      if (vars[v].kind != VariableKind::binary_time_varying) continue;
      const std::size_t prop = model.partner(v);
      if (p.indicators[v] == 0) p.means[prop] = 0.0;
      const double c = std::clamp(p.means[prop], 0.0, 1.0);
      if (c != p.means[prop]) {
        p.means[prop] = c;
        ++clamped;
      }
    }
    keys[s].assign(within.size(), 0.0);
    for (std::size_t k = 0; k < within.size(); ++k)
      if (vars[within[k]].is_binary()) keys[s][k] = p.means[model.partner(within[k])];
  }

  std::map<std::vector<double>, std::size_t> unique;
  std::vector<const std::vector<double>*> unique_keys;
  std::vector<std::size_t> slot(profiles.size());
  for (std::size_t s = 0; s < profiles.size(); ++s) {
    auto [it, inserted] = unique.try_emplace(keys[s], unique_keys.size());
    if (inserted) unique_keys.push_back(&it->first);
    slot[s] = it->second;
  }
  std::vector<std::shared_ptr<const WithinStructure>> structures(unique_keys.size());
  parallel_for(unique_keys.size(), workers, [&](std::size_t u) { structures[u] = build_within(model, *unique_keys[u]); });

  for (std::size_t s = 0; s < profiles.size(); ++s) profiles[s].within = structures[slot[s]];
  if (clamped > 0)
    warn(diag, std::to_string(clamped) + " drug proportions fell outside [0, 1] and were set to the nearest bound");
  return profiles;
}

std::vector<double> expand_subject(const SubjectProfile& profile, const CovariateModel& model, std::size_t m,
                                   RandomStream& rng) {
  if (!profile.within) throw std::logic_error("expand_subject: profile has not been housekept");
  const auto& vars = model.variables();
  const auto& within = model.within_vars();
  const std::size_t width = model.cohort_vars().size();
  const JointSampler& sampler = *profile.within->sampler;
  const auto& thresholds = sampler.thresholds();

  std::vector<double> block(m * width, 0.0);
  std::vector<double> z(within.size());

  // Static columns first.
  for (std::size_t v = 0; v < vars.size(); ++v) {
    const std::size_t c = model.cohort_column(v);
    if (c == CovariateModel::npos) continue;
    double value;
    if (vars[v].kind == VariableKind::proportion_mean)
      value = profile.means[v];
    else if (vars[v].kind == VariableKind::binary_static)
      value = profile.indicators[v];
    else
      continue;
    for (std::size_t t = 0; t < m; ++t) block[t * width + c] = value;
  }

  for (std::size_t t = 1; t <= m; ++t) {
    sampler.draw_latent(rng, z);
    double* row = block.data() + (t - 1) * width;
    for (std::size_t k = 0; k < within.size(); ++k) {
      const std::size_t v = within[k];
      const VariableSpec& spec = vars[v];
      double x;
      switch (spec.kind) {
        case VariableKind::binary_time_varying: x = z[k] > thresholds[k] ? 1.0 : 0.0; break;
        case VariableKind::time_function:
          x = profile.means[v] + profile.slopes[v] * static_cast<double>(t) + spec.within_sd() * z[k];
          break;
        default: x = profile.means[v] + spec.within_sd() * z[k]; break;
      }
      if (spec.clamp && !spec.is_binary()) x = std::clamp(x, spec.clamp->lo, spec.clamp->hi);
      row[model.cohort_column(v)] = x;
    }
  }
  return block;
}

std::vector<double> categorical_probabilities(const CategoricalSpec& spec, std::span<const double> baseline) {
  if (baseline.size() != spec.covariates.size())
    throw ConfigError("categorical '" + spec.name + "': expected " + std::to_string(spec.covariates.size()) +
                      " baseline covariates, got " + std::to_string(baseline.size()));
  std::vector<double> eta(spec.levels.size(), 0.0);
  for (std::size_t l = 1; l < spec.levels.size(); ++l) {
    const auto& w = spec.coefficients[l - 1];
    if (w.size() != baseline.size() + 1)
      throw ConfigError("categorical '" + spec.name + "': coefficient arity mismatch");
    double e = w[0];
    for (std::size_t k = 0; k < baseline.size(); ++k) e += w[k + 1] * baseline[k];
    eta[l] = e;
  }
  const double mx = *std::max_element(eta.begin(), eta.end());
  double total = 0.0;
  for (double& e : eta) {
    e = std::exp(e - mx);
    total += e;
  }
  for (double& e : eta) e /= total;
  return eta;
}

std::vector<std::size_t> gen_categorical(const CategoricalSpec& spec, std::span<const double> baseline, std::size_t n,
                                         const StreamSeed& seeds) {
  const std::size_t k = spec.covariates.size();
  if (baseline.size() != n * k) throw ConfigError("categorical '" + spec.name + "': baseline matrix has wrong shape");
  std::vector<std::size_t> level(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    const auto probs = categorical_probabilities(spec, baseline.subspan(s * k, k));
    RandomStream rng = seeds.stream(Purpose::categorical, s);
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = probs.size() - 1;
    for (std::size_t l = 0; l < probs.size(); ++l) {
      acc += probs[l];
      if (u < acc) {
        pick = l;
        break;
      }
    }
    level[s] = pick;
  }
  return level;
}

CohortTable gen_cohort(const CovariateModel& model, std::size_t n, std::size_t m, const StreamSeed& seeds,
                       unsigned workers, Diagnostics* diag) {
  if (m == 0) throw ConfigError("number of intervals must be at least 1");
  const auto& vars = model.variables();
  CohortTable table;
  table.subjects = n;
  table.intervals = m;
  for (std::size_t v : model.cohort_vars()) {
    table.columns.push_back(vars[v].name);
    table.kinds.push_back(vars[v].kind);
    std::vector<std::string> levels;
    if (vars[v].kind == VariableKind::categorical)
      for (const auto& c : model.categoricals())
        if (c.name == vars[v].name) levels = c.levels;
    table.levels.push_back(std::move(levels));
  }
  const std::size_t width = table.width();
  table.values.assign(n * m * width, 0.0);

  auto profiles = housekeep(gen_profiles(model, n, seeds), model, diag, workers);
  parallel_for(n, workers, [&](std::size_t s) {
    RandomStream rng = seeds.stream(Purpose::within, s);
    const auto block = expand_subject(profiles[s], model, m, rng);
    std::copy(block.begin(), block.end(), table.values.begin() + static_cast<std::ptrdiff_t>(s * m * width));
  });

  for (const auto& spec : model.categoricals()) {
    const std::size_t col = table.column_index(spec.name);
    std::vector<std::size_t> cov_cols;
    for (const auto& c : spec.covariates) cov_cols.push_back(table.column_index(c));
    std::vector<double> baseline(n * cov_cols.size());
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t k = 0; k < cov_cols.size(); ++k) baseline[s * cov_cols.size() + k] = table.at(s, 1, cov_cols[k]);
    const auto level = gen_categorical(spec, baseline, n, seeds);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t t = 1; t <= m; ++t)
        table.values[table.row_index(s, t) * width + col] = static_cast<double>(level[s]);
  }
  return table;
}

std::string cohort_csv(const CohortTable& cohort) {
  std::string out = "subject_id,t";
  for (const auto& c : cohort.columns) out += "," + c;
  out += "\n";
  for (std::size_t s = 0; s < cohort.subjects; ++s) {
    for (std::size_t t = 1; t <= cohort.intervals; ++t) {
      out += std::to_string(s + 1);
      out += ',';
      out += std::to_string(t);
      const auto row = cohort.row(s, t);
      for (std::size_t c = 0; c < cohort.width(); ++c) {
        out += ',';
        if (cohort.kinds[c] == VariableKind::categorical)
          out += cohort.levels[c][static_cast<std::size_t>(row[c])];
        else
          out += csv::format(row[c]);
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace longsim
