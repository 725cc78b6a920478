#include "longsim/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <set>

#include "longsim/csv.hpp"

namespace longsim {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = s.find(',', start);
    out.emplace_back(trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto res = std::from_chars(s.data(), end, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != end) return std::nullopt;
  return v;
}

std::filesystem::path resolve_path(const std::filesystem::path& base_dir, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::string_view text, const std::string& source) {
  KeyValueFile kv;
  kv.source_ = source;
  std::size_t pos = 0, line_no = 0, order = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, line_no, "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty() || key.find_first_of(" \t") != std::string::npos)
      throw ParseError(source, line_no, "invalid key '" + key + "'");
    if (kv.entries_.count(key)) throw ParseError(source, line_no, "duplicate key '" + key + "'");
    kv.entries_[key] = {std::string(trim(line.substr(eq + 1))), line_no, order++};
  }
  return kv;
}

KeyValueFile KeyValueFile::read(const std::filesystem::path& path) { return parse(csv::read_file(path), path.string()); }

std::optional<std::string> KeyValueFile::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  used_[key] = true;
  return it->second.value;
}

std::string KeyValueFile::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw ConfigError(source_ + ": missing required key '" + key + "'");
  return *v;
}

std::size_t KeyValueFile::line_of(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.line;
}

double KeyValueFile::number(const std::string& key) const {
  const auto v = parse_double(require(key));
  if (!v) throw ParseError(source_, line_of(key), "'" + key + "' is not a number");
  return *v;
}

std::optional<double> KeyValueFile::number_or(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return number(key);
}

std::uint64_t KeyValueFile::count(const std::string& key) const {
  const std::string s = require(key);
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError(source_, line_of(key), "'" + key + "' is not a non-negative integer");
  return v;
}

std::vector<std::string> KeyValueFile::list(const std::string& key) const {
  auto items = split_list(require(key));
  for (const auto& item : items)
    if (item.empty()) throw ParseError(source_, line_of(key), "'" + key + "' has an empty list element");
  return items;
}

std::vector<double> KeyValueFile::numbers(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : list(key)) {
    const auto v = parse_double(item);
    if (!v) throw ParseError(source_, line_of(key), "'" + key + "': '" + item + "' is not a number");
    out.push_back(*v);
  }
  return out;
}

std::vector<std::string> KeyValueFile::keys_with_prefix(std::string_view prefix) const {
  std::vector<std::pair<std::size_t, std::string>> found;
  for (const auto& [k, e] : entries_)
    if (k.compare(0, prefix.size(), prefix) == 0) found.emplace_back(e.order, k);
  std::sort(found.begin(), found.end());
  std::vector<std::string> out;
  for (auto& f : found) out.push_back(std::move(f.second));
  return out;
}

std::vector<std::string> KeyValueFile::unused() const {
  std::vector<std::pair<std::size_t, std::string>> found;
  for (const auto& [k, e] : entries_)
    if (!used_.count(k)) found.emplace_back(e.order, k);
  std::sort(found.begin(), found.end());
  std::vector<std::string> out;
  for (auto& f : found) out.push_back(std::move(f.second));
  return out;
}

std::vector<VariableSpec> load_variables(const std::filesystem::path& path, Diagnostics* diag) {
  const csv::Table t = csv::read(path);
  static const std::set<std::string> known = {"name",       "kind",     "mu",       "sigma_across", "sigma_within",
                                              "prevalence", "slope_sd", "clamp_lo", "clamp_hi"};
  for (const auto& h : t.header)
    if (!known.count(h)) throw ParseError(t.source, 1, "unknown column '" + h + "'");
  if (t.column("name") == csv::Table::npos || t.column("kind") == csv::Table::npos)
    throw ParseError(t.source, 1, "columns 'name' and 'kind' are required");
  const bool has_within = t.column("sigma_within") != csv::Table::npos;

  auto cell = [&](std::size_t r, const char* col) -> std::optional<double> {
    const std::size_t c = t.column(col);
    if (c == csv::Table::npos || t.rows[r][c].empty()) return std::nullopt;
    return csv::to_double(t.rows[r][c], t, r);
  };

  std::vector<VariableSpec> vars;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    VariableSpec v;
    v.name = t.rows[r][t.column("name")];
    const auto kind = parse_variable_kind(t.rows[r][t.column("kind")]);
    if (!kind) throw ParseError(t.source, t.line_numbers[r], "unknown kind '" + t.rows[r][t.column("kind")] + "'");
    v.kind = *kind;
    const auto mu = cell(r, "mu");
    const bool needs_mu = v.kind == VariableKind::normal || v.kind == VariableKind::time_function ||
                          v.kind == VariableKind::proportion_mean;
    if (needs_mu && !mu) throw ParseError(t.source, t.line_numbers[r], "variable '" + v.name + "' needs mu");
    v.mu = mu.value_or(0.0);
    v.sigma_across = cell(r, "sigma_across");
    v.sigma_within = cell(r, "sigma_within");
    v.prevalence = cell(r, "prevalence");
    v.slope_sd = cell(r, "slope_sd");
    const auto lo = cell(r, "clamp_lo"), hi = cell(r, "clamp_hi");
    if (lo || hi) v.clamp = ClampBounds{lo.value_or(-HUGE_VAL), hi.value_or(HUGE_VAL)};
    if ((v.kind == VariableKind::normal || v.kind == VariableKind::time_function) && !v.sigma_within) {
      warn(diag, t.source + ": variable '" + v.name + "' has no sigma_within" + (has_within ? "" : " column") +
                     "; using sigma_across / 3 = " + csv::format(v.within_sd()));
    }
    vars.push_back(std::move(v));
  }
  return vars;
}

NamedMatrix load_matrix(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  NamedMatrix out;
  out.names = t.header;
  const auto n = static_cast<Eigen::Index>(t.header.size());
  if (static_cast<Eigen::Index>(t.rows.size()) != n)
    throw ConfigError(t.source + ": " + std::to_string(t.rows.size()) + " rows for " + std::to_string(n) +
                      " named columns; the matrix must be square");
  out.values.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      out.values(i, j) = csv::to_double(t.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], t,
                                        static_cast<std::size_t>(i));
  return out;
}

std::vector<CategoricalSpec> load_categoricals(const KeyValueFile& kv) {
  std::vector<std::string> names;
  for (const auto& key : kv.keys_with_prefix("categorical.")) {
    const std::string rest = key.substr(std::string("categorical.").size());
    const std::string name = rest.substr(0, rest.find('.'));
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
  }
  std::vector<CategoricalSpec> out;
  for (const auto& name : names) {
    const std::string base = "categorical." + name + ".";
    CategoricalSpec spec;
    spec.name = name;
    auto levels = kv.list(base + "levels");
    const std::string reference = kv.get(base + "reference").value_or(levels.front());
    const auto ref = std::find(levels.begin(), levels.end(), reference);
    if (ref == levels.end())
      throw ParseError(kv.source(), kv.line_of(base + "reference"), "reference level '" + reference + "' is not listed");
    spec.levels.push_back(reference);
    for (const auto& l : levels)
      if (l != reference) spec.levels.push_back(l);
    if (kv.has(base + "covariates")) spec.covariates = kv.list(base + "covariates");
    for (std::size_t l = 1; l < spec.levels.size(); ++l) {
      const std::string key = base + "level." + spec.levels[l];
      spec.coefficients.push_back(kv.numbers(key));
    }
    for (const auto& key : kv.keys_with_prefix(base + "level.")) {
      const std::string lvl = key.substr((base + "level.").size());
      if (lvl == reference)
        throw ParseError(kv.source(), kv.line_of(key), "the reference level '" + lvl + "' takes no coefficients");
      if (std::find(spec.levels.begin(), spec.levels.end(), lvl) == spec.levels.end())
        throw ParseError(kv.source(), kv.line_of(key), "coefficients for unlisted level '" + lvl + "'");
    }
    out.push_back(std::move(spec));
  }
  return out;
}

CovariateModel load_covariate_model(const std::filesystem::path& variables, const std::filesystem::path& corr_across,
                                    const std::filesystem::path& corr_within,
                                    const std::optional<std::filesystem::path>& categorical, Diagnostics* diag) {
  auto vars = load_variables(variables, diag);
  const NamedMatrix across = load_matrix(corr_across);
  const NamedMatrix within = load_matrix(corr_within);
  CorrelationSpec corr;
  corr.across_names = across.names;
  corr.sigma_a = across.values;
  corr.within_names = within.names;
  corr.sigma_w = within.values;
  std::vector<CategoricalSpec> cats;
  if (categorical) {
    const KeyValueFile kv = KeyValueFile::read(*categorical);
    cats = load_categoricals(kv);
    for (const auto& k : kv.unused()) warn(diag, kv.source() + ": ignoring unknown key '" + k + "'");
  }
  try {
    return CovariateModel(std::move(vars), std::move(corr), std::move(cats), diag);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + " [variables: " + variables.string() + ", across: " +
                      corr_across.string() + ", within: " + corr_within.string() + "]");
  }
}

OutcomeConfig load_outcome(const KeyValueFile& kv, const std::filesystem::path& base_dir, Diagnostics* diag) {
  OutcomeConfig out;
  out.event_kind = kv.require("event.distribution");
  if (out.event_kind == "weibull") {
    out.event_params = {kv.number("event.shape"), kv.number("event.scale")};
  } else if (out.event_kind == "uniform") {
    out.event_params = {kv.number("event.lo"), kv.number("event.hi")};
  } else if (out.event_kind == "pmf") {
    if (kv.has("event.pmf_path"))
      out.pmf_path = resolve_path(base_dir, kv.require("event.pmf_path"));
    else
      out.pmf_weights = kv.numbers("event.pmf_weights");
  } else {
    throw ParseError(kv.source(), kv.line_of("event.distribution"),
                     "event.distribution must be pmf, weibull or uniform");
  }

  if (kv.has("censoring.distribution")) {
    const std::string c = kv.require("censoring.distribution");
    if (c == "weibull")
      out.spec.censoring = WeibullDist{kv.number("censoring.shape"), kv.number("censoring.scale")};
    else if (c == "uniform")
      out.spec.censoring = UniformDist{kv.number("censoring.lo"), kv.number("censoring.hi")};
    else
      throw ParseError(kv.source(), kv.line_of("censoring.distribution"), "censoring.distribution must be weibull or uniform");
  } else {
    out.spec.censor_target = kv.number("censoring.target");
    const std::string family = kv.get("censoring.family").value_or("uniform");
    if (family == "uniform")
      out.spec.family = CensoringFamily::uniform;
    else if (family == "weibull")
      out.spec.family = CensoringFamily::weibull;
    else
      throw ParseError(kv.source(), kv.line_of("censoring.family"), "censoring.family must be uniform or weibull");
    out.spec.censor_shape = kv.number_or("censoring.shape").value_or(1.0);
  }

  for (const auto& key : kv.keys_with_prefix("beta.")) {
    out.truth.terms.push_back(key.substr(5));
    out.truth.beta.push_back(kv.number(key));
    if (!std::isfinite(out.truth.beta.back()))
      throw ParseError(kv.source(), kv.line_of(key), "coefficient must be finite");
  }
  if (out.truth.terms.empty()) throw ConfigError(kv.source() + ": no 'beta.<term>' coefficients given");
  if (kv.has("fit.terms")) out.fit_terms = kv.list("fit.terms");

  if (kv.has("power.drugs")) {
    out.power.drugs = kv.list("power.drugs");
    out.power.hazard_ratios = kv.numbers("power.hazard_ratios");
    out.power.prevalences = kv.numbers("power.prevalences");
    if (out.power.hazard_ratios.size() != out.power.drugs.size() ||
        out.power.prevalences.size() != out.power.drugs.size())
      throw ConfigError(kv.source() + ": power.drugs, power.hazard_ratios and power.prevalences differ in length");
  }
  out.power.alpha = kv.number_or("power.alpha").value_or(0.05);
  if (!(out.power.alpha > 0.0 && out.power.alpha < 1.0))
    throw ParseError(kv.source(), kv.line_of("power.alpha"), "power.alpha must lie in (0, 1)");
  for (const auto& k : kv.unused()) warn(diag, kv.source() + ": ignoring unknown key '" + k + "'");
  return out;
}

TimeDistribution event_distribution(const OutcomeConfig& outcome, std::size_t m) {
  if (outcome.event_kind == "weibull") return WeibullDist{outcome.event_params[0], outcome.event_params[1]};
  if (outcome.event_kind == "uniform") return UniformDist{outcome.event_params[0], outcome.event_params[1]};
  if (outcome.pmf_path) {
    const csv::Table t = csv::read(*outcome.pmf_path);
    const std::size_t c = t.column("time");
    if (c == csv::Table::npos) throw ParseError(t.source, 1, "missing column 'time'");
    std::vector<double> raw;
    raw.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      raw.push_back(csv::to_double(t.rows[r][c], t, r));
      if (!(raw.back() > 0.0)) throw ParseError(t.source, t.line_numbers[r], "times must be positive");
    }
    if (raw.empty()) throw ParseError(t.source, 1, "no event times");
    const auto grid = rescale_times(raw, m);
    return make_pmf(grid, m);
  }
  if (outcome.pmf_weights.size() != m)
    throw ConfigError("event.pmf_weights has " + std::to_string(outcome.pmf_weights.size()) +
                      " entries but the cohort has " + std::to_string(m) + " intervals");
  return EmpiricalPmf{outcome.pmf_weights};
}

std::optional<Scale> scale_preset(std::string_view name) {
  if (name == "desk") return Scale{500, 50, 200};
  if (name == "paper") return Scale{2000, 200, 2000};
  return std::nullopt;
}

std::vector<std::filesystem::path> RunConfig::input_files() const {
  std::vector<std::filesystem::path> files = {config_path, variables, corr_across, corr_within};
  if (categorical) files.push_back(*categorical);
  if (outcome) files.push_back(*outcome);
  files.insert(files.end(), data_files.begin(), data_files.end());
  return files;
}

RunConfig load_run_config(const std::filesystem::path& path, const RunOverrides& overrides, Diagnostics* diag) {
  const KeyValueFile kv = KeyValueFile::read(path);
  const std::filesystem::path base = path.parent_path();
  RunConfig rc;
  rc.config_path = path;
  rc.variables = resolve_path(base, kv.require("files.variables"));
  rc.corr_across = resolve_path(base, kv.require("files.corr_across"));
  rc.corr_within = resolve_path(base, kv.require("files.corr_within"));
  if (auto c = kv.get("files.categorical")) rc.categorical = resolve_path(base, *c);
  if (auto o = kv.get("files.outcome")) rc.outcome = resolve_path(base, *o);
  if (kv.has("cohort.subjects")) rc.subjects = kv.count("cohort.subjects");
  if (kv.has("cohort.intervals")) rc.intervals = kv.count("cohort.intervals");
  if (kv.has("study.replications")) rc.replications = kv.count("study.replications");
  if (kv.has("study.seed")) rc.seed = kv.count("study.seed");
  if (kv.has("study.workers")) rc.workers = static_cast<unsigned>(kv.count("study.workers"));
  if (auto o = kv.get("output.dir")) rc.output_dir = resolve_path(base, *o);
  for (const auto& k : kv.unused()) warn(diag, kv.source() + ": ignoring unknown key '" + k + "'");

  if (overrides.scale) {
    const auto s = scale_preset(*overrides.scale);
    if (!s) throw ConfigError("unknown scale '" + *overrides.scale + "' (expected desk or paper)");
    rc.subjects = s->subjects;
    rc.intervals = s->intervals;
    rc.replications = s->replications;
  }
  if (overrides.seed) rc.seed = *overrides.seed;
  if (overrides.replications) rc.replications = *overrides.replications;
  if (overrides.workers) rc.workers = *overrides.workers;
  if (overrides.output_dir) rc.output_dir = *overrides.output_dir;
  if (const char* env = std::getenv("LONGSIM_WORKERS"); env != nullptr && *env != '\0') {
    unsigned w = 0;
    const std::string_view s(env);
    auto res = std::from_chars(s.data(), s.data() + s.size(), w);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw ConfigError("LONGSIM_WORKERS must be a non-negative integer, got '" + std::string(s) + "'");
    rc.workers = w;
  }

  if (rc.subjects < 1) throw ConfigError(kv.source() + ": cohort.subjects must be at least 1");
  if (rc.intervals < 1) throw ConfigError(kv.source() + ": cohort.intervals must be at least 1");
  if (rc.replications < 1) throw ConfigError("replications must be at least 1");
  for (const auto& f : rc.input_files())
    if (!std::filesystem::is_regular_file(f)) throw ConfigError("referenced file does not exist: " + f.string());
  return rc;
}

std::uint64_t config_hash(const RunConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& f : config.input_files()) {
    const std::string bytes = csv::read_file(f);
    for (unsigned char c : bytes) feed(c);
    // Length separator so moving bytes between files changes the hash.
    for (int i = 0; i < 8; ++i) feed(static_cast<unsigned char>(bytes.size() >> (8 * i)));
  }
  // Files that are absent still count as a distinct configuration.
  feed(config.categorical ? 1 : 0);
  feed(config.outcome ? 1 : 0);
  return h;
}

LoadedRun load_run(const std::filesystem::path& path, const RunOverrides& overrides, bool need_outcome,
                   Diagnostics* diag) {
  LoadedRun lr;
  lr.run = load_run_config(path, overrides, diag);
  if (need_outcome && !lr.run.outcome) throw ConfigError(path.string() + ": missing required key 'files.outcome'");
  lr.covariates = std::make_shared<const CovariateModel>(load_covariate_model(
      lr.run.variables, lr.run.corr_across, lr.run.corr_within, lr.run.categorical, diag));
  if (lr.run.outcome) {
    const KeyValueFile kv = KeyValueFile::read(*lr.run.outcome);
    lr.outcome = load_outcome(kv, lr.run.outcome->parent_path(), diag);
    if (lr.outcome->pmf_path) lr.run.data_files.push_back(*lr.outcome->pmf_path);
    lr.study.covariates = lr.covariates;
    lr.study.outcome = lr.outcome->spec;
    lr.study.outcome.event = event_distribution(*lr.outcome, lr.run.intervals);
    lr.study.truth = lr.outcome->truth;
    lr.study.fit_terms = lr.outcome->fit_terms;
    lr.study.subjects = lr.run.subjects;
    lr.study.intervals = lr.run.intervals;
  }
  return lr;
}

}  // namespace longsim
