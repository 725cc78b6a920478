// longsim: generate, simulate, evaluate and power-study runs from a config.
//
// Exit status: 0 success, 1 configuration error, 2 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "longsim/config.hpp"
#include "longsim/coxfit.hpp"
#include "longsim/csv.hpp"
#include "longsim/kernels.hpp"
#include "longsim/outcomegen.hpp"
#include "longsim/parallel.hpp"
#include "longsim/study.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace longsim;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
  std::optional<unsigned> workers;
  std::optional<std::string> out;
  std::optional<std::string> scale;
};

RunOverrides overrides(const Options& o) {
  RunOverrides r;
  r.scale = o.scale;
  r.seed = o.seed;
  r.replications = o.reps;
  r.workers = o.workers;
  if (o.out) r.output_dir = *o.out;
  return r;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json manifest(const std::string& command, const RunConfig& rc) {
  json m;
  m["tool"] = "longsim";
  m["version"] = kVersion;
  m["command"] = command;
  m["config_hash"] = hex64(config_hash(rc));
  json inputs = json::array();
  for (const auto& f : rc.input_files()) inputs.push_back(f.filename().string());
  m["inputs"] = inputs;
  m["subjects"] = rc.subjects;
  m["intervals"] = rc.intervals;
  m["master_seed"] = rc.seed;
  m["seed_rule"] = "splitmix64 chain over (master_seed, scenario, replication)";
  m["simd_backend"] = std::string(kernels::name(kernels::active().backend));
  return m;
}

void finish(json& m, const Diagnostics& diag, const fs::path& dir) {
  json w = json::array();
  for (const auto& s : diag.warnings()) w.push_back(s);
  m["warnings"] = w;
  csv::write_file(dir / "study.json", m.dump(2) + "\n");
}

void report_warnings(const Diagnostics& diag) {
  for (const auto& w : diag.warnings()) std::cerr << "warning: " << w << "\n";
}

json fit_json(const FitResult& f) {
  json j;
  json beta = json::object(), se = json::object();
  for (std::size_t k = 0; k < f.names.size(); ++k) {
    beta[f.names[k]] = f.beta_hat(static_cast<Eigen::Index>(k));
    se[f.names[k]] = f.se(static_cast<Eigen::Index>(k));
  }
  j["beta_hat"] = beta;
  j["se"] = se;
  j["loglik"] = f.loglik;
  j["iterations"] = f.iterations;
  j["converged"] = f.converged;
  j["gradient_norm"] = f.gradient_norm;
  j["message"] = f.message;
  return j;
}

std::size_t total_workers(const RunConfig& rc) { return resolve_workers(rc.workers); }

int cmd_generate(const Options& o, bool with_outcome) {
  Diagnostics diag;
  const LoadedRun lr = load_run(o.config, overrides(o), with_outcome, &diag);
  fs::create_directories(lr.run.output_dir);
  const std::uint64_t seed = replication_seed(lr.run.seed, 0, 0);
  const StreamSeed seeds{seed, 0};
  const unsigned workers = static_cast<unsigned>(total_workers(lr.run));

  json m = manifest(with_outcome ? "simulate" : "generate", lr.run);
  m["replications"] = 1;
  m["replication_seeds"] = json::array({seed});
  if (!lr.covariates->correlations().repair_log.empty())
    csv::write_file(lr.run.output_dir / "repair_log.csv", repair_log_csv(lr.covariates->correlations().repair_log));

  if (!with_outcome) {
    const CohortTable cohort = gen_cohort(*lr.covariates, lr.run.subjects, lr.run.intervals, seeds, workers, &diag);
    csv::write_file(lr.run.output_dir / "cohort.csv", cohort_csv(cohort));
  } else {
    const ResolvedOutcome outcome = resolve_outcome(lr.study.outcome, lr.run.intervals, lr.run.seed);
    const SimulatedData data = simulate(lr.study, outcome, seeds, workers, &diag);
    csv::write_file(lr.run.output_dir / "cohort.csv", cohort_csv(data.cohort));
    const AnalysisTable table = truncate_history(data.cohort, data.assignment);
    csv::write_file(lr.run.output_dir / "outcome.csv", analysis_csv(table));
    m["event_distribution"] = describe(outcome.event);
    m["censoring_distribution"] = describe(outcome.censoring);
    m["censored_fraction_target"] = outcome.censored_fraction;
    m["events"] = std::count(data.assignment.event.begin(), data.assignment.event.end(), 1);
  }
  report_warnings(diag);
  finish(m, diag, lr.run.output_dir);
  return 0;
}

int cmd_evaluate(const Options& o) {
  Diagnostics diag;
  const LoadedRun lr = load_run(o.config, overrides(o), true, &diag);
  fs::create_directories(lr.run.output_dir);
  StudyOptions so;
  so.replications = lr.run.replications;
  so.master_seed = lr.run.seed;
  so.workers = static_cast<unsigned>(total_workers(lr.run));
  const auto results = run_study(lr.study, so, &diag);

  const auto accuracy = accuracy_table(results, lr.study);
  csv::write_file(lr.run.output_dir / "accuracy.csv", accuracy_csv(accuracy));
  const auto targets = marginal_targets(*lr.covariates, lr.run.subjects, lr.run.intervals);
  csv::write_file(lr.run.output_dir / "marginals.csv", marginals_csv(marginal_report(results, targets)));

  json fits = json::array();
  json seeds = json::array();
  for (const auto& r : results) {
    json f = r.fitted ? fit_json(r.fit) : json::object({{"converged", false}, {"message", r.error}});
    f["replication"] = r.replication;
    f["seed"] = r.seed;
    f["events"] = r.events;
    fits.push_back(f);
    seeds.push_back(r.seed);
  }
  csv::write_file(lr.run.output_dir / "fits.json", fits.dump(2) + "\n");

  json m = manifest("evaluate", lr.run);
  m["replications"] = lr.run.replications;
  m["replication_seeds"] = seeds;
  m["converged"] = converged_count(results);
  report_warnings(diag);
  finish(m, diag, lr.run.output_dir);
  return 0;
}

int cmd_power(const Options& o) {
  Diagnostics diag;
  const LoadedRun lr = load_run(o.config, overrides(o), true, &diag);
  const PowerSpec& ps = lr.outcome->power;
  if (ps.drugs.empty()) throw ConfigError(lr.run.outcome->string() + ": power needs power.drugs, power.hazard_ratios and power.prevalences");
  fs::create_directories(lr.run.output_dir);

  const auto scenarios = permute_effects(lr.study, ps.drugs, ps.hazard_ratios, ps.prevalences, &diag);
  std::vector<StudyConfig> configs;
  for (const auto& s : scenarios) configs.push_back(s.config);
  StudyOptions so;
  so.replications = lr.run.replications;
  so.master_seed = lr.run.seed;
  so.workers = static_cast<unsigned>(total_workers(lr.run));
  so.marginals = false;
  const auto results = run_scenarios(configs, so, &diag);

  std::vector<PowerRow> rows;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    PowerRow row = power_summary(results[s], configs[s], ps.drugs, ps.alpha);
    row.scenario = s + 1;
    rows.push_back(std::move(row));
  }
  csv::write_file(lr.run.output_dir / "power.csv", power_csv(rows));

  json m = manifest("power", lr.run);
  m["replications"] = lr.run.replications;
  m["scenarios"] = scenarios.size();
  m["alpha"] = ps.alpha;
  std::size_t converged = 0;
  for (const auto& r : results) converged += converged_count(r);
  m["converged"] = converged;
  report_warnings(diag);
  finish(m, diag, lr.run.output_dir);
  return 0;
}

int cmd_fit(const std::string& data, const std::vector<std::string>& terms, const std::string& out) {
  const csv::Table table = csv::read(data);
  const auto design = design_from_csv(table, terms);
  const FitResult fit = fit_cox(design);
  const std::string text = fit_json(fit).dump(2) + "\n";
  if (out.empty() || out == "-")
    std::cout << text;
  else
    csv::write_file(out, text);
  return fit.converged ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Longitudinal cohort and survival-outcome simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Master seed");
    sub->add_option("--reps", o.reps, "Replications")->check(CLI::PositiveNumber);
    sub->add_option("--workers", o.workers, "Worker threads (0 = all cores)");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--scale", o.scale, "Size preset")->check(CLI::IsMember({"desk", "paper"}));
  };
  auto* gen = app.add_subcommand("generate", "Write a covariate cohort (cohort.csv)");
  auto* sim = app.add_subcommand("simulate", "Write a cohort with matched outcomes (cohort.csv, outcome.csv)");
  auto* eval = app.add_subcommand("evaluate", "Refit replications (accuracy.csv, marginals.csv)");
  auto* pow = app.add_subcommand("power", "Power over all effect arrangements (power.csv)");
  for (auto* s : {gen, sim, eval, pow}) add_common(s);

  std::string fit_data, fit_out;
  std::vector<std::string> fit_terms;
  auto* fit = app.add_subcommand("fit", "Fit a Cox model to an analysis CSV");
  fit->add_option("--data", fit_data, "Analysis CSV (subject_id,t_start,t_stop,event,...)")
      ->required()
      ->check(CLI::ExistingFile);
  fit->add_option("--terms", fit_terms, "Model terms")->required()->delimiter(',');
  fit->add_option("--out", fit_out, "Output JSON (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_generate(o, false);
    if (sim->parsed()) return cmd_generate(o, true);
    if (eval->parsed()) return cmd_evaluate(o);
    if (pow->parsed()) return cmd_power(o);
    if (fit->parsed()) return cmd_fit(fit_data, fit_terms, fit_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const CalibrationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const BoundViolation& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
