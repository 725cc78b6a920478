#pragma once

// Configuration files.
//
// Covariates come from three CSV files (variables, across-subject and
// within-subject correlation matrices). Structured settings use a flat
// "dotted.key = value" text format: one entry per line, '#' starts a
// comment, lists are comma-separated.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "longsim/covgen.hpp"
#include "longsim/diagnostics.hpp"
#include "longsim/study.hpp"

namespace longsim {

class KeyValueFile {
 public:
  static KeyValueFile parse(std::string_view text, const std::string& source);
  static KeyValueFile read(const std::filesystem::path& path);

  const std::string& source() const { return source_; }
  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::string require(const std::string& key) const;
  double number(const std::string& key) const;
  std::optional<double> number_or(const std::string& key) const;
  std::uint64_t count(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;
  // Keys starting with `prefix`, in file order.
  std::vector<std::string> keys_with_prefix(std::string_view prefix) const;
  std::size_t line_of(const std::string& key) const;
  // Keys never looked up; reported as warnings by the loaders.
  std::vector<std::string> unused() const;

 private:
  struct Entry {
    std::string value;
    std::size_t line;
    std::size_t order;
  };
  std::string source_;
  std::map<std::string, Entry> entries_;
  mutable std::map<std::string, bool> used_;
};

std::vector<VariableSpec> load_variables(const std::filesystem::path& path, Diagnostics* diag = nullptr);

struct NamedMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd values;
};
NamedMatrix load_matrix(const std::filesystem::path& path);

std::vector<CategoricalSpec> load_categoricals(const KeyValueFile& kv);

CovariateModel load_covariate_model(const std::filesystem::path& variables, const std::filesystem::path& corr_across,
                                    const std::filesystem::path& corr_within,
                                    const std::optional<std::filesystem::path>& categorical,
                                    Diagnostics* diag = nullptr);

struct PowerSpec {
  std::vector<std::string> drugs;
  std::vector<double> hazard_ratios;
  std::vector<double> prevalences;
  double alpha = 0.05;
};

struct OutcomeConfig {
  std::string event_kind;  // pmf | weibull | uniform
  std::vector<double> event_params;
  std::optional<std::filesystem::path> pmf_path;  // raw times, column "time"
  std::vector<double> pmf_weights;                // explicit weights over 1..m
  OutcomeSpec spec;                               // event set by load_run
  HazardModel truth;
  std::vector<std::string> fit_terms;
  PowerSpec power;
};

OutcomeConfig load_outcome(const KeyValueFile& kv, const std::filesystem::path& base_dir, Diagnostics* diag = nullptr);
// Builds the event distribution for a grid of m intervals (a PMF from raw
// times is rescaled onto 1..m).
TimeDistribution event_distribution(const OutcomeConfig& outcome, std::size_t m);

struct Scale {
  std::size_t subjects;
  std::size_t intervals;
  std::size_t replications;
};
std::optional<Scale> scale_preset(std::string_view name);

struct RunConfig {
  std::filesystem::path config_path;
  std::filesystem::path variables;
  std::filesystem::path corr_across;
  std::filesystem::path corr_within;
  std::optional<std::filesystem::path> categorical;
  std::optional<std::filesystem::path> outcome;
  std::size_t subjects = 0;
  std::size_t intervals = 0;
  std::size_t replications = 1;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::filesystem::path output_dir = "out";
  std::vector<std::filesystem::path> data_files;  // referenced from other configs, e.g. raw event times

  // Every file whose bytes define the run, in a fixed order.
  std::vector<std::filesystem::path> input_files() const;
};

struct RunOverrides {
  std::optional<std::string> scale;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replications;
  std::optional<unsigned> workers;
  std::optional<std::filesystem::path> output_dir;
};

// Reads the run file, applies the scale preset then explicit overrides and
// LONGSIM_WORKERS, and checks that referenced files exist. Throws
// ConfigError or ParseError.
RunConfig load_run_config(const std::filesystem::path& path, const RunOverrides& overrides,
                          Diagnostics* diag = nullptr);

// 64-bit FNV-1a over the bytes of input_files().
std::uint64_t config_hash(const RunConfig& config);

// Fully loaded covariate and outcome configuration for a run.
struct LoadedRun {
  RunConfig run;
  std::shared_ptr<const CovariateModel> covariates;
  std::optional<OutcomeConfig> outcome;
  StudyConfig study;  // valid when outcome is present
};
LoadedRun load_run(const std::filesystem::path& path, const RunOverrides& overrides, bool need_outcome,
                   Diagnostics* diag = nullptr);

}  // namespace longsim
