#pragma once

// Cox proportional-hazards fit for counting-process (start, stop] data with
// Breslow handling of tied event times.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "longsim/csv.hpp"
#include "longsim/outcomegen.hpp"

namespace longsim {

struct CountingProcessData {
  std::vector<std::string> names;  // one per covariate column
  std::vector<std::uint64_t> subject;
  std::vector<double> start;
  std::vector<double> stop;
  std::vector<std::uint8_t> event;
  std::vector<double> x;  // rows() x names.size(), row-major

  std::size_t rows() const { return stop.size(); }
  std::size_t cols() const { return names.size(); }
  void add_row(std::uint64_t id, double t0, double t1, bool ev, std::span<const double> values);
};

// Throws std::invalid_argument for start >= stop or a width mismatch.
void check(const CountingProcessData& data);

// Counting-process rows for the given model terms, one per retained interval.
CountingProcessData design_from_analysis(const AnalysisTable& table, std::span<const std::string> terms);
// Same rows without materialising the analysis table.
CountingProcessData design_from_cohort(const CohortTable& cohort, const Assignment& assignment,
                                       std::span<const std::string> terms);
// From an analysis CSV (subject_id,t_start,t_stop,event,...). A term is a
// numeric column name or "<column>.<level>" for a level indicator.
CountingProcessData design_from_csv(const csv::Table& table, std::span<const std::string> terms);

struct PartialLikelihood {
  double loglik = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

PartialLikelihood partial_loglik_and_derivatives(const CountingProcessData& data, const Eigen::VectorXd& beta);

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd beta_hat;
  Eigen::VectorXd se;
  double loglik = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  std::string message;
};

class SingularInformation : public std::runtime_error {
 public:
  SingularInformation(const std::string& what, std::vector<std::string> columns)
      : std::runtime_error(what), columns_(std::move(columns)) {}
  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::vector<std::string> columns_;
};

struct FitOptions {
  std::size_t max_iterations = 100;
  std::size_t max_halvings = 20;
  double loglik_tol = 1e-9;   // relative change
  double gradient_tol = 1e-6;
  double divergence_bound = 30.0;  // |beta| beyond this counts as diverging
};

// Newton-Raphson with step halving. Throws SingularInformation naming the
// collinear or constant columns; a diverging coefficient yields
// converged == false with the direction in `message`.
FitResult fit_cox(const CountingProcessData& data, const Eigen::VectorXd& init = {}, const FitOptions& options = {});

struct WaldTest {
  double z = 0.0;
  bool reject = false;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

// Two-sided test at level alpha with a 95% Wald interval. Throws
// std::invalid_argument for a non-converged fit or non-positive SE.
WaldTest wald_test(const FitResult& fit, std::size_t j, double alpha);
double wald_critical(double alpha);

}  // namespace longsim
