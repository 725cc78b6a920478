#pragma once

// Latent Gaussian correlation structure for mixed binary / normal variables.
//
// Binary variables are generated by thresholding a latent standard normal at
// Phi^-1(1 - p). A target Pearson correlation between two such variables (or
// between a binary and a normal one) is mapped to the latent correlation that
// reproduces it after thresholding; infeasible targets are clamped to their
// analytic bounds and the resulting latent matrix is repaired to be positive
// definite.

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "longsim/diagnostics.hpp"
#include "longsim/rng.hpp"

namespace longsim {

enum class VariableKind {
  id,
  normal,
  proportion_mean,
  time_function,
  binary_time_varying,
  binary_static,
  categorical,
};

std::string_view to_string(VariableKind kind);
std::optional<VariableKind> parse_variable_kind(std::string_view text);

struct ClampBounds {
  double lo;
  double hi;
};

struct VariableSpec {
  std::string name;
  VariableKind kind = VariableKind::normal;
  double mu = 0.0;
  // Across-subject SD. For proportion_mean variables an absent value means
  // sqrt(mu (1 - mu) / N), with N the cohort size.
  std::optional<double> sigma_across;
  std::optional<double> prevalence;  // binary kinds only
  std::optional<double> slope_sd;    // time_function only
  std::optional<double> sigma_within;
  std::optional<ClampBounds> clamp;

  bool is_binary() const {
    return kind == VariableKind::binary_time_varying || kind == VariableKind::binary_static;
  }
  // Within-subject SD; defaults to a third of the across-subject SD.
  double within_sd() const { return sigma_within.value_or(sigma_across.value_or(0.0) / 3.0); }
};

struct RepairEntry {
  std::size_t row;
  std::size_t col;
  double requested;
  double applied;
  std::string reason;
};

struct CorrelationSpec {
  std::vector<std::string> across_names;
  std::vector<std::string> within_names;
  Eigen::MatrixXd sigma_a;
  Eigen::MatrixXd sigma_w;
  std::vector<RepairEntry> repair_log;
};

struct CorrBounds {
  double lo;
  double hi;
};

class BoundViolation : public std::domain_error {
 public:
  BoundViolation(const std::string& what, CorrBounds admissible)
      : std::domain_error(what), admissible_(admissible) {}
  CorrBounds admissible() const { return admissible_; }

 private:
  CorrBounds admissible_;
};

// P(Z1 <= h, Z2 <= k) for a standard bivariate normal with correlation rho.
// h and k may be +-infinity. Throws std::domain_error when |rho| >= 1.
double bvn_cdf(double h, double k, double rho);

// Largest attainable |point-biserial correlation| for a binary with
// prevalence p: phi(Phi^-1(p)) / sqrt(p (1 - p)). Degenerate p gives 0.
double max_corr_bin_norm(double p, Diagnostics* diag = nullptr);

// Frechet bounds on the Pearson correlation of two binaries.
CorrBounds max_corr_bin_bin(double p1, double p2, Diagnostics* diag = nullptr);

// Latent correlation rho with
//   bvn_cdf(Phi^-1(p1), Phi^-1(p2), rho) = r sqrt(p1 q1 p2 q2) + p1 p2.
// Throws BoundViolation if r lies outside max_corr_bin_bin(p1, p2).
double solve_tetrachoric(double p1, double p2, double r_target);

struct LatentColumn {
  bool binary = false;
  double prevalence = 0.0;
};

struct LatentCorrelation {
  Eigen::MatrixXd latent;
  std::vector<RepairEntry> repair_log;
};

LatentCorrelation build_latent_corr(const Eigen::MatrixXd& target, std::span<const LatentColumn> columns,
                                    Diagnostics* diag = nullptr);
LatentCorrelation build_latent_corr(const Eigen::MatrixXd& target, std::span<const VariableSpec> vars,
                                    Diagnostics* diag = nullptr);

// Eigenvalue clipping at `floor` followed by rescaling to unit diagonal.
// Returns the input unchanged when it is already positive definite above
// the floor. Throws std::invalid_argument for non-symmetric input.
Eigen::MatrixXd nearest_pd(const Eigen::MatrixXd& m, double floor = 1e-8);

double min_eigenvalue(const Eigen::MatrixXd& m);

// Draws correlated mixed binary / normal vectors from a PD latent matrix.
class JointSampler {
 public:
  struct Column {
    bool binary = false;
    double prevalence = 0.0;  // binary: P(value == 1)
    double mean = 0.0;        // normal
    double sd = 0.0;          // normal
  };

  // Throws std::logic_error if the latent matrix is not positive definite.
  JointSampler(const Eigen::MatrixXd& latent, std::vector<Column> columns);

  std::size_t dim() const { return columns_.size(); }
  // Latent standard-normal draw z = L u (no marginal transform).
  void draw_latent(RandomStream& rng, std::span<double> z) const;
  // One joint draw written to `out`, which must have dim() elements.
  void draw(RandomStream& rng, std::span<double> out) const;

  const std::vector<Column>& columns() const { return columns_; }
  const std::vector<double>& thresholds() const { return thresholds_; }

 private:
  std::vector<Column> columns_;
  std::vector<double> chol_;  // row-major lower factor
  std::vector<double> thresholds_;
};

// n x p sample: binary columns in {0, 1}, normal columns at (mu, sigma_across).
Eigen::MatrixXd sample_joint(const Eigen::MatrixXd& latent, std::span<const VariableSpec> vars, std::size_t n,
                             RandomStream& rng);

// repair_log as CSV (row,col,requested,applied,reason).
std::string repair_log_csv(std::span<const RepairEntry> log);

}  // namespace longsim
