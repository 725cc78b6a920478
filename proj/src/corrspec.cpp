#include "longsim/corrspec.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "longsim/csv.hpp"
#include "longsim/kernels.hpp"
#include "longsim/normal.hpp"

namespace longsim {

std::string_view to_string(VariableKind kind) {
  switch (kind) {
    case VariableKind::id: return "id";
    case VariableKind::normal: return "normal";
    case VariableKind::proportion_mean: return "proportion_mean";
    case VariableKind::time_function: return "time_function";
    case VariableKind::binary_time_varying: return "binary_time_varying";
    case VariableKind::binary_static: return "binary_static";
    case VariableKind::categorical: return "categorical";
  }
  return "unknown";
}

std::optional<VariableKind> parse_variable_kind(std::string_view text) {
  for (auto k : {VariableKind::id, VariableKind::normal, VariableKind::proportion_mean,
                 VariableKind::time_function, VariableKind::binary_time_varying, VariableKind::binary_static,
                 VariableKind::categorical})
    if (text == to_string(k)) return k;
  return std::nullopt;
}

namespace {

// Gauss-Legendre half-rules (6, 12 and 20 points); nodes on [-1, 0).
constexpr std::array<double, 3> kX6 = {-0.9324695142031522, -0.6612093864662647, -0.2386191860831970};
constexpr std::array<double, 3> kW6 = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
constexpr std::array<double, 6> kX12 = {-0.9815606342467191, -0.9041172563704750, -0.7699026741943050,
                                        -0.5873179542866171, -0.3678314989981802, -0.1252334085114692};
constexpr std::array<double, 6> kW12 = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                        0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
constexpr std::array<double, 10> kX20 = {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259,
                                         -0.8391169718222188, -0.7463319064601508, -0.6360536807265150,
                                         -0.5108670019508271, -0.3737060887154196, -0.2277858511416451,
                                         -0.07652652113349733};
constexpr std::array<double, 10> kW20 = {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                                         0.08327674157670475, 0.1019301198172404,  0.1181945319615184,
                                         0.1316886384491766,  0.1420961093183821,  0.1491729864726037,
                                         0.1527533871307259};

// Upper orthant P(Z1 > h, Z2 > k): the single-integral representation of
// Drezner and Wesolowsky evaluated by Gauss-Legendre quadrature, with Genz's
// asymptotic expansion for |r| >= 0.925.
double bvn_upper(double h, double k, double r) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (h == inf || k == inf) return 0.0;
  if (h == -inf) return k == -inf ? 1.0 : std_normal_cdf(-k);
  if (k == -inf) return std_normal_cdf(-h);

  std::span<const double> x, w;
  if (std::fabs(r) < 0.3) {
    x = kX6;
    w = kW6;
  } else if (std::fabs(r) < 0.75) {
    x = kX12;
    w = kW12;
  } else {
    x = kX20;
    w = kW20;
  }

  constexpr double twopi = 2.0 * std::numbers::pi;
  double hk = h * k;
  double bvn = 0.0;
  if (std::fabs(r) < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r);
    for (std::size_t i = 0; i < x.size(); ++i) {
      double sn = std::sin(asr * (1.0 - x[i]) / 2.0);
      bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      sn = std::sin(asr * (1.0 + x[i]) / 2.0);
      bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    bvn = bvn * asr / (2.0 * twopi) + std_normal_cdf(-h) * std_normal_cdf(-k);
  } else {
    if (r < 0.0) {
      k = -k;
      hk = -hk;
    }
    if (std::fabs(r) < 1.0) {
      const double as = (1.0 - r) * (1.0 + r);
      double a = std::sqrt(as);
      const double bs = (h - k) * (h - k);
      const double c = (4.0 - hk) / 8.0;
      const double d = (12.0 - hk) / 16.0;
      double asr = -(bs / as + hk) / 2.0;
      if (asr > -100.0)
        bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
      if (hk > -100.0) {
        const double b = std::sqrt(bs);
        const double sp = std::sqrt(twopi) * std_normal_cdf(-b / a);
        bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
      }
      a /= 2.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        for (double sgn : {-1.0, 1.0}) {
          const double xs = (a + a * sgn * x[i]) * (a + a * sgn * x[i]);
          const double rs = std::sqrt(1.0 - xs);
          asr = -(bs / xs + hk) / 2.0;
          if (asr > -100.0) {
            const double sp = 1.0 + c * xs * (1.0 + d * xs);
            const double ep = std::exp(-hk * xs / (2.0 * (1.0 + rs) * (1.0 + rs))) / rs;
            bvn += a * w[i] * std::exp(asr) * (ep - sp);
          }
        }
      }
      bvn = -bvn / twopi;
    }
    if (r > 0.0) {
      bvn += std_normal_cdf(-std::max(h, k));
    } else if (h >= k) {
      bvn = -bvn;
    } else {
      const double l = h < 0.0 ? std_normal_cdf(k) - std_normal_cdf(h) : std_normal_cdf(-h) - std_normal_cdf(-k);
      bvn = l - bvn;
    }
  }
  return std::clamp(bvn, 0.0, 1.0);
}

bool degenerate(double p) { return !(p > 0.0 && p < 1.0); }

std::string describe_pair(std::size_t i, std::size_t j) {
  return "(" + std::to_string(i) + ", " + std::to_string(j) + ")";
}

}  // namespace

double bvn_cdf(double h, double k, double rho) {
  if (!(std::fabs(rho) < 1.0)) throw std::domain_error("bvn_cdf: |rho| must be < 1");
  return bvn_upper(-h, -k, rho);
}

double max_corr_bin_norm(double p, Diagnostics* diag) {
  if (degenerate(p)) {
    warn(diag, "degenerate binary prevalence " + csv::format(p) + ": point-biserial bound is 0");
    return 0.0;
  }
  return std_normal_pdf(std_normal_quantile(p)) / std::sqrt(p * (1.0 - p));
}

CorrBounds max_corr_bin_bin(double p1, double p2, Diagnostics* diag) {
  if (degenerate(p1) || degenerate(p2)) {
    warn(diag, "degenerate binary prevalence: binary-binary bounds are (0, 0)");
    return {0.0, 0.0};
  }
  const double q1 = 1.0 - p1, q2 = 1.0 - p2;
  const double hi = std::min(std::sqrt(p1 * q2 / (p2 * q1)), std::sqrt(p2 * q1 / (p1 * q2)));
  const double lo = std::max(-std::sqrt(p1 * p2 / (q1 * q2)), -std::sqrt(q1 * q2 / (p1 * p2)));
  return {lo, hi};
}

double solve_tetrachoric(double p1, double p2, double r_target) {
  if (degenerate(p1) || degenerate(p2))
    throw std::domain_error("solve_tetrachoric: prevalences must lie strictly inside (0, 1)");
  const CorrBounds b = max_corr_bin_bin(p1, p2);
  constexpr double slack = 1e-12;
  if (r_target < b.lo - slack || r_target > b.hi + slack) {
    std::ostringstream os;
    os << "target correlation " << r_target << " outside admissible interval [" << b.lo << ", " << b.hi << "]";
    throw BoundViolation(os.str(), b);
  }
  if (r_target == 0.0) return 0.0;

  const double h = std_normal_quantile(p1);
  const double k = std_normal_quantile(p2);
  const double joint = r_target * std::sqrt(p1 * (1.0 - p1) * p2 * (1.0 - p2)) + p1 * p2;
  auto f = [&](double rho) { return bvn_cdf(h, k, rho) - joint; };

  constexpr double eps = 1e-9;
  const double lo = -1.0 + eps, hi = 1.0 - eps;
  const double flo = f(lo), fhi = f(hi);
  // At a Frechet bound the root sits at +-1; return the bracket end.
  if (flo >= 0.0) return lo;
  if (fhi <= 0.0) return hi;

  boost::uintmax_t max_iter = 200;
  auto [a, c] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi,
                                                  boost::math::tools::eps_tolerance<double>(50), max_iter);
  const double root = 0.5 * (a + c);
  return root;
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

Eigen::MatrixXd nearest_pd(const Eigen::MatrixXd& m, double floor) {
  if (m.rows() != m.cols()) throw std::invalid_argument("nearest_pd: matrix is not square");
  if (m.size() > 0 && (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("nearest_pd: matrix is not symmetric");
  if (m.size() == 0) return m;

  Eigen::MatrixXd out = 0.5 * (m + m.transpose());
  for (int pass = 0; pass < 10; ++pass) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out);
    if (es.eigenvalues().minCoeff() >= floor) return pass == 0 ? m : out;
    const Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(floor);
    Eigen::MatrixXd rebuilt = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    const Eigen::VectorXd inv_sd = rebuilt.diagonal().cwiseSqrt().cwiseInverse();
    out = inv_sd.asDiagonal() * rebuilt * inv_sd.asDiagonal();
    out = 0.5 * (out + out.transpose());
    out.diagonal().setOnes();
  }
  return out;
}

LatentCorrelation build_latent_corr(const Eigen::MatrixXd& target, std::span<const LatentColumn> columns,
                                    Diagnostics* diag) {
  const auto n = static_cast<Eigen::Index>(columns.size());
  if (target.rows() != n || target.cols() != n)
    throw std::invalid_argument("build_latent_corr: matrix dimension does not match column count");

  LatentCorrelation out;
  out.latent = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const LatentColumn& a = columns[static_cast<std::size_t>(i)];
      const LatentColumn& b = columns[static_cast<std::size_t>(j)];
      const double requested = target(i, j);
      double applied = std::clamp(requested, -1.0, 1.0);
      double latent = applied;
      std::string reason;

      if (a.binary && b.binary) {
        if (degenerate(a.prevalence) || degenerate(b.prevalence)) {
          applied = 0.0;
          latent = 0.0;
          reason = "degenerate binary";
        } else {
          const CorrBounds bd = max_corr_bin_bin(a.prevalence, b.prevalence);
          if (applied > bd.hi || applied < bd.lo) {
            applied = std::clamp(applied, bd.lo, bd.hi);
            reason = "binary-binary bound";
          }
          latent = solve_tetrachoric(a.prevalence, b.prevalence, applied);
        }
      } else if (a.binary || b.binary) {
        const double p = a.binary ? a.prevalence : b.prevalence;
        if (degenerate(p)) {
          applied = 0.0;
          latent = 0.0;
          reason = "degenerate binary";
        } else {
          const double bound = max_corr_bin_norm(p);
          if (std::fabs(applied) > bound) {
            applied = std::copysign(bound, applied);
            reason = "binary-normal bound";
          }
          latent = std::clamp(applied / bound, -1.0, 1.0);
        }
      }

      if (applied != requested && requested != 0.0) {
        if (reason.empty()) reason = "outside [-1, 1]";
        out.repair_log.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), requested, applied, reason});
        warn(diag, "correlation " + describe_pair(i, j) + " adjusted from " + csv::format(requested) + " to " +
                       csv::format(applied) + " (" + reason + ")");
      }
      out.latent(i, j) = out.latent(j, i) = latent;
    }
  }

  Eigen::MatrixXd repaired = nearest_pd(out.latent);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (std::fabs(repaired(i, j) - out.latent(i, j)) > 1e-12)
        out.repair_log.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), out.latent(i, j),
                                  repaired(i, j), "latent pd repair"});
  out.latent = std::move(repaired);
  return out;
}

LatentCorrelation build_latent_corr(const Eigen::MatrixXd& target, std::span<const VariableSpec> vars,
                                    Diagnostics* diag) {
  std::vector<LatentColumn> cols;
  cols.reserve(vars.size());
  for (const auto& v : vars) cols.push_back({v.is_binary(), v.prevalence.value_or(0.0)});
  return build_latent_corr(target, cols, diag);
}

JointSampler::JointSampler(const Eigen::MatrixXd& latent, std::vector<Column> columns)
    : columns_(std::move(columns)) {
  const auto n = static_cast<Eigen::Index>(columns_.size());
  if (latent.rows() != n || latent.cols() != n)
    throw std::invalid_argument("JointSampler: latent matrix dimension does not match column count");
  Eigen::LLT<Eigen::MatrixXd> llt(latent);
  if (llt.info() != Eigen::Success)
    throw std::logic_error("JointSampler: Cholesky factorization failed; latent matrix is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  chol_.assign(static_cast<std::size_t>(n * n), 0.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) chol_[static_cast<std::size_t>(i * n + j)] = l(i, j);
  thresholds_.reserve(columns_.size());
  for (const auto& c : columns_) {
    thresholds_.push_back(c.binary ? std_normal_quantile(1.0 - c.prevalence)
                                   : std::numeric_limits<double>::quiet_NaN());
  }
}

void JointSampler::draw_latent(RandomStream& rng, std::span<double> z) const {
  const std::size_t n = columns_.size();
  // In place: row i of L only reads u[0..i], so overwrite from the last row up.
  for (std::size_t i = 0; i < n; ++i) z[i] = rng.normal();
  const auto& k = kernels::active();
  for (std::size_t i = n; i-- > 0;) z[i] = k.dot(chol_.data() + i * n, z.data(), i + 1);
}

void JointSampler::draw(RandomStream& rng, std::span<double> out) const {
  draw_latent(rng, out);
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    const Column& c = columns_[i];
    out[i] = c.binary ? (out[i] > thresholds_[i] ? 1.0 : 0.0) : c.mean + c.sd * out[i];
  }
}

Eigen::MatrixXd sample_joint(const Eigen::MatrixXd& latent, std::span<const VariableSpec> vars, std::size_t n,
                             RandomStream& rng) {
  std::vector<JointSampler::Column> cols;
  cols.reserve(vars.size());
  for (const auto& v : vars)
    cols.push_back({v.is_binary(), v.prevalence.value_or(0.0), v.mu, v.sigma_across.value_or(0.0)});
  const JointSampler sampler(latent, std::move(cols));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(vars.size()));
  std::vector<double> row(vars.size());
  for (std::size_t s = 0; s < n; ++s) {
    sampler.draw(rng, row);
    for (std::size_t j = 0; j < row.size(); ++j) out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) = row[j];
  }
  return out;
}

std::string repair_log_csv(std::span<const RepairEntry> log) {
  std::string out = "row,col,requested,applied,reason\n";
  for (const auto& e : log) {
    std::string reason = e.reason;
    std::replace(reason.begin(), reason.end(), ' ', '_');
    std::replace(reason.begin(), reason.end(), '-', '_');
    std::replace(reason.begin(), reason.end(), ',', '_');
    out += std::to_string(e.row) + "," + std::to_string(e.col) + "," + csv::format(e.requested) + "," +
           csv::format(e.applied) + "," + reason + "\n";
  }
  return out;
}

}  // namespace longsim
