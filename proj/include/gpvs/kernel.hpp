#pragma once

#include "gpvs/distcache.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gpvs {

enum class KernelFamily { Exp1, Exp2Separate, Exp2Joint, Matern };

std::string to_string(KernelFamily f);
KernelFamily parse_kernel_family(const std::string& s);

/// Number of exponential (or Matern) terms in the covariance.
std::size_t term_count(KernelFamily f);
/// Number of independent selection vectors: 2 for separate two-term
/// selection, 1 otherwise.
std::size_t selection_set_count(KernelFamily f);
/// Selection vector governing a given term.
std::size_t selection_set_of_term(KernelFamily f, std::size_t term);

/// Covariance parameters with their selection indicators.
///
/// The spike state is kept consistent on every mutation: an excluded
/// coordinate always carries rho = 1 in every term it governs, and an
/// included one carries rho in [0,1).
class KernelParams {
 public:
  KernelParams() = default;
  /// All coordinates excluded, unit precisions, nu = 2.5.
  KernelParams(KernelFamily family, std::size_t p);

  KernelFamily family() const { return family_; }
  std::size_t p() const { return p_; }
  std::size_t terms() const { return rho_.size(); }
  std::size_t selection_sets() const { return gamma_.size(); }

  bool included(std::size_t set, std::size_t k) const { return gamma_[set][k] != 0; }
  const std::vector<std::uint8_t>& gamma(std::size_t set) const { return gamma_[set]; }
  std::size_t included_count(std::size_t set) const;

  double rho(std::size_t term, std::size_t k) const { return rho_[term][static_cast<Eigen::Index>(k)]; }
  const Eigen::VectorXd& rho(std::size_t term) const { return rho_[term]; }

  double lambda_a() const { return lambda_a_; }
  double lambda_z(std::size_t term) const { return lambda_z_[term]; }
  double nu() const { return nu_; }

  /// Switch coordinate k of `set` on; `rhos` holds one value per governed term.
  void include(std::size_t set, std::size_t k, const std::vector<double>& rhos);
  /// Switch coordinate k of `set` off, resetting its rho(s) to 1.
  void exclude(std::size_t set, std::size_t k);
  /// Change rho of an included coordinate.
  void set_rho(std::size_t term, std::size_t k, double value);

  void set_lambda_a(double v);
  void set_lambda_z(std::size_t term, double v);
  void set_nu(double v);

  /// Terms governed by a selection set.
  std::vector<std::size_t> terms_of_set(std::size_t set) const;

  /// Throws ConfigError if any invariant is violated.
  void check() const;

  bool operator==(const KernelParams& o) const = default;

 private:
  KernelFamily family_ = KernelFamily::Exp1;
  std::size_t p_ = 0;
  std::vector<std::vector<std::uint8_t>> gamma_;
  std::vector<Eigen::VectorXd> rho_;
  double lambda_a_ = 1.0;
  std::vector<double> lambda_z_;
  double nu_ = 2.5;
};

/// Lower Cholesky factor of C + jitter * I.
class CholeskyFactor {
 public:
  CholeskyFactor() = default;
  CholeskyFactor(Eigen::LLT<Eigen::MatrixXd> llt, double jitter) : llt_(std::move(llt)), jitter_(jitter) {}

  double jitter() const { return jitter_; }
  Eigen::Index size() const { return llt_.matrixLLT().rows(); }
  Eigen::MatrixXd lower() const { return llt_.matrixL(); }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return llt_.solve(b); }
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const { return llt_.solve(b); }
  /// L^{-1} b
  Eigen::VectorXd half_solve(const Eigen::VectorXd& b) const;
  /// L u
  Eigen::VectorXd lower_times(const Eigen::VectorXd& u) const;
  /// log det(C + jitter I)
  double log_det() const;

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double jitter_ = 0.0;
};

/// Multiples of tr(C)/n tried in order until the factorization succeeds.
inline constexpr double kJitterLadder[] = {0.0, 1e-10, 1e-8, 1e-6, 1e-4};

/// Cholesky with the jitter ladder. Throws NumericalError naming the
/// condition estimate when even the largest jitter fails.
CholeskyFactor factorize(const Eigen::MatrixXd& c);

/// Covariance (or cross-covariance) block with a lazily computed factor.
struct CovMatrix {
  Eigen::MatrixXd c;
  std::optional<CholeskyFactor> chol;

  const CholeskyFactor& factor();
  double jitter_used() const { return chol ? chol->jitter() : 0.0; }
};

/// exp(-d) terms: per-unique-row distances for one term, -log(rho) weights.
Eigen::VectorXd rho_weights(const Eigen::VectorXd& rho);

/// Normalised Matern correlation at rho-weighted squared distance d:
/// (2^{1-nu}/Gamma(nu)) u^nu K_nu(u), u = 2 sqrt(nu d); 1 at d = 0.
double matern_correlation(double d, double nu);

/// Unscaled term matrix (exp(-G) or Matern(d)) for one term's rho vector.
Eigen::MatrixXd term_kernel(const DistanceCache& cache, const Eigen::VectorXd& rho, KernelFamily family,
                            double nu);

CovMatrix build_cov_exp1(const DistanceCache& cache, const KernelParams& params);
CovMatrix build_cov_exp2(const DistanceCache& cache, const KernelParams& params);
CovMatrix build_cov_matern(const DistanceCache& cache, const KernelParams& params);
/// Dispatches on params.family().
CovMatrix build_cov(const DistanceCache& cache, const KernelParams& params);

/// Element-wise factor exp(A*(:,k) log(rho_new/rho_old)), re-inflated.
Eigen::MatrixXd rho_change_factor(const DistanceCache& cache, std::size_t k, double rho_new, double rho_old);

/// Single-coordinate update of a one-term exponential covariance:
/// C_new = J/lambda_a + (C_old - J/lambda_a) .* Delta.
/// Throws NumericalError if rho_old = 0 (the caller must rebuild).
CovMatrix update_cov_partial(const CovMatrix& old, const DistanceCache& cache, std::size_t k, double rho_new,
                             double rho_old, double lambda_a);

struct KnotLayout {
  std::vector<Eigen::Index> order;  // random permutation of 0..n-1
  std::vector<Eigen::Index> knots;  // one pick per stratum of `order`
};

/// Stratified knot choice: permute 0..n-1, split the permuted order into m
/// equal strata and draw one position uniformly from each.
KnotLayout knot_layout(Eigen::Index n, Eigen::Index m, std::uint64_t seed);
std::vector<Eigen::Index> select_knots(Eigen::Index n, Eigen::Index m, std::uint64_t seed);

/// Inverse of (1/r) I + C_mn' C_mm^{-1} C_mn via the Woodbury identity,
/// factorizing only m x m matrices (C_mm and I + r V V', V = L^{-1} C_mn).
Eigen::MatrixXd woodbury_inverse(const Eigen::MatrixXd& c_mm, const Eigen::MatrixXd& c_mn, double r);

/// C_mn' C_mm^{-1} z_star.
Eigen::VectorXd project_latent(const Eigen::VectorXd& z_star, const Eigen::MatrixXd& c_mm,
                               const Eigen::MatrixXd& c_mn);

}  // namespace gpvs
