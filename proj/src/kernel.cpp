#include "gpvs/kernel.hpp"

#include "gpvs/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace gpvs {

std::string to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::Exp1: return "exp1";
    case KernelFamily::Exp2Separate: return "exp2-separate";
    case KernelFamily::Exp2Joint: return "exp2-joint";
    case KernelFamily::Matern: return "matern";
  }
  return "?";
}

KernelFamily parse_kernel_family(const std::string& s) {
  if (s == "exp1") return KernelFamily::Exp1;
  if (s == "exp2-separate" || s == "exp2") return KernelFamily::Exp2Separate;
  if (s == "exp2-joint") return KernelFamily::Exp2Joint;
  if (s == "matern") return KernelFamily::Matern;
  throw ConfigError("unknown kernel family '" + s + "' (expected exp1, exp2-separate, exp2-joint, matern)");
}

std::size_t term_count(KernelFamily f) {
  return (f == KernelFamily::Exp2Separate || f == KernelFamily::Exp2Joint) ? 2 : 1;
}

std::size_t selection_set_count(KernelFamily f) { return f == KernelFamily::Exp2Separate ? 2 : 1; }

std::size_t selection_set_of_term(KernelFamily f, std::size_t term) {
  return f == KernelFamily::Exp2Separate ? term : 0;
}

// ---------------------------------------------------------------------------
// KernelParams

KernelParams::KernelParams(KernelFamily family, std::size_t p)
    : family_(family),
      p_(p),
      gamma_(selection_set_count(family), std::vector<std::uint8_t>(p, 0)),
      rho_(term_count(family), Eigen::VectorXd::Ones(static_cast<Eigen::Index>(p))),
      lambda_z_(term_count(family), 1.0) {}

std::size_t KernelParams::included_count(std::size_t set) const {
  return static_cast<std::size_t>(std::count(gamma_[set].begin(), gamma_[set].end(), std::uint8_t{1}));
}

std::vector<std::size_t> KernelParams::terms_of_set(std::size_t set) const {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < terms(); ++t) {
    if (selection_set_of_term(family_, t) == set) out.push_back(t);
  }
  return out;
}

void KernelParams::include(std::size_t set, std::size_t k, const std::vector<double>& rhos) {
  auto ts = terms_of_set(set);
  if (rhos.size() != ts.size()) throw ConfigError("include: expected one rho per governed term");
  for (double r : rhos) {
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("include: rho must lie in [0,1) for an included coordinate");
  }
  gamma_[set][k] = 1;
  for (std::size_t i = 0; i < ts.size(); ++i) rho_[ts[i]][static_cast<Eigen::Index>(k)] = rhos[i];
}

void KernelParams::exclude(std::size_t set, std::size_t k) {
  gamma_[set][k] = 0;
  for (auto t : terms_of_set(set)) rho_[t][static_cast<Eigen::Index>(k)] = 1.0;
}

void KernelParams::set_rho(std::size_t term, std::size_t k, double value) {
  if (!included(selection_set_of_term(family_, term), k)) {
    throw ConfigError("set_rho: coordinate " + std::to_string(k) + " is excluded (rho pinned at 1)");
  }
  if (!(value >= 0.0 && value < 1.0)) throw ConfigError("set_rho: rho must lie in [0,1)");
  rho_[term][static_cast<Eigen::Index>(k)] = value;
}

void KernelParams::set_lambda_a(double v) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("lambda_a must be positive");
  lambda_a_ = v;
}

void KernelParams::set_lambda_z(std::size_t term, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("lambda_z must be positive");
  lambda_z_[term] = v;
}

void KernelParams::set_nu(double v) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("nu must be positive");
  nu_ = v;
}

void KernelParams::check() const {
  for (std::size_t t = 0; t < terms(); ++t) {
    const auto set = selection_set_of_term(family_, t);
    for (std::size_t k = 0; k < p_; ++k) {
      double r = rho(t, k);
      bool on = included(set, k);
      if (on && !(r >= 0.0 && r < 1.0)) throw ConfigError("included coordinate with rho outside [0,1)");
      if (!on && r != 1.0) throw ConfigError("excluded coordinate with rho != 1");
    }
  }
  if (!(lambda_a_ > 0.0)) throw ConfigError("lambda_a must be positive");
  for (double l : lambda_z_) {
    if (!(l > 0.0)) throw ConfigError("lambda_z must be positive");
  }
  if (!(nu_ > 0.0)) throw ConfigError("nu must be positive");
}

// ---------------------------------------------------------------------------
// Factorization

Eigen::VectorXd CholeskyFactor::half_solve(const Eigen::VectorXd& b) const {
  return llt_.matrixL().solve(b);
}

Eigen::VectorXd CholeskyFactor::lower_times(const Eigen::VectorXd& u) const {
  return llt_.matrixL() * u;
}

double CholeskyFactor::log_det() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

CholeskyFactor factorize(const Eigen::MatrixXd& c) {
  if (c.rows() != c.cols()) throw NumericalError("factorize: matrix is not square");
  const Eigen::Index n = c.rows();
  if (n == 0) throw NumericalError("factorize: empty matrix");
  if (!c.allFinite()) throw NumericalError("factorize: matrix has non-finite entries");
  const double scale = std::max(c.trace() / static_cast<double>(n), std::numeric_limits<double>::min());
  Eigen::MatrixXd work = c;
  double applied = 0.0;
  for (double step : kJitterLadder) {
    const double jitter = step * scale;
    work.diagonal().array() += (jitter - applied);
    applied = jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(work);
    if (llt.info() == Eigen::Success) return CholeskyFactor(std::move(llt), jitter);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  const double hi = ev.cwiseAbs().maxCoeff();
  const double lo = ev.minCoeff();
  std::ostringstream msg;
  msg << "Cholesky failed at maximum jitter " << kJitterLadder[4] * scale << "; condition estimate ";
  if (lo > 0.0) {
    msg << hi / lo;
  } else {
    msg << "inf (smallest eigenvalue " << lo << ")";
  }
  throw NumericalError(msg.str());
}

const CholeskyFactor& CovMatrix::factor() {
  if (!chol) chol = factorize(c);
  return *chol;
}

// ---------------------------------------------------------------------------
// Covariance assembly

Eigen::VectorXd rho_weights(const Eigen::VectorXd& rho) {
  Eigen::VectorXd w(rho.size());
  for (Eigen::Index k = 0; k < rho.size(); ++k) w[k] = rho[k] >= 1.0 ? 0.0 : -std::log(rho[k]);
  return w;
}

double matern_correlation(double d, double nu) {
  if (d <= 0.0) return 1.0;
  if (std::isinf(d)) return 0.0;
  const double u = 2.0 * std::sqrt(nu * d);
  double k = 0.0;
  bool overflow = false;
  try {
    k = std::cyl_bessel_k(nu, u);
    overflow = !std::isfinite(k);
  } catch (const std::exception&) {
    overflow = true;
  }
  if (overflow) {
    // Small argument: 2^{1-nu}/Gamma(nu) u^nu K_nu(u) = 1 - u^2 / (4 (nu - 1)) + o(u^2) for nu > 1.
    if (nu > 1.0 && u < 1e-3) return 1.0 - u * u / (4.0 * (nu - 1.0));
    std::ostringstream msg;
    msg << "Matern Bessel evaluation overflow at nu=" << nu << ", d=" << d;
    throw NumericalError(msg.str());
  }
  if (k == 0.0) return 0.0;
  const double log_val = (1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(u) + std::log(k);
  return std::exp(log_val);
}

namespace {

Eigen::VectorXd term_values(const DistanceCache& cache, const Eigen::VectorXd& rho, KernelFamily family,
                            double nu) {
  Eigen::VectorXd g = cache.weighted(rho_weights(rho));
  if (family == KernelFamily::Matern) {
    for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = matern_correlation(g[i], nu);
  } else {
    g = (-g.array()).exp();
  }
  return g;
}

void check_dims(const DistanceCache& cache, const KernelParams& params) {
  if (static_cast<std::size_t>(cache.p()) != params.p()) {
    throw DataError(DataError::Code::Shape, "kernel: cache has " + std::to_string(cache.p()) +
                                                " columns but parameters have " + std::to_string(params.p()));
  }
}

CovMatrix assemble(const DistanceCache& cache, const KernelParams& params) {
  check_dims(cache, params);
  Eigen::VectorXd v = Eigen::VectorXd::Constant(cache.unique_count(), 1.0 / params.lambda_a());
  for (std::size_t t = 0; t < params.terms(); ++t) {
    v += term_values(cache, params.rho(t), params.family(), params.nu()) / params.lambda_z(t);
  }
  if (!v.allFinite()) throw NumericalError("kernel: covariance has non-finite entries");
  return CovMatrix{cache.expand(v), std::nullopt};
}

}  // namespace

Eigen::MatrixXd term_kernel(const DistanceCache& cache, const Eigen::VectorXd& rho, KernelFamily family,
                            double nu) {
  return cache.expand(term_values(cache, rho, family, nu));
}

CovMatrix build_cov_exp1(const DistanceCache& cache, const KernelParams& params) {
  if (params.family() != KernelFamily::Exp1) throw ConfigError("build_cov_exp1: family must be exp1");
  return assemble(cache, params);
}

CovMatrix build_cov_exp2(const DistanceCache& cache, const KernelParams& params) {
  if (params.family() != KernelFamily::Exp2Separate && params.family() != KernelFamily::Exp2Joint) {
    throw ConfigError("build_cov_exp2: family must be exp2-separate or exp2-joint");
  }
  return assemble(cache, params);
}

CovMatrix build_cov_matern(const DistanceCache& cache, const KernelParams& params) {
  if (params.family() != KernelFamily::Matern) throw ConfigError("build_cov_matern: family must be matern");
  return assemble(cache, params);
}

CovMatrix build_cov(const DistanceCache& cache, const KernelParams& params) { return assemble(cache, params); }

Eigen::MatrixXd rho_change_factor(const DistanceCache& cache, std::size_t k, double rho_new, double rho_old) {
  if (!(rho_old > 0.0)) throw NumericalError("partial covariance update needs rho_old > 0; rebuild instead");
  if (rho_new == rho_old) return Eigen::MatrixXd::Ones(cache.n1(), cache.n2());
  const double log_ratio = std::log(rho_new / rho_old);
  const auto col = cache.unique_rows().col(static_cast<Eigen::Index>(k));
  Eigen::VectorXd delta(col.size());
  for (Eigen::Index r = 0; r < col.size(); ++r) {
    // rho_new = 0 gives log_ratio = -inf; exact ties keep a factor of 1.
    delta[r] = col[r] == 0.0 ? 1.0 : std::exp(col[r] * log_ratio);
  }
  return cache.expand(delta);
}

CovMatrix update_cov_partial(const CovMatrix& old, const DistanceCache& cache, std::size_t k, double rho_new,
                             double rho_old, double lambda_a) {
  if (old.c.rows() != cache.n1() || old.c.cols() != cache.n2()) {
    throw DataError(DataError::Code::Shape, "update_cov_partial: covariance does not match cache");
  }
  if (rho_new == rho_old) return CovMatrix{old.c, old.chol};
  const double offset = 1.0 / lambda_a;
  Eigen::MatrixXd delta = rho_change_factor(cache, k, rho_new, rho_old);
  Eigen::MatrixXd c = ((old.c.array() - offset) * delta.array() + offset).matrix();
  return CovMatrix{std::move(c), std::nullopt};
}

// ---------------------------------------------------------------------------
// Knots and low-rank algebra

KnotLayout knot_layout(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  if (m < 1 || m >= n) {
    throw ConfigError("select_knots: need 1 <= m < n (got m=" + std::to_string(m) + ", n=" + std::to_string(n) + ")");
  }
  std::mt19937_64 rng(seed);
  KnotLayout layout;
  layout.order.resize(static_cast<std::size_t>(n));
  std::iota(layout.order.begin(), layout.order.end(), Eigen::Index{0});
  std::shuffle(layout.order.begin(), layout.order.end(), rng);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::Index lo = j * n / m;
    const Eigen::Index hi = (j + 1) * n / m;  // exclusive
    std::uniform_int_distribution<Eigen::Index> pick(lo, hi - 1);
    layout.knots.push_back(layout.order[static_cast<std::size_t>(pick(rng))]);
  }
  return layout;
}

std::vector<Eigen::Index> select_knots(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  return knot_layout(n, m, seed).knots;
}

Eigen::MatrixXd woodbury_inverse(const Eigen::MatrixXd& c_mm, const Eigen::MatrixXd& c_mn, double r) {
  if (c_mm.rows() != c_mm.cols() || c_mn.rows() != c_mm.rows()) {
    throw DataError(DataError::Code::Shape, "woodbury_inverse: C_mm must be m x m and C_mn m x n");
  }
  if (!(r > 0.0)) throw ConfigError("woodbury_inverse: precision r must be positive");
  // Whitened form: with V = L^{-1} C_mn (C_mm = L L'), the inverse is
  // r I - r^2 V' (I + r V V')^{-1} V, and I + r V V' is well conditioned.
  const Eigen::MatrixXd v = factorize(c_mm).lower().triangularView<Eigen::Lower>().solve(c_mn);
  Eigen::MatrixXd inner = Eigen::MatrixXd::Identity(c_mm.rows(), c_mm.rows());
  inner.noalias() += r * v * v.transpose();
  const Eigen::MatrixXd u = factorize(inner).lower().triangularView<Eigen::Lower>().solve(v);
  Eigen::MatrixXd out = -(r * r) * (u.transpose() * u);
  out.diagonal().array() += r;
  return out;
}

Eigen::VectorXd project_latent(const Eigen::VectorXd& z_star, const Eigen::MatrixXd& c_mm,
                               const Eigen::MatrixXd& c_mn) {
  if (c_mm.rows() != c_mm.cols() || c_mn.rows() != c_mm.rows() || z_star.size() != c_mm.rows()) {
    throw DataError(DataError::Code::Shape, "project_latent: shapes are not conformable");
  }
  CholeskyFactor f = factorize(c_mm);
  return c_mn.transpose() * f.solve(z_star);
}

}  // namespace gpvs
