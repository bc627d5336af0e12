#include "gpvs/likelihood.hpp"

#include "gpvs/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace gpvs {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void require_size(Eigen::Index a, std::size_t b, const char* what) {
  if (static_cast<std::size_t>(a) != b) {
    throw DataError(DataError::Code::Shape, std::string(what) + ": response and latent lengths differ");
  }
}

}  // namespace

double gaussian_logdensity(const Eigen::VectorXd& y, const CholeskyFactor& sigma) {
  if (y.size() != sigma.size()) throw DataError(DataError::Code::Shape, "gaussian density: size mismatch");
  const Eigen::VectorXd w = sigma.half_solve(y);
  return -0.5 * (static_cast<double>(y.size()) * kLog2Pi + sigma.log_det() + w.squaredNorm());
}

double loglik_regression_marginal(const Eigen::VectorXd& y, const Eigen::MatrixXd& c, double r) {
  if (!(r > 0.0)) throw ConfigError("regression likelihood: r must be positive");
  Eigen::MatrixXd sigma = c;
  sigma.diagonal().array() += 1.0 / r;
  return gaussian_logdensity(y, factorize(sigma));
}

double loglik_regression_projected(const Eigen::VectorXd& y, const Eigen::MatrixXd& c_mm,
                                   const Eigen::MatrixXd& c_mn, double r) {
  if (!(r > 0.0)) throw ConfigError("regression likelihood: r must be positive");
  if (c_mn.cols() != y.size() || c_mn.rows() != c_mm.rows()) {
    throw DataError(DataError::Code::Shape, "projected likelihood: shapes are not conformable");
  }
  const double n = static_cast<double>(y.size());
  // V = L^{-1} C_mn with C_mm = L L'; the covariance is I/r + V'V.
  const Eigen::MatrixXd v = factorize(c_mm).lower().triangularView<Eigen::Lower>().solve(c_mn);
  Eigen::MatrixXd inner = Eigen::MatrixXd::Identity(c_mm.rows(), c_mm.rows());
  inner.noalias() += r * v * v.transpose();
  const CholeskyFactor f_inner = factorize(inner);
  const Eigen::VectorXd w = f_inner.half_solve(v * y);
  const double quad = r * y.squaredNorm() - r * r * w.squaredNorm();
  const double log_det = f_inner.log_det() - n * std::log(r);
  return -0.5 * (n * kLog2Pi + log_det + quad);
}

double loglik_negbin(const std::vector<std::int64_t>& s, const Eigen::VectorXd& z, double tau) {
  require_size(z.size(), s.size(), "negative binomial");
  if (!(tau > 0.0)) throw ConfigError("negative binomial: tau must be positive");
  const double lg_tau = std::lgamma(tau);
  const double log_tau = std::log(tau);
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double zi = z[static_cast<Eigen::Index>(i)];
    if (!std::isfinite(std::exp(zi))) throw NumericalError("negative binomial: non-finite mean exp(z)");
    const double si = static_cast<double>(s[i]);
    // log(tau + lambda) computed as logaddexp(log tau, z)
    const double log_sum = std::max(log_tau, zi) + std::log1p(std::exp(-std::abs(log_tau - zi)));
    total += std::lgamma(si + tau) - std::lgamma(si + 1.0) - lg_tau + tau * (log_tau - log_sum) +
             si * (zi - log_sum);
  }
  return total;
}

double loglik_cox_partial(const Eigen::VectorXd& time, const std::vector<int>& event, const Eigen::VectorXd& z) {
  const auto n = static_cast<std::size_t>(time.size());
  require_size(z.size(), n, "cox");
  if (event.size() != n) throw DataError(DataError::Code::Shape, "cox: event flags and times differ in length");
  if (std::none_of(event.begin(), event.end(), [](int e) { return e == 1; })) {
    throw DataError(DataError::Code::BadCensoring, "cox: every observation is censored");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return time[static_cast<Eigen::Index>(a)] < time[static_cast<Eigen::Index>(b)];
  });

  // Walk from the latest time backwards, keeping logsumexp over the risk set.
  double total = 0.0;
  double risk_max = -std::numeric_limits<double>::infinity();
  double risk_sum = 0.0;  // sum exp(z - risk_max)
  std::size_t hi = n;
  while (hi > 0) {
    std::size_t lo = hi;
    const double t = time[static_cast<Eigen::Index>(order[hi - 1])];
    while (lo > 0 && time[static_cast<Eigen::Index>(order[lo - 1])] == t) --lo;
    double event_z = 0.0;
    std::size_t deaths = 0;
    for (std::size_t j = lo; j < hi; ++j) {
      const double zj = z[static_cast<Eigen::Index>(order[j])];
      if (zj > risk_max) {
        risk_sum *= std::exp(risk_max - zj);
        risk_max = zj;
      }
      risk_sum += std::exp(zj - risk_max);
      if (event[order[j]] == 1) {
        event_z += zj;
        ++deaths;
      }
    }
    if (deaths > 0) total += event_z - static_cast<double>(deaths) * (risk_max + std::log(risk_sum));
    hi = lo;
  }
  return total;
}

double log1pexp(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double loglik_logit(const std::vector<int>& t, const Eigen::VectorXd& z) {
  require_size(z.size(), t.size(), "logit");
  double total = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double zi = z[static_cast<Eigen::Index>(i)];
    total += (t[i] == 1 ? zi : 0.0) - log1pexp(zi);
  }
  return total;
}

double draw_truncated_normal_above(double lower, Random& rng) {
  if (lower < 0.45) {
    while (true) {
      const double x = rng.normal();
      if (x > lower) return x;
    }
  }
  // Exponential rejection sampler with the optimal rate for the tail.
  const double rate = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
  while (true) {
    const double x = lower + rng.exponential() / rate;
    const double d = x - rate;
    if (rng.uniform() <= std::exp(-0.5 * d * d)) return x;
  }
}

Eigen::VectorXd gibbs_update_probit_latents(const std::vector<int>& t, const Eigen::VectorXd& z, Random& rng) {
  require_size(z.size(), t.size(), "probit");
  Eigen::VectorXd out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (t[static_cast<std::size_t>(i)] == 1) {
      out[i] = z[i] + draw_truncated_normal_above(-z[i], rng);
    } else {
      out[i] = z[i] - draw_truncated_normal_above(z[i], rng);
    }
  }
  return out;
}

std::int64_t draw_negbin(double lambda, double tau, Random& rng) {
  return rng.poisson(rng.gamma(tau, tau / lambda));
}

}  // namespace gpvs
