#pragma once

#include "gpvs/kernel.hpp"
#include "gpvs/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace gpvs {

/// Model-specific parameters outside the covariance.
struct NuisanceBlock {
  double r = 20.0;   // regression error precision
  double tau = 1.0;  // negative-binomial over-dispersion
};

/// Explicit latent values for models that cannot marginalize z.
struct LatentState {
  Eigen::VectorXd z;
  Eigen::VectorXd aug_y;  // probit only
};

/// log N(y; 0, sigma) given a factor of sigma.
double gaussian_logdensity(const Eigen::VectorXd& y, const CholeskyFactor& sigma);

/// log N(y; 0, C + I/r).
double loglik_regression_marginal(const Eigen::VectorXd& y, const Eigen::MatrixXd& c, double r);

/// log N(y; 0, I/r + C_mn' C_mm^{-1} C_mn) using only m x m factorizations.
double loglik_regression_projected(const Eigen::VectorXd& y, const Eigen::MatrixXd& c_mm,
                                   const Eigen::MatrixXd& c_mn, double r);

/// Negative-binomial log-likelihood with mean exp(z_i) and dispersion tau.
double loglik_negbin(const std::vector<std::int64_t>& s, const Eigen::VectorXd& z, double tau);

/// Cox partial log-likelihood, Breslow handling of tied event times.
double loglik_cox_partial(const Eigen::VectorXd& time, const std::vector<int>& event, const Eigen::VectorXd& z);

/// Bernoulli log-likelihood with logistic link.
double loglik_logit(const std::vector<int>& t, const Eigen::VectorXd& z);

/// log(1 + exp(x)) without overflow.
double log1pexp(double x);

/// Standard normal truncated to (lower, inf).
double draw_truncated_normal_above(double lower, Random& rng);

/// aug_y_i ~ N(z_i, 1) truncated to (0, inf) when t_i = 1, to (-inf, 0) when t_i = 0.
Eigen::VectorXd gibbs_update_probit_latents(const std::vector<int>& t, const Eigen::VectorXd& z, Random& rng);

/// Negative-binomial draw as a Gamma-Poisson mixture with mean lambda.
std::int64_t draw_negbin(double lambda, double tau, Random& rng);

}  // namespace gpvs
