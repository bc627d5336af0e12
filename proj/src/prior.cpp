#include "gpvs/prior.hpp"

#include "gpvs/error.hpp"

#include <cmath>

namespace gpvs {

namespace {

double log_beta_fn(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

void check_gamma_prior(const GammaPrior& g, const char* name) {
  if (!(g.shape > 0.0) || !(g.rate > 0.0)) {
    throw ConfigError(std::string("prior for ") + name + ": shape and rate must be positive");
  }
}

}  // namespace

void PriorConfig::validate(std::size_t p) const {
  if (slab.kind == Slab::Kind::Beta && (!(slab.a > 0.0) || !(slab.b > 0.0))) {
    throw ConfigError("beta slab parameters must be positive");
  }
  if (!(inclusion.alpha > 0.0 && inclusion.alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (!inclusion.alphas.empty()) {
    if (inclusion.alphas.size() != p) throw ConfigError("per-coordinate alphas must have one entry per predictor");
    for (double a : inclusion.alphas) {
      if (!(a > 0.0 && a < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    }
  }
  check_gamma_prior(lambda_a, "lambda_a");
  check_gamma_prior(lambda_z, "lambda_z");
  check_gamma_prior(lambda_z2, "lambda_z2");
  check_gamma_prior(r, "r");
  check_gamma_prior(tau, "tau");
  check_gamma_prior(nu, "nu");
}

double logprior_rho_given_gamma(double rho, bool gamma, const Slab& slab) {
  if (!gamma) {
    if (rho != 1.0) throw ConfigError("spike state violated: excluded coordinate with rho != 1");
    return 0.0;
  }
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("rho outside [0,1]");
  if (slab.kind == Slab::Kind::Uniform) return 0.0;
  return (slab.a - 1.0) * std::log(rho) + (slab.b - 1.0) * std::log1p(-rho) - log_beta_fn(slab.a, slab.b);
}

double logprior_rho_pair_given_gamma(double rho1, double rho2, bool gamma, const Slab& slab) {
  return logprior_rho_given_gamma(rho1, gamma, slab) + logprior_rho_given_gamma(rho2, gamma, slab);
}

double logprior_gamma_vector(const std::vector<std::uint8_t>& gamma, const InclusionPrior& inclusion) {
  if (inclusion.kind == InclusionPrior::Kind::FixedAlpha) {
    double total = 0.0;
    for (std::size_t k = 0; k < gamma.size(); ++k) {
      const double a = inclusion.alpha_at(k);
      total += gamma[k] ? std::log(a) : std::log1p(-a);
    }
    return total;
  }
  const double a = 2.0 * inclusion.alpha;
  const double b = 2.0 * (1.0 - inclusion.alpha);
  double k = 0.0;
  for (auto g : gamma) k += g ? 1.0 : 0.0;
  const double p = static_cast<double>(gamma.size());
  return log_beta_fn(k + a, p - k + b) - log_beta_fn(a, b);
}

double logprior_positive(double x, double shape, double rate) {
  if (!(x > 0.0)) throw ConfigError("gamma prior evaluated at a non-positive value");
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double logprior_selection(const KernelParams& params, const PriorConfig& prior) {
  double total = 0.0;
  for (std::size_t s = 0; s < params.selection_sets(); ++s) {
    total += logprior_gamma_vector(params.gamma(s), prior.inclusion);
    for (auto t : params.terms_of_set(s)) {
      for (std::size_t k = 0; k < params.p(); ++k) {
        total += logprior_rho_given_gamma(params.rho(t, k), params.included(s, k), prior.slab);
      }
    }
  }
  return total;
}

double logprior_precisions(const KernelParams& params, const PriorConfig& prior) {
  double total = logprior_positive(params.lambda_a(), prior.lambda_a);
  for (std::size_t t = 0; t < params.terms(); ++t) {
    total += logprior_positive(params.lambda_z(t), prior.lambda_z_prior(t));
  }
  if (params.family() == KernelFamily::Matern) total += logprior_positive(params.nu(), prior.nu);
  return total;
}

}  // namespace gpvs
