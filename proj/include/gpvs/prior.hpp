#pragma once

#include "gpvs/kernel.hpp"
#include "gpvs/likelihood.hpp"

#include <cstdint>
#include <vector>

namespace gpvs {

/// Slab density on [0,1] for an included coordinate's rho.
struct Slab {
  enum class Kind { Uniform, Beta };
  Kind kind = Kind::Uniform;
  double a = 1.0;
  double b = 1.0;

  static Slab uniform() { return {}; }
  static Slab beta(double a, double b) { return {Kind::Beta, a, b}; }
};

/// Prior on an inclusion vector.
///
/// FixedAlpha: independent Bernoulli(alpha_k); `alphas` may hold one value
/// per coordinate, otherwise `alpha` applies to all. BetaBernoulli: alpha
/// integrated out under Beta(2 mean, 2 (1 - mean)), with mean = `alpha`.
struct InclusionPrior {
  enum class Kind { FixedAlpha, BetaBernoulli };
  Kind kind = Kind::FixedAlpha;
  double alpha = 0.025;
  std::vector<double> alphas;

  double alpha_at(std::size_t k) const { return alphas.empty() ? alpha : alphas[k]; }
};

/// Gamma(shape, rate); mean shape / rate.
struct GammaPrior {
  double shape = 1.0;
  double rate = 1.0;
  double mean() const { return shape / rate; }
};

struct PriorConfig {
  Slab slab;
  InclusionPrior inclusion;
  GammaPrior lambda_a{1.0, 1.0};
  GammaPrior lambda_z{1.0, 1.0};
  GammaPrior lambda_z2{1.0, 1.0};
  GammaPrior r{2.0, 0.1};
  GammaPrior tau{1.0, 1.0};
  GammaPrior nu{1.0, 1.0};

  /// Throws ConfigError when a parameter is out of range.
  void validate(std::size_t p) const;
  const GammaPrior& lambda_z_prior(std::size_t term) const { return term == 0 ? lambda_z : lambda_z2; }
};

/// Log prior of rho_k given gamma_k. Zero on the spike (gamma = 0, rho = 1);
/// slab log-density otherwise. Throws ConfigError on a spike-state violation.
double logprior_rho_given_gamma(double rho, bool gamma, const Slab& slab);

/// Joint-product form: one gamma_k governing rho1_k and rho2_k.
double logprior_rho_pair_given_gamma(double rho1, double rho2, bool gamma, const Slab& slab);

double logprior_gamma_vector(const std::vector<std::uint8_t>& gamma, const InclusionPrior& inclusion);

/// Gamma(shape, rate) log-density; throws ConfigError for x <= 0.
double logprior_positive(double x, double shape, double rate);
inline double logprior_positive(double x, const GammaPrior& g) { return logprior_positive(x, g.shape, g.rate); }

/// Sum over selection sets of the gamma prior plus every included rho's slab.
double logprior_selection(const KernelParams& params, const PriorConfig& prior);

/// Gamma priors on every precision (and nu for the Matern family).
double logprior_precisions(const KernelParams& params, const PriorConfig& prior);

}  // namespace gpvs
